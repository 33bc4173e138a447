#pragma once

#include "lingoq/error.hpp"
#include "lingoq/question.hpp"
#include "lingoq/time.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace lingoq {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Query intent

enum class QueryIntent { lookup, translation, proofread, text };

inline constexpr std::string_view to_string(QueryIntent i) {
  switch (i) {
    case QueryIntent::lookup: return "lookup";
    case QueryIntent::translation: return "translation";
    case QueryIntent::proofread: return "proofread";
    case QueryIntent::text: return "text";
  }
  return "text";
}

/// Strict: anything outside the four labels is an error, never coerced.
inline std::optional<QueryIntent> intent_from_string(std::string_view s) {
  if (s == "lookup") return QueryIntent::lookup;
  if (s == "translation") return QueryIntent::translation;
  if (s == "proofread") return QueryIntent::proofread;
  if (s == "text") return QueryIntent::text;
  return std::nullopt;
}

inline QueryIntent parse_intent(std::string_view s) {
  if (auto i = intent_from_string(s)) return *i;
  fail(ErrorCode::schema_violation, "unknown intent: " + std::string(s));
}

inline void to_json(Json& j, QueryIntent i) { j = to_string(i); }
inline void from_json(const Json& j, QueryIntent& i) { i = parse_intent(j.get<std::string>()); }

// ---------------------------------------------------------------------------
// Structured responses

struct Dictionary {
  std::string headword;
  std::vector<std::string> meanings;
  std::vector<std::string> synonyms;
  std::vector<std::string> example_sentences;
  bool operator==(const Dictionary&) const = default;
};

struct Translation {
  std::string original;
  std::string translated;
  std::string explanation;
  bool operator==(const Translation&) const = default;
};

struct Refinement {
  std::string original;
  std::string refined;
  std::string rationale;
  bool operator==(const Refinement&) const = default;
};

struct TextBody {
  std::string body;
  bool operator==(const TextBody&) const = default;
};

using StructuredResponse = std::variant<Dictionary, Translation, Refinement, TextBody>;

/// The payload variant each intent must produce.
inline QueryIntent intent_of(const StructuredResponse& r) {
  switch (r.index()) {
    case 0: return QueryIntent::lookup;
    case 1: return QueryIntent::translation;
    case 2: return QueryIntent::proofread;
    default: return QueryIntent::text;
  }
}

inline std::string_view payload_type_name(const StructuredResponse& r) {
  static constexpr std::string_view names[] = {"dictionary", "translation", "refinement", "text"};
  return names[r.index()];
}

/// Checks the payload's own invariants; returns a description of the first
/// violation or nullopt.
inline std::optional<std::string> payload_violation(const StructuredResponse& r) {
  if (const auto* d = std::get_if<Dictionary>(&r)) {
    if (is_blank_text(d->headword)) return "dictionary headword is empty";
    if (d->meanings.empty()) return "dictionary has no meanings";
  } else if (const auto* t = std::get_if<Translation>(&r)) {
    if (is_blank_text(t->original) || is_blank_text(t->translated)) {
      return "translation needs both original and translated text";
    }
  } else if (const auto* f = std::get_if<Refinement>(&r)) {
    if (is_blank_text(f->original)) return "refinement original is empty";
    if (f->original == f->refined && is_blank_text(f->rationale)) {
      return "unchanged refinement must state why in its rationale";
    }
  }
  return std::nullopt;
}

inline void to_json(Json& j, const StructuredResponse& r) {
  std::visit(
      [&j](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Dictionary>) {
          j = {{"type", "dictionary"},
               {"headword", v.headword},
               {"meanings", v.meanings},
               {"synonyms", v.synonyms},
               {"example_sentences", v.example_sentences}};
        } else if constexpr (std::is_same_v<T, Translation>) {
          j = {{"type", "translation"},
               {"original", v.original},
               {"translated", v.translated},
               {"explanation", v.explanation}};
        } else if constexpr (std::is_same_v<T, Refinement>) {
          j = {{"type", "refinement"}, {"original", v.original}, {"refined", v.refined}, {"rationale", v.rationale}};
        } else {
          j = {{"type", "text"}, {"body", v.body}};
        }
      },
      r);
}

namespace detail {
inline std::vector<std::string> string_list(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (it->is_string()) return {it->get<std::string>()};
  return it->get<std::vector<std::string>>();
}

inline std::string required_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    fail(ErrorCode::parse_error, std::string("missing required field '") + key + "'", {{"field", key}});
  }
  return it->get<std::string>();
}
}  // namespace detail

/// Decodes a payload, using "type" when present and the field set otherwise.
inline StructuredResponse payload_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorCode::parse_error, "payload is not a JSON object");
  std::string type = j.value("type", j.value("output_type", std::string{}));
  for (auto& c : type) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (type.empty()) {
    if (j.contains("refined")) type = "refinement";
    else if (j.contains("translated")) type = "translation";
    else if (j.contains("headword")) type = "dictionary";
    else if (j.contains("body")) type = "text";
  }
  StructuredResponse out;
  if (type == "dictionary" || type == "dictionaryoutput") {
    out = Dictionary{detail::required_string(j, "headword"), detail::string_list(j, "meanings"),
                     detail::string_list(j, "synonyms"), detail::string_list(j, "example_sentences")};
  } else if (type == "translation" || type == "translationoutput") {
    out = Translation{detail::required_string(j, "original"), detail::required_string(j, "translated"),
                      j.value("explanation", std::string{})};
  } else if (type == "refinement" || type == "refinementoutput") {
    out = Refinement{detail::required_string(j, "original"), detail::required_string(j, "refined"),
                     j.value("rationale", j.value("refinement_rationale", std::string{}))};
  } else if (type == "text") {
    out = TextBody{detail::required_string(j, "body")};
  } else {
    fail(ErrorCode::parse_error, "cannot determine payload type", {{"payload", j}});
  }
  if (auto v = payload_violation(out)) fail(ErrorCode::parse_error, *v, {{"payload", j}});
  return out;
}

inline void from_json(const Json& j, StructuredResponse& r) { r = payload_from_json(j); }

// ---------------------------------------------------------------------------
// Task context

enum class ContextSource { client_supplied, image_understanding };

struct TaskContext {
  std::string surrounding_text;
  std::string task_description;
  ContextSource source = ContextSource::client_supplied;
  bool operator==(const TaskContext&) const = default;
};

inline void check_context(const TaskContext& c) {
  if (is_blank_text(c.surrounding_text) || is_blank_text(c.task_description)) {
    fail(ErrorCode::schema_violation, "task context needs non-empty surrounding_text and task_description");
  }
}

inline void to_json(Json& j, const TaskContext& c) {
  j = {{"surrounding_text", c.surrounding_text},
       {"task_description", c.task_description},
       {"source", c.source == ContextSource::client_supplied ? "client_supplied" : "image_understanding"}};
}

inline void from_json(const Json& j, TaskContext& c) {
  c.surrounding_text = j.at("surrounding_text").get<std::string>();
  c.task_description = j.at("task_description").get<std::string>();
  const auto src = j.value("source", std::string{"client_supplied"});
  if (src == "client_supplied") c.source = ContextSource::client_supplied;
  else if (src == "image_understanding") c.source = ContextSource::image_understanding;
  else fail(ErrorCode::schema_violation, "unknown context source: " + src);
  check_context(c);
}

// ---------------------------------------------------------------------------
// Chat

enum class Author { user, assistant };

struct ChatMessage {
  std::string id;
  std::string thread_id;
  Author author = Author::user;
  std::string text;
  QueryIntent intent = QueryIntent::text;
  std::optional<StructuredResponse> payload;
  bool marked = false;
  std::optional<TaskContext> context;
  Timestamp created_at{};

  static ChatMessage from_user(std::string id, std::string thread_id, std::string text, QueryIntent intent,
                               Timestamp at) {
    return {std::move(id), std::move(thread_id), Author::user, std::move(text), intent, std::nullopt, false,
            std::nullopt, at};
  }

  static ChatMessage from_assistant(std::string id, std::string thread_id, StructuredResponse payload,
                                    Timestamp at) {
    ChatMessage m{std::move(id), std::move(thread_id), Author::assistant, {}, intent_of(payload),
                  std::move(payload), false, std::nullopt, at};
    m.text = render_plain(*m.payload);
    return m;
  }

  /// Plain-text rendering of a payload, used as the message's text.
  static std::string render_plain(const StructuredResponse& r) {
    return std::visit(
        [](const auto& v) -> std::string {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Dictionary>) {
            std::string s = v.headword;
            for (const auto& m : v.meanings) s += "\n- " + m;
            return s;
          } else if constexpr (std::is_same_v<T, Translation>) {
            return v.translated;
          } else if constexpr (std::is_same_v<T, Refinement>) {
            return v.refined;
          } else {
            return v.body;
          }
        },
        r);
  }

  bool operator==(const ChatMessage&) const = default;
};

inline std::optional<std::string> message_violation(const ChatMessage& m) {
  const bool assistant = m.author == Author::assistant;
  if (m.marked && !assistant) return "only assistant messages can be marked";
  if (assistant != m.payload.has_value()) return "payload must be present exactly on assistant messages";
  if (assistant && intent_of(*m.payload) != m.intent) return "payload variant does not match intent";
  return std::nullopt;
}

inline void to_json(Json& j, const ChatMessage& m) {
  j = {{"id", m.id},
       {"thread_id", m.thread_id},
       {"author", m.author == Author::user ? "user" : "assistant"},
       {"text", m.text},
       {"intent", m.intent},
       {"marked", m.marked},
       {"created_at", to_epoch(m.created_at)}};
  j["payload"] = m.payload ? Json(*m.payload) : Json(nullptr);
  j["context"] = m.context ? Json(*m.context) : Json(nullptr);
}

inline void from_json(const Json& j, ChatMessage& m) {
  m.id = j.at("id").get<std::string>();
  m.thread_id = j.at("thread_id").get<std::string>();
  const auto author = j.at("author").get<std::string>();
  if (author == "user") m.author = Author::user;
  else if (author == "assistant") m.author = Author::assistant;
  else fail(ErrorCode::schema_violation, "unknown author: " + author);
  m.text = j.value("text", std::string{});
  m.intent = j.at("intent").get<QueryIntent>();
  m.marked = j.value("marked", false);
  m.created_at = from_epoch(j.at("created_at").get<std::int64_t>());
  m.payload.reset();
  m.context.reset();
  if (auto it = j.find("payload"); it != j.end() && !it->is_null()) m.payload = payload_from_json(*it);
  if (auto it = j.find("context"); it != j.end() && !it->is_null()) m.context = it->get<TaskContext>();
  if (auto v = message_violation(m)) fail(ErrorCode::schema_violation, *v);
}

struct ChatThread {
  std::string id;
  std::string user_id;
  std::string title;
  Timestamp created_at{};
  std::vector<ChatMessage> messages;

  const ChatMessage* find(const std::string& message_id) const {
    for (const auto& m : messages) {
      if (m.id == message_id) return &m;
    }
    return nullptr;
  }
  bool operator==(const ChatThread&) const = default;
};

inline void to_json(Json& j, const ChatThread& t) {
  j = {{"id", t.id},
       {"user_id", t.user_id},
       {"title", t.title},
       {"created_at", to_epoch(t.created_at)},
       {"messages", t.messages}};
}

inline void from_json(const Json& j, ChatThread& t) {
  t.id = j.at("id").get<std::string>();
  t.user_id = j.at("user_id").get<std::string>();
  t.title = j.value("title", std::string{});
  t.created_at = from_epoch(j.at("created_at").get<std::int64_t>());
  t.messages = j.value("messages", std::vector<ChatMessage>{});
}

// ---------------------------------------------------------------------------
// Pool and policy

struct PoolEntry {
  Question question;
  std::string user_id;
  int exposures = 0;
  int attempts = 0;
  int wrong_attempts = 0;
  std::optional<Timestamp> last_practiced;
  Timestamp created_at{};

  bool is_new() const { return exposures == 0; }
  bool operator==(const PoolEntry&) const = default;
};

inline std::optional<std::string> entry_violation(const PoolEntry& e) {
  if (e.exposures < 0 || e.attempts < 0 || e.wrong_attempts < 0) return "counters must be non-negative";
  if (e.wrong_attempts > e.attempts) return "wrong_attempts exceeds attempts";
  if (e.exposures == 0 && e.attempts > 0) return "attempts recorded on an unexposed question";
  return std::nullopt;
}

inline void to_json(Json& j, const PoolEntry& e) {
  j = {{"question", e.question},
       {"user_id", e.user_id},
       {"exposures", e.exposures},
       {"attempts", e.attempts},
       {"wrong_attempts", e.wrong_attempts},
       {"created_at", to_epoch(e.created_at)}};
  j["last_practiced"] = e.last_practiced ? Json(to_epoch(*e.last_practiced)) : Json(nullptr);
}

inline PoolEntry pool_entry_from_json(const Json& j) {
  PoolEntry e{j.at("question").get<Question>(),
              j.at("user_id").get<std::string>(),
              j.value("exposures", 0),
              j.value("attempts", 0),
              j.value("wrong_attempts", 0),
              std::nullopt,
              from_epoch(j.at("created_at").get<std::int64_t>())};
  if (auto it = j.find("last_practiced"); it != j.end() && !it->is_null()) {
    e.last_practiced = from_epoch(it->get<std::int64_t>());
  }
  if (auto v = entry_violation(e)) fail(ErrorCode::schema_violation, *v);
  return e;
}

struct QuizPolicy {
  int quiz_size = 10;
  int new_count = 7;
  int review_count = 3;
  int options_per_question = 3;
  int questions_per_pair = 2;
  int max_generation_attempts = 3;
  Seconds poll_interval{300};

  bool operator==(const QuizPolicy&) const = default;
};

/// Every violated invariant; empty means the policy is usable.
inline std::vector<std::string> validate_policy(const QuizPolicy& p) {
  std::vector<std::string> errors;
  if (p.quiz_size <= 0 || p.new_count <= 0 || p.review_count <= 0 || p.options_per_question <= 0 ||
      p.questions_per_pair <= 0 || p.max_generation_attempts <= 0 || p.poll_interval.count() <= 0) {
    errors.emplace_back("counts strictly positive");
  }
  if (p.new_count + p.review_count != p.quiz_size) errors.emplace_back("counts must sum to quiz_size");
  if (p.options_per_question != static_cast<int>(kOptionsPerQuestion)) {
    errors.emplace_back("options_per_question must be 3");
  }
  return errors;
}

inline void to_json(Json& j, const QuizPolicy& p) {
  j = {{"quiz_size", p.quiz_size},
       {"new_count", p.new_count},
       {"review_count", p.review_count},
       {"options_per_question", p.options_per_question},
       {"questions_per_pair", p.questions_per_pair},
       {"max_generation_attempts", p.max_generation_attempts},
       {"poll_interval_seconds", p.poll_interval.count()}};
}

inline void from_json(const Json& j, QuizPolicy& p) {
  QuizPolicy d;
  p.quiz_size = j.value("quiz_size", d.quiz_size);
  p.new_count = j.value("new_count", d.new_count);
  p.review_count = j.value("review_count", d.review_count);
  p.options_per_question = j.value("options_per_question", d.options_per_question);
  p.questions_per_pair = j.value("questions_per_pair", d.questions_per_pair);
  p.max_generation_attempts = j.value("max_generation_attempts", d.max_generation_attempts);
  p.poll_interval = Seconds{j.value("poll_interval_seconds", d.poll_interval.count())};
}

// ---------------------------------------------------------------------------
// Question evaluation

struct EvaluationResult {
  bool answerability = false;
  bool proficiency = false;
  std::string rationale;

  bool passed() const { return answerability && proficiency; }
  bool operator==(const EvaluationResult&) const = default;
};

inline std::optional<std::string> evaluation_violation(const EvaluationResult& e) {
  if (!e.passed() && is_blank_text(e.rationale)) return "a failing evaluation must carry a rationale";
  return std::nullopt;
}

inline void to_json(Json& j, const EvaluationResult& e) {
  j = {{"answerability", e.answerability}, {"proficiency", e.proficiency}, {"rationale", e.rationale}};
}

inline void from_json(const Json& j, EvaluationResult& e) {
  e.answerability = j.at("answerability").get<bool>();
  e.proficiency = j.at("proficiency").get<bool>();
  e.rationale = j.value("rationale", std::string{});
  if (auto v = evaluation_violation(e)) fail(ErrorCode::schema_violation, *v);
}

// ---------------------------------------------------------------------------
// Query-response pairs handed from conversation to question generation

struct QueryPair {
  std::string id;
  std::string user_id;
  std::string thread_id;
  ChatMessage query;
  ChatMessage response;
  std::vector<ChatMessage> history;  // turns before `query`
  Timestamp created_at{};

  bool operator==(const QueryPair&) const = default;
};

inline std::optional<std::string> pair_violation(const QueryPair& p) {
  if (p.query.author != Author::user) return "pair query must be a user message";
  if (p.response.author != Author::assistant || !p.response.payload) return "pair response must carry a payload";
  if (auto v = message_violation(p.response)) return v;
  return std::nullopt;
}

inline void to_json(Json& j, const QueryPair& p) {
  j = {{"id", p.id},
       {"user_id", p.user_id},
       {"thread_id", p.thread_id},
       {"query", p.query},
       {"response", p.response},
       {"history", p.history},
       {"created_at", to_epoch(p.created_at)}};
}

inline void from_json(const Json& j, QueryPair& p) {
  p.id = j.at("id").get<std::string>();
  p.user_id = j.at("user_id").get<std::string>();
  p.thread_id = j.value("thread_id", std::string{});
  p.query = j.at("query").get<ChatMessage>();
  p.response = j.at("response").get<ChatMessage>();
  p.history = j.value("history", std::vector<ChatMessage>{});
  p.created_at = from_epoch(j.at("created_at").get<std::int64_t>());
  if (auto v = pair_violation(p)) fail(ErrorCode::schema_violation, *v);
}

}  // namespace lingoq
