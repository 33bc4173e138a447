#pragma once

#include "lingoq/domain.hpp"
#include "lingoq/llm/parse.hpp"
#include "lingoq/llm/prompt.hpp"
#include "lingoq/llm/provider.hpp"

#include <map>
#include <optional>
#include <string>

namespace lingoq::conversation {

/// Boilerplate prepended to the user's text when an intent button is used.
/// The text intent has no template.
struct IntentTemplates {
  std::map<QueryIntent, std::string> text = {
      {QueryIntent::lookup,
       "Please explain the meaning of the following word (or expression) in detail in dictionary format"},
      {QueryIntent::translation,
       "Translate the following text naturally between English and Korean. Please also explain how the nuance "
       "and context of the sentences are reflected in the translation."},
      {QueryIntent::proofread,
       "Proofread the following text into more accurate and natural English. Please also provide an explanation "
       "of the changes and the reasons behind them."},
  };

  const std::string& for_intent(QueryIntent intent) const {
    auto it = text.find(intent);
    if (it == text.end()) fail(ErrorCode::precondition_failed, "the text intent has no template");
    return it->second;
  }
};

inline constexpr std::string_view kTemplateSeparator = "\n";

inline std::string apply_intent_template(QueryIntent intent, const std::string& user_text,
                                         const IntentTemplates& templates = {}) {
  if (intent == QueryIntent::text) fail(ErrorCode::precondition_failed, "the text intent has no template");
  return templates.for_intent(intent) + std::string(kTemplateSeparator) + user_text;
}

inline QueryIntent classify_intent(const llm::Gateway& gw, const std::string& user_text) {
  if (is_blank_text(user_text)) fail(ErrorCode::precondition_failed, "cannot classify empty text");
  auto req = llm::render_template("intent_classifier", {});
  req.add(llm::Role::user, user_text);
  return llm::parse_intent_label(gw.complete(req));
}

/// Splits a message into the template it starts with (if any) and the
/// content the user is asking about.
inline std::pair<std::string, std::string> split_query(const std::string& text, const IntentTemplates& templates) {
  for (const auto& [intent, boiler] : templates.text) {
    if (text.rfind(boiler, 0) == 0) {
      auto rest = text.substr(boiler.size());
      const auto start = rest.find_first_not_of(" \t\r\n:");
      return {boiler, start == std::string::npos ? std::string{} : rest.substr(start)};
    }
  }
  return {std::string{}, text};
}

/// The wire form of a user turn as the response generator expects it.
inline std::string format_user_turn(const std::string& text, QueryIntent intent,
                                    const std::optional<TaskContext>& context, const IntentTemplates& templates) {
  const auto [query_prompt, content] = split_query(text, templates);
  std::string out = "[Intention: " + std::string(to_string(intent)) + "]\n";
  out += "query_prompt: " + query_prompt + "\n";
  out += "content: " + content;
  if (context) {
    out += "\n[Work context]\nsurrounding_text: " + context->surrounding_text +
           "\ntask_description: " + context->task_description;
  }
  return out;
}

inline std::string format_assistant_turn(const ChatMessage& m) {
  return m.payload ? Json(*m.payload).dump() : m.text;
}

struct ResponseRequest {
  std::string text;
  QueryIntent intent = QueryIntent::text;
  std::optional<TaskContext> context;
  std::string user_language = "Korean";
};

/// Renders the full generator prompt: every prior turn of the thread plus
/// the new message. Exposed for inspection and tests.
inline llm::PromptRequest build_response_prompt(const ChatThread& thread, const ResponseRequest& r,
                                                const IntentTemplates& templates = {}) {
  auto req = llm::render_template("response_generator", {{"user_language", r.user_language}});
  for (const auto& m : thread.messages) {
    if (m.author == Author::user) {
      req.add(llm::Role::user, format_user_turn(m.text, m.intent, m.context, templates));
    } else {
      req.add(llm::Role::assistant, format_assistant_turn(m));
    }
  }
  req.add(llm::Role::user, format_user_turn(r.text, r.intent, r.context, templates));
  return req;
}

/// Produces the payload for an already-classified message. The payload
/// variant must match the intent; a mismatch is an error carrying the raw
/// provider text.
inline StructuredResponse generate_response(const llm::Gateway& gw, const ChatThread& thread,
                                            const ResponseRequest& r, const IntentTemplates& templates = {}) {
  if (is_blank_text(r.text)) fail(ErrorCode::precondition_failed, "message text is empty");
  const auto raw = gw.complete(build_response_prompt(thread, r, templates));
  StructuredResponse payload;
  if (r.intent == QueryIntent::text && raw.find('{') == std::string::npos) {
    payload = TextBody{std::string(llm::detail::trim(raw))};
    if (is_blank_text(std::get<TextBody>(payload).body)) fail(ErrorCode::parse_error, "empty text response");
  } else {
    payload = llm::parse_payload(raw);
  }
  if (intent_of(payload) != r.intent) {
    fail(ErrorCode::variant_mismatch,
         "expected a " + std::string(to_string(r.intent)) + " payload, got " + std::string(payload_type_name(payload)),
         {{"raw", raw}});
  }
  return payload;
}

namespace detail {
inline std::string squash_spaces(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}
}  // namespace detail

/// Infers the worker's task from captured text. surrounding_text must be a
/// verbatim (whitespace-insensitive) excerpt of the capture.
inline TaskContext extract_task_context(const llm::Gateway& gw, const std::string& raw_capture_text) {
  if (is_blank_text(raw_capture_text)) fail(ErrorCode::precondition_failed, "capture text is empty");
  auto req = llm::render_template("context_extractor", {});
  req.add(llm::Role::user, raw_capture_text);
  const auto raw = gw.complete(req);
  auto ctx = llm::parse_context(raw);
  if (detail::squash_spaces(raw_capture_text).find(detail::squash_spaces(ctx.surrounding_text)) ==
      std::string::npos) {
    fail(ErrorCode::parse_error, "surrounding_text is not an excerpt of the capture",
         {{"span", ctx.surrounding_text}});
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Thread mutations. Each returns the updated message.

inline ChatMessage& find_message(ChatThread& thread, const std::string& message_id) {
  for (auto& m : thread.messages) {
    if (m.id == message_id) return m;
  }
  fail(ErrorCode::not_found, "unknown message " + message_id);
}

inline ChatMessage attach_context(ChatThread& thread, const std::string& message_id, const TaskContext& ctx) {
  auto& m = find_message(thread, message_id);
  if (m.author != Author::user) fail(ErrorCode::precondition_failed, "context attaches to user messages only");
  if (m.context) fail(ErrorCode::duplicate_context, "message " + message_id + " already has context");
  check_context(ctx);
  m.context = ctx;
  return m;
}

inline ChatMessage set_mark(ChatThread& thread, const std::string& message_id, bool marked) {
  auto& m = find_message(thread, message_id);
  if (m.author != Author::assistant) fail(ErrorCode::precondition_failed, "only assistant messages can be marked");
  m.marked = marked;
  return m;
}

}  // namespace lingoq::conversation
