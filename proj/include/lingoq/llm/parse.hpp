#pragma once

#include "lingoq/domain.hpp"
#include "lingoq/llm/prompt.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lingoq::llm {

using StructuredValue =
    std::variant<QueryIntent, StructuredResponse, std::vector<QuestionDraft>, EvaluationResult, TaskContext, bool>;

namespace detail {

inline std::string excerpt(std::string_view raw, std::size_t limit = 240) {
  if (raw.size() <= limit) return std::string(raw);
  return std::string(raw.substr(0, limit)) + "...";
}

[[noreturn]] inline void parse_fail(const std::string& what, std::string_view span) {
  fail(ErrorCode::parse_error, what, {{"span", excerpt(span)}});
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Index one past the bracket matching the one at `open`, or npos.
inline std::size_t match_bracket(std::string_view s, std::size_t open) {
  const char o = s[open];
  const char c = o == '{' ? '}' : ']';
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char ch = s[i];
    if (in_string) {
      if (ch == '\\') ++i;
      else if (ch == '"') in_string = false;
      continue;
    }
    if (ch == '"') in_string = true;
    else if (ch == o) ++depth;
    else if (ch == c && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Pulls the first JSON value out of model output, tolerating code fences
/// and surrounding prose.
inline nlohmann::json extract_json(std::string_view raw) {
  std::string_view body = raw;
  if (auto fence = raw.find("```"); fence != std::string_view::npos) {
    auto start = fence + 3;
    while (start < raw.size() && std::isalpha(static_cast<unsigned char>(raw[start]))) ++start;
    auto end = raw.find("```", start);
    body = raw.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
  }
  const auto open = body.find_first_of("{[");
  if (open == std::string_view::npos) detail::parse_fail("no JSON value in provider output", raw);
  const auto close = detail::match_bracket(body, open);
  if (close == std::string_view::npos) detail::parse_fail("unterminated JSON value in provider output", raw);
  try {
    return nlohmann::json::parse(body.substr(open, close - open));
  } catch (const nlohmann::json::exception& e) {
    detail::parse_fail(std::string("malformed JSON: ") + e.what(), body.substr(open, close - open));
  }
}

/// One bare label, optionally quoted or followed by a period. Anything else
/// is an error; labels are never searched for inside longer text.
inline QueryIntent parse_intent_label(std::string_view raw) {
  auto s = detail::trim(raw);
  if (s.rfind("```", 0) == 0) {
    s.remove_prefix(3);
    if (auto nl = s.find('\n'); nl != std::string_view::npos) {
      // A language tag on the fence line is dropped when a body follows.
      auto body = detail::trim(s.substr(nl + 1));
      while (!body.empty() && body.back() == '`') body.remove_suffix(1);
      if (!detail::trim(body).empty()) s = s.substr(nl + 1);
    }
    s = detail::trim(s);
  }
  while (!s.empty() && (s.front() == '"' || s.front() == '\'' || s.front() == '`')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == '"' || s.back() == '\'' || s.back() == '`' || s.back() == '.')) s.remove_suffix(1);
  std::string label(detail::trim(s));
  for (auto& c : label) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (auto i = intent_from_string(label)) return *i;
  detail::parse_fail("intent label is not one of lookup, translation, proofread, text", raw);
}

template <typename F>
auto with_span(std::string_view raw, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::parse_error && e.detail().contains("span")) throw;
    nlohmann::json detail = e.detail().is_object() ? e.detail() : nlohmann::json::object();
    detail["span"] = detail::excerpt(raw);
    fail(ErrorCode::parse_error, e.what(), detail);
  } catch (const nlohmann::json::exception& e) {
    detail::parse_fail(std::string("missing or mistyped field: ") + e.what(), raw);
  }
}

inline StructuredResponse parse_payload(std::string_view raw) {
  return with_span(raw, [&] { return payload_from_json(extract_json(raw)); });
}

inline std::vector<QuestionDraft> parse_question_batch(std::string_view raw) {
  return with_span(raw, [&] {
    auto j = extract_json(raw);
    if (j.is_object() && j.contains("questions")) j = j["questions"];
    if (j.is_object()) j = nlohmann::json::array({j});
    if (!j.is_array()) detail::parse_fail("question batch is not a list", raw);
    std::vector<QuestionDraft> out;
    for (const auto& item : j) out.push_back(item.get<QuestionDraft>());
    return out;
  });
}

inline EvaluationResult parse_evaluation(std::string_view raw) {
  return with_span(raw, [&] { return extract_json(raw).get<EvaluationResult>(); });
}

inline TaskContext parse_context(std::string_view raw) {
  return with_span(raw, [&] {
    auto j = extract_json(raw);
    TaskContext c;
    c.surrounding_text = lingoq::detail::required_string(j, "surrounding_text");
    c.task_description = lingoq::detail::required_string(j, "task_description");
    c.source = ContextSource::client_supplied;
    check_context(c);
    return c;
  });
}

inline bool parse_language_check(std::string_view raw) {
  return with_span(raw, [&] {
    const auto j = extract_json(raw);
    if (!j.is_object() || !j.contains("english_related") || !j["english_related"].is_boolean()) {
      detail::parse_fail("missing boolean 'english_related'", raw);
    }
    return j["english_related"].get<bool>();
  });
}

inline StructuredValue parse_structured(std::string_view raw, SchemaTag tag) {
  switch (tag) {
    case SchemaTag::intent_label: return parse_intent_label(raw);
    case SchemaTag::response_payload: return parse_payload(raw);
    case SchemaTag::question_batch: return parse_question_batch(raw);
    case SchemaTag::evaluation: return parse_evaluation(raw);
    case SchemaTag::context_extraction: return parse_context(raw);
    case SchemaTag::language_check: return parse_language_check(raw);
  }
  fail(ErrorCode::internal, "unhandled schema tag");
}

/// Inverse of parse_structured for the JSON-shaped tags.
inline std::string serialize_structured(const StructuredValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, QueryIntent>) {
          return std::string(to_string(x));
        } else if constexpr (std::is_same_v<T, bool>) {
          return nlohmann::json{{"english_related", x}}.dump();
        } else if constexpr (std::is_same_v<T, std::vector<QuestionDraft>>) {
          return nlohmann::json{{"questions", x}}.dump();
        } else {
          return nlohmann::json(x).dump();
        }
      },
      v);
}

}  // namespace lingoq::llm
