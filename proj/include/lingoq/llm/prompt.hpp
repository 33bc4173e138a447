#pragma once

#include "lingoq/error.hpp"
#include "lingoq/prompt_assets.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace lingoq::llm {

/// Which structured output a request expects back.
enum class SchemaTag {
  intent_label,
  response_payload,
  question_batch,
  evaluation,
  context_extraction,
  language_check,
};

constexpr std::string_view to_string(SchemaTag t) {
  switch (t) {
    case SchemaTag::intent_label: return "intent_label";
    case SchemaTag::response_payload: return "response_payload";
    case SchemaTag::question_batch: return "question_batch";
    case SchemaTag::evaluation: return "evaluation";
    case SchemaTag::context_extraction: return "context_extraction";
    case SchemaTag::language_check: return "language_check";
  }
  return "";
}

enum class Role { user, assistant };

struct PromptMessage {
  Role role = Role::user;
  std::string text;
  bool operator==(const PromptMessage&) const = default;
};

using TemplateVars = std::map<std::string, std::string>;

struct PromptRequest {
  std::string template_name;
  std::string template_version;
  std::string system_prompt;
  std::vector<PromptMessage> messages;
  SchemaTag schema_tag = SchemaTag::response_payload;
  TemplateVars vars;

  PromptRequest& add(Role role, std::string text) {
    messages.push_back({role, std::move(text)});
    return *this;
  }
  bool operator==(const PromptRequest&) const = default;
};

struct PromptTemplate {
  std::string_view name;
  std::string_view version;
  SchemaTag schema_tag;
  std::string_view text;
};

inline const std::array<PromptTemplate, 7>& prompt_templates() {
  static const std::array<PromptTemplate, 7> table = {{
      {"intent_classifier", "v1", SchemaTag::intent_label, assets::intent_classifier_v1},
      {"response_generator", "v1", SchemaTag::response_payload, assets::response_generator_v1},
      {"language_filter", "v1", SchemaTag::language_check, assets::language_filter_v1},
      {"question_generator", "v1", SchemaTag::question_batch, assets::question_generator_v1},
      {"question_evaluator", "v1", SchemaTag::evaluation, assets::question_evaluator_v1},
      {"question_refiner", "v1", SchemaTag::question_batch, assets::question_refiner_v1},
      {"context_extractor", "v1", SchemaTag::context_extraction, assets::context_extractor_v1},
  }};
  return table;
}

inline const PromptTemplate& find_template(std::string_view name) {
  for (const auto& t : prompt_templates()) {
    if (t.name == name) return t;
  }
  fail(ErrorCode::unknown_template, "unknown template: " + std::string(name));
}

namespace detail {
inline bool is_ident_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; }
}  // namespace detail

/// Replaces every {identifier} in `text` from `vars`. Braces that do not
/// enclose a lowercase identifier are left untouched, so JSON examples in
/// prompt text survive rendering.
inline std::string substitute(std::string_view text, const TemplateVars& vars) {
  std::string out;
  out.reserve(text.size());
  std::set<std::string> unbound;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && detail::is_ident_char(text[j])) ++j;
      if (j < text.size() && text[j] == '}' && j > i + 1 && !(text[i + 1] >= '0' && text[i + 1] <= '9')) {
        std::string name(text.substr(i + 1, j - i - 1));
        if (auto it = vars.find(name); it != vars.end()) {
          out += it->second;
        } else {
          unbound.insert(name);
        }
        i = j + 1;
        continue;
      }
    }
    out.push_back(text[i++]);
  }
  if (!unbound.empty()) {
    std::string names;
    for (const auto& n : unbound) names += (names.empty() ? "" : ", ") + n;
    fail(ErrorCode::unbound_placeholder, "unbound placeholder(s): " + names,
         {{"placeholders", std::vector<std::string>(unbound.begin(), unbound.end())}});
  }
  return out;
}

/// Pure function of (name, vars). Messages are appended by the caller.
inline PromptRequest render_template(std::string_view name, const TemplateVars& vars) {
  const auto& t = find_template(name);
  PromptRequest req;
  req.template_name = std::string(t.name);
  req.template_version = std::string(t.version);
  req.system_prompt = substitute(t.text, vars);
  req.schema_tag = t.schema_tag;
  req.vars = vars;
  return req;
}

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Canonical description of a request's inputs: vars plus messages.
inline std::string canonical_inputs(const PromptRequest& req) {
  nlohmann::json j;
  j["vars"] = req.vars;
  auto msgs = nlohmann::json::array();
  for (const auto& m : req.messages) msgs.push_back({m.role == Role::user ? "user" : "assistant", m.text});
  j["messages"] = std::move(msgs);
  return j.dump();
}

/// Fixture key: "<template>#<16 hex digits>".
inline std::string request_key(const PromptRequest& req) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_inputs(req))));
  return req.template_name + "#" + hex;
}

inline void check_request(const PromptRequest& req) {
  if (req.system_prompt.empty()) fail(ErrorCode::precondition_failed, "prompt request has an empty system prompt");
  if (req.messages.empty()) fail(ErrorCode::precondition_failed, "prompt request has no messages");
}

}  // namespace lingoq::llm
