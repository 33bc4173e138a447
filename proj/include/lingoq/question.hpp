#pragma once

#include "lingoq/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lingoq {

inline constexpr std::string_view kBlankMarker = "____";
inline constexpr std::size_t kOptionsPerQuestion = 3;

/// Unvalidated question fields, as they arrive from a provider or a file.
struct QuestionDraft {
  std::string id;
  std::string stem;
  std::vector<std::string> options;
  int key_index = 0;
  std::string explanation;
  std::string rationale;
  std::optional<std::string> context_hint;
  std::string source_message_id;
  bool marked_source = false;

  bool operator==(const QuestionDraft&) const = default;
};

enum class FormatError {
  blank_count,
  option_count,
  empty_option,
  duplicate_options,
  key_index,
  key_among_distractors,
  empty_explanation,
};

constexpr std::string_view to_string(FormatError e) {
  switch (e) {
    case FormatError::blank_count: return "blank_count";
    case FormatError::option_count: return "option_count";
    case FormatError::empty_option: return "empty_option";
    case FormatError::duplicate_options: return "duplicate_options";
    case FormatError::key_index: return "key_index";
    case FormatError::key_among_distractors: return "key_among_distractors";
    case FormatError::empty_explanation: return "empty_explanation";
  }
  return "unknown";
}

struct FormatViolation {
  FormatError error;
  std::string message;
};

/// Lowercases and collapses whitespace runs; used for option equality.
inline std::string normalize_option(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

/// Blanks are maximal runs of four or more underscores.
inline std::size_t count_blanks(std::string_view stem) {
  std::size_t blanks = 0;
  std::size_t run = 0;
  for (std::size_t i = 0; i <= stem.size(); ++i) {
    if (i < stem.size() && stem[i] == '_') {
      ++run;
      continue;
    }
    if (run >= kBlankMarker.size()) ++blanks;
    run = 0;
  }
  return blanks;
}

inline bool is_blank_text(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

/// Enumerates every structural violation. An empty result means the draft
/// can become a Question.
inline std::vector<FormatViolation> validate_format(const QuestionDraft& q) {
  std::vector<FormatViolation> out;
  const auto blanks = count_blanks(q.stem);
  if (blanks != 1) {
    out.push_back({FormatError::blank_count, "stem has " + std::to_string(blanks) + " blanks, expected 1"});
  }
  if (q.options.size() != kOptionsPerQuestion) {
    out.push_back({FormatError::option_count,
                   "question has " + std::to_string(q.options.size()) + " options, expected 3"});
  }
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    if (is_blank_text(q.options[i])) {
      out.push_back({FormatError::empty_option, "option " + std::to_string(i) + " is empty"});
    }
  }
  const bool key_valid = q.key_index >= 0 && static_cast<std::size_t>(q.key_index) < q.options.size();
  if (!key_valid) {
    out.push_back({FormatError::key_index, "key_index " + std::to_string(q.key_index) + " out of range"});
  }
  bool duplicate = false;
  bool key_duplicated = false;
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    for (std::size_t j = i + 1; j < q.options.size(); ++j) {
      const auto a = normalize_option(q.options[i]);
      if (a.empty() || a != normalize_option(q.options[j])) continue;
      duplicate = true;
      if (key_valid && (static_cast<int>(i) == q.key_index || static_cast<int>(j) == q.key_index)) {
        key_duplicated = true;
      }
    }
  }
  if (duplicate) out.push_back({FormatError::duplicate_options, "options are not pairwise distinct"});
  if (key_duplicated) out.push_back({FormatError::key_among_distractors, "key also appears as a distractor"});
  if (is_blank_text(q.explanation)) out.push_back({FormatError::empty_explanation, "explanation is empty"});
  return out;
}

inline nlohmann::json violations_to_json(const std::vector<FormatViolation>& vs) {
  auto arr = nlohmann::json::array();
  for (const auto& v : vs) arr.push_back({{"code", to_string(v.error)}, {"message", v.message}});
  return arr;
}

/// A structurally valid fill-in-the-blank item. The only way to obtain one
/// is create(), which rejects any draft failing validate_format().
class Question {
 public:
  static Question create(QuestionDraft draft) {
    auto violations = validate_format(draft);
    if (!violations.empty()) {
      std::string msg = "invalid question";
      if (!draft.id.empty()) msg += " " + draft.id;
      msg += ":";
      for (const auto& v : violations) msg += " " + std::string(to_string(v.error));
      fail(ErrorCode::invalid_question, msg, violations_to_json(violations));
    }
    return Question(std::move(draft));
  }

  const std::string& id() const { return d_.id; }
  const std::string& stem() const { return d_.stem; }
  const std::vector<std::string>& options() const { return d_.options; }
  int key_index() const { return d_.key_index; }
  const std::string& key() const { return d_.options[static_cast<std::size_t>(d_.key_index)]; }
  const std::string& explanation() const { return d_.explanation; }
  const std::string& rationale() const { return d_.rationale; }
  const std::optional<std::string>& context_hint() const { return d_.context_hint; }
  const std::string& source_message_id() const { return d_.source_message_id; }
  bool marked_source() const { return d_.marked_source; }

  const QuestionDraft& draft() const { return d_; }

  Question with_marked(bool marked) const {
    Question q = *this;
    q.d_.marked_source = marked;
    return q;
  }

  bool operator==(const Question&) const = default;

 private:
  explicit Question(QuestionDraft d) : d_(std::move(d)) {}
  QuestionDraft d_;
};

inline void to_json(nlohmann::json& j, const QuestionDraft& q) {
  j = {{"id", q.id},
       {"stem", q.stem},
       {"options", q.options},
       {"key_index", q.key_index},
       {"explanation", q.explanation},
       {"rationale", q.rationale},
       {"source_message_id", q.source_message_id},
       {"marked_source", q.marked_source}};
  j["context_hint"] = q.context_hint ? nlohmann::json(*q.context_hint) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, QuestionDraft& q) {
  q.id = j.value("id", std::string{});
  q.stem = j.at("stem").get<std::string>();
  q.options = j.at("options").get<std::vector<std::string>>();
  q.key_index = j.at("key_index").get<int>();
  q.explanation = j.value("explanation", std::string{});
  q.rationale = j.value("rationale", std::string{});
  q.source_message_id = j.value("source_message_id", std::string{});
  q.marked_source = j.value("marked_source", false);
  if (auto it = j.find("context_hint"); it != j.end() && it->is_string()) {
    q.context_hint = it->get<std::string>();
  } else {
    q.context_hint.reset();
  }
}

}  // namespace lingoq

namespace nlohmann {
template <>
struct adl_serializer<lingoq::Question> {
  static lingoq::Question from_json(const json& j) {
    return lingoq::Question::create(j.get<lingoq::QuestionDraft>());
  }
  static void to_json(json& j, const lingoq::Question& q) { j = q.draft(); }
};
}  // namespace nlohmann
