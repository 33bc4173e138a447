#pragma once

#include "lingoq/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lingoq::eval {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Rubric

enum class AnswerChoice { marked_correct, correct_not_marked, multiple_correct, no_correct, dont_know };
enum class UniqueChoice { fully_unique, some_too_similar, all_too_similar, dont_know };
enum class WrongChoice { none_obviously_wrong, gives_away_answer, obviously_wrong, dont_know };

template <typename E>
struct RubricOption {
  E value;
  std::string_view code;
  std::string_view text;
};

inline constexpr std::array<RubricOption<AnswerChoice>, 5> kAnswerOptions = {{
    {AnswerChoice::marked_correct, "marked_correct", "Yes, there is a correct answer and it is marked 'correct'"},
    {AnswerChoice::correct_not_marked, "correct_not_marked", "There is a correct answer but it is not marked 'correct'"},
    {AnswerChoice::multiple_correct, "multiple_correct", "There are multiple correct answers"},
    {AnswerChoice::no_correct, "no_correct", "No, there is no correct answer"},
    {AnswerChoice::dont_know, "dont_know", "Don't know"},
}};

inline constexpr std::array<RubricOption<UniqueChoice>, 4> kUniqueOptions = {{
    {UniqueChoice::fully_unique, "fully_unique", "Yes, they are completely unique"},
    {UniqueChoice::some_too_similar, "some_too_similar", "Some choices are unique, some are too similar"},
    {UniqueChoice::all_too_similar, "all_too_similar", "No, they are all too similar"},
    {UniqueChoice::dont_know, "dont_know", "Don't know"},
}};

inline constexpr std::array<RubricOption<WrongChoice>, 4> kWrongOptions = {{
    {WrongChoice::none_obviously_wrong, "none_obviously_wrong", "Yes, there are no obviously-wrong options"},
    {WrongChoice::gives_away_answer, "gives_away_answer", "Yes, but the options give away the correct answer"},
    {WrongChoice::obviously_wrong, "obviously_wrong", "No, there are obviously-wrong options"},
    {WrongChoice::dont_know, "dont_know", "Don't know"},
}};

namespace detail {

/// Folds typographic apostrophes and quotes to ASCII and trims.
inline std::string fold_quotes(std::string s) {
  const std::pair<std::string_view, char> subs[] = {
      {"\xE2\x80\x98", '\''}, {"\xE2\x80\x99", '\''}, {"\xE2\x80\x9C", '"'}, {"\xE2\x80\x9D", '"'}};
  for (const auto& [from, to] : subs) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + 1)) s.replace(pos, from.size(), 1, to);
  }
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

/// Accepts either the option's full wording or its short code.
template <typename E, std::size_t N>
E parse_option(const std::array<RubricOption<E>, N>& options, const std::string& raw, std::string_view field) {
  const auto folded = fold_quotes(raw);
  for (const auto& o : options) {
    if (folded == o.code || folded == o.text) return o.value;
  }
  fail(ErrorCode::schema_violation, "unknown " + std::string(field) + " option: " + raw, {{"field", field}, {"value", raw}});
}

template <typename E, std::size_t N>
std::string_view option_code(const std::array<RubricOption<E>, N>& options, E v) {
  for (const auto& o : options) {
    if (o.value == v) return o.code;
  }
  return "?";
}

}  // namespace detail

struct ExpertLabelRecord {
  std::string question_id;
  std::string rater_id;
  AnswerChoice answerability_choice = AnswerChoice::dont_know;
  UniqueChoice unique_choices = UniqueChoice::dont_know;
  WrongChoice no_obviously_wrong = WrongChoice::dont_know;
  bool operator==(const ExpertLabelRecord&) const = default;
};

inline ExpertLabelRecord record_from_fields(const std::string& question_id, const std::string& rater_id,
                                            const std::string& answer, const std::string& unique,
                                            const std::string& wrong) {
  if (question_id.empty() || rater_id.empty()) fail(ErrorCode::schema_violation, "question_id and rater_id are required");
  return {question_id, rater_id, detail::parse_option(kAnswerOptions, answer, "answerability_choice"),
          detail::parse_option(kUniqueOptions, unique, "unique_choices"),
          detail::parse_option(kWrongOptions, wrong, "no_obviously_wrong")};
}

inline ExpertLabelRecord record_from_json(const Json& j) {
  try {
    return record_from_fields(j.at("question_id").get<std::string>(), j.at("rater_id").get<std::string>(),
                              j.at("answerability_choice").get<std::string>(), j.at("unique_choices").get<std::string>(),
                              j.at("no_obviously_wrong").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::schema_violation, std::string("label record: ") + e.what());
  }
}

inline Json to_json(const ExpertLabelRecord& r) {
  return {{"question_id", r.question_id},
          {"rater_id", r.rater_id},
          {"answerability_choice", detail::option_code(kAnswerOptions, r.answerability_choice)},
          {"unique_choices", detail::option_code(kUniqueOptions, r.unique_choices)},
          {"no_obviously_wrong", detail::option_code(kWrongOptions, r.no_obviously_wrong)}};
}

/// Splits one CSV record; double quotes delimit fields containing commas.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  if (quoted) fail(ErrorCode::schema_violation, "unterminated quote in CSV line");
  return out;
}

/// Reads labels as JSONL, or as CSV when the first line is a header naming
/// the record fields.
inline std::vector<ExpertLabelRecord> load_labels(std::istream& in) {
  std::vector<ExpertLabelRecord> out;
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::map<std::string, std::size_t>> columns;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::fold_quotes(line).empty()) continue;
    try {
      if (lineno == 1 && line.rfind("{", 0) != 0) {
        const auto header = split_csv_line(line);
        columns.emplace();
        for (std::size_t i = 0; i < header.size(); ++i) (*columns)[detail::fold_quotes(header[i])] = i;
        for (const char* f : {"question_id", "rater_id", "answerability_choice", "unique_choices", "no_obviously_wrong"}) {
          if (!columns->count(f)) fail(ErrorCode::schema_violation, std::string("CSV header lacks ") + f);
        }
        continue;
      }
      if (columns) {
        const auto cells = split_csv_line(line);
        auto cell = [&](const char* name) {
          const auto idx = columns->at(name);
          if (idx >= cells.size()) fail(ErrorCode::schema_violation, std::string("missing column ") + name);
          return detail::fold_quotes(cells[idx]);
        };
        out.push_back(record_from_fields(cell("question_id"), cell("rater_id"), cell("answerability_choice"),
                                         cell("unique_choices"), cell("no_obviously_wrong")));
      } else {
        out.push_back(record_from_json(Json::parse(line)));
      }
    } catch (const Error& e) {
      fail(e.code(), "line " + std::to_string(lineno) + ": " + e.what(), {{"line", lineno}});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::schema_violation, "line " + std::to_string(lineno) + ": " + e.what(), {{"line", lineno}});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mapping and aggregation

struct BinaryLabel {
  bool answerability = false;
  bool proficiency = false;
  bool operator==(const BinaryLabel&) const = default;
};

/// Answerability holds only for a correct, correctly marked key.
/// Proficiency needs fully unique options and no obviously wrong ones.
/// "Don't know" counts as false.
inline BinaryLabel map_rubric_to_binary(const ExpertLabelRecord& r) {
  return {r.answerability_choice == AnswerChoice::marked_correct,
          r.unique_choices == UniqueChoice::fully_unique && r.no_obviously_wrong == WrongChoice::none_obviously_wrong};
}

/// Strict majority per criterion; a tie is false.
inline bool majority(const std::vector<bool>& votes) {
  const auto yes = std::count(votes.begin(), votes.end(), true);
  return static_cast<std::size_t>(yes) * 2 > votes.size();
}

inline std::map<std::string, BinaryLabel> aggregate_majority(const std::vector<ExpertLabelRecord>& records) {
  std::map<std::string, std::pair<std::vector<bool>, std::vector<bool>>> votes;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records) {
    if (!seen.insert({r.question_id, r.rater_id}).second) {
      fail(ErrorCode::schema_violation, "rater " + r.rater_id + " labelled " + r.question_id + " twice");
    }
    const auto b = map_rubric_to_binary(r);
    votes[r.question_id].first.push_back(b.answerability);
    votes[r.question_id].second.push_back(b.proficiency);
  }
  std::map<std::string, BinaryLabel> out;
  for (const auto& [id, v] : votes) out[id] = {majority(v.first), majority(v.second)};
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

struct Confusion {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int tn = 0;
  bool operator==(const Confusion&) const = default;
};

struct Metrics {
  Confusion confusion;
  std::optional<double> precision;  // empty when undefined
  std::optional<double> recall;
  std::optional<double> f1;
};

/// True is the positive class. Undefined ratios (zero denominators) stay
/// empty rather than being reported as 0.
inline Metrics metrics_from(const Confusion& c) {
  Metrics m{c, std::nullopt, std::nullopt, std::nullopt};
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / (c.tp + c.fn);
  if (m.precision && m.recall && (*m.precision + *m.recall) > 0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

struct ScoreReport {
  std::size_t items = 0;
  Metrics answerability;
  Metrics proficiency;
};

/// Compares pipeline decisions with ground truth. Both maps must cover the
/// same question ids.
inline ScoreReport score_pipeline(const std::map<std::string, BinaryLabel>& decisions,
                                  const std::map<std::string, BinaryLabel>& truth) {
  std::vector<std::string> only_decisions;
  std::vector<std::string> only_truth;
  for (const auto& [id, _] : decisions) {
    if (!truth.count(id)) only_decisions.push_back(id);
  }
  for (const auto& [id, _] : truth) {
    if (!decisions.count(id)) only_truth.push_back(id);
  }
  if (!only_decisions.empty() || !only_truth.empty()) {
    fail(ErrorCode::id_mismatch, "decision and label sets cover different questions",
         {{"missing_labels", only_decisions}, {"missing_decisions", only_truth}});
  }
  Confusion a;
  Confusion p;
  auto tally = [](Confusion& c, bool predicted, bool actual) {
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  };
  for (const auto& [id, d] : decisions) {
    const auto& t = truth.at(id);
    tally(a, d.answerability, t.answerability);
    tally(p, d.proficiency, t.proficiency);
  }
  return {decisions.size(), metrics_from(a), metrics_from(p)};
}

inline std::map<std::string, BinaryLabel> load_decisions(std::istream& in) {
  std::map<std::string, BinaryLabel> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      const auto j = Json::parse(line);
      const auto id = j.at("question_id").get<std::string>();
      if (out.count(id)) fail(ErrorCode::schema_violation, "duplicate decision for " + id);
      out[id] = {j.at("answerability").get<bool>(), j.at("proficiency").get<bool>()};
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::schema_violation, "line " + std::to_string(lineno) + ": " + e.what(), {{"line", lineno}});
    }
  }
  return out;
}

inline Json to_json(const Metrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json("N/A"); };
  return {{"confusion", {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}}},
          {"precision", opt(m.precision)},
          {"recall", opt(m.recall)},
          {"f1", opt(m.f1)}};
}

inline Json to_json(const ScoreReport& r) {
  return {{"items", r.items}, {"answerability", to_json(r.answerability)}, {"proficiency", to_json(r.proficiency)}};
}

inline std::string render_table(const ScoreReport& r) {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("N/A");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };
  std::string out = "criterion      precision  recall  f1     tp  fp  fn  tn\n";
  auto row = [&](const char* name, const Metrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %-10s %-7s %-6s %-3d %-3d %-3d %d\n", name, fmt(m.precision).c_str(),
                  fmt(m.recall).c_str(), fmt(m.f1).c_str(), m.confusion.tp, m.confusion.fp, m.confusion.fn,
                  m.confusion.tn);
    out += buf;
  };
  row("answerability", r.answerability);
  row("proficiency", r.proficiency);
  out += "items: " + std::to_string(r.items) + "\n";
  return out;
}

}  // namespace lingoq::eval
