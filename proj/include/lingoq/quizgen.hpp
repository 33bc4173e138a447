#pragma once

#include "lingoq/domain.hpp"
#include "lingoq/llm/parse.hpp"
#include "lingoq/llm/prompt.hpp"
#include "lingoq/llm/provider.hpp"
#include "lingoq/prompt_assets.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace lingoq::quizgen {

/// Loads a few-shot bank (a JSON array of question-shaped items). Every item
/// must pass format validation.
inline std::vector<QuestionDraft> load_exam_samples(std::string_view json_text) {
  std::vector<QuestionDraft> out;
  const auto j = nlohmann::json::parse(json_text);
  for (const auto& item : j) {
    auto d = item.get<QuestionDraft>();
    Question::create(d);
    out.push_back(std::move(d));
  }
  if (out.empty()) fail(ErrorCode::schema_violation, "exam sample bank is empty");
  return out;
}

inline const std::vector<QuestionDraft>& default_exam_samples() {
  static const auto samples = load_exam_samples(assets::exam_samples_v1);
  return samples;
}

struct GenerationInput {
  QueryPair pair;
  std::vector<QuestionDraft> exam_samples;

  const std::optional<TaskContext>& context() const { return pair.query.context; }
};

inline GenerationInput make_input(QueryPair pair, std::vector<QuestionDraft> samples = default_exam_samples()) {
  if (samples.empty()) fail(ErrorCode::precondition_failed, "generation needs at least one exam sample");
  if (auto v = pair_violation(pair)) fail(ErrorCode::precondition_failed, *v);
  return {std::move(pair), std::move(samples)};
}

// ---------------------------------------------------------------------------
// Prompt material

namespace detail {

inline Json public_fields(const QuestionDraft& q) {
  Json j = {{"stem", q.stem}, {"options", q.options}, {"key_index", q.key_index}, {"explanation", q.explanation}};
  if (q.context_hint) j["context_hint"] = *q.context_hint;
  return j;
}

inline std::string describe_exchange(const GenerationInput& in) {
  std::string s = "[Exchange]\nuser (" + std::string(to_string(in.pair.query.intent)) + "): " + in.pair.query.text +
                  "\nassistant: " + Json(*in.pair.response.payload).dump() + "\n";
  if (!in.pair.history.empty()) {
    s += "[Conversation history]\n";
    for (const auto& m : in.pair.history) {
      s += (m.author == Author::user ? "user: " + m.text : "assistant: " + (m.payload ? Json(*m.payload).dump() : m.text));
      s += "\n";
    }
  }
  if (const auto& ctx = in.context()) {
    s += "[Work context]\nsurrounding_text: " + ctx->surrounding_text + "\ntask_description: " +
         ctx->task_description + "\n";
  }
  return s;
}

inline std::string render_samples(const std::vector<QuestionDraft>& samples) {
  auto arr = Json::array();
  for (const auto& q : samples) {
    auto j = public_fields(q);
    j["rationale"] = q.rationale;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Language filter

/// Lookup, translation and proofread exchanges are language queries by
/// definition and need no provider call; free-text exchanges are judged by
/// the filter prompt.
inline bool is_language_query(const llm::Gateway& gw, const QueryPair& pair) {
  if (auto v = pair_violation(pair)) fail(ErrorCode::precondition_failed, *v);
  if (pair.query.intent != QueryIntent::text) return true;
  auto req = llm::render_template("language_filter", {});
  req.add(llm::Role::user, "[Exchange]\nuser: " + pair.query.text + "\nassistant: " + pair.response.text);
  return llm::parse_language_check(gw.complete(req));
}

// ---------------------------------------------------------------------------
// Generation

struct Candidate {
  Question question;
  int generation_calls = 1;  // provider calls spent producing this version
};

/// Fills provenance fields the provider does not own.
inline QuestionDraft stamp(QuestionDraft d, const GenerationInput& in, std::size_t index) {
  d.id = in.pair.id + "-q" + std::to_string(index + 1);
  d.source_message_id = in.pair.response.id;
  d.marked_source = in.pair.response.marked;
  if (in.context()) {
    if (!d.context_hint || is_blank_text(*d.context_hint)) d.context_hint = in.context()->task_description;
  } else if (d.context_hint && is_blank_text(*d.context_hint)) {
    d.context_hint.reset();
  }
  return d;
}

inline llm::PromptRequest build_generation_prompt(const GenerationInput& in, int count, const std::string& avoid = {}) {
  auto req = llm::render_template("question_generator", {{"exam_samples", detail::render_samples(in.exam_samples)},
                                                         {"count", std::to_string(count)},
                                                         {"avoid", avoid}});
  req.add(llm::Role::user, detail::describe_exchange(in));
  return req;
}

/// Asks for `n` questions and validates each. Invalid items are dropped; if
/// fewer than `n` survive, a partial_batch error lists the salvageable ones.
/// When two candidates share a key, the later one is regenerated once and
/// then kept regardless.
inline std::vector<Candidate> generate_questions(const llm::Gateway& gw, const GenerationInput& in, int n) {
  require(n > 0, "question count must be positive");
  const auto drafts = llm::parse_question_batch(gw.complete(build_generation_prompt(in, n)));

  std::vector<Candidate> valid;
  auto rejected = Json::array();
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    auto d = stamp(drafts[i], in, valid.size());
    if (auto vs = validate_format(d); !vs.empty()) {
      rejected.push_back({{"index", i}, {"violations", violations_to_json(vs)}});
      continue;
    }
    if (static_cast<int>(valid.size()) < n) valid.push_back({Question::create(std::move(d)), 1});
  }
  if (static_cast<int>(valid.size()) < n) {
    auto salvage = Json::array();
    for (const auto& c : valid) salvage.push_back(c.question);
    fail(ErrorCode::partial_batch,
         "generated " + std::to_string(valid.size()) + " valid of " + std::to_string(n) + " questions",
         {{"salvageable", salvage}, {"rejected", rejected}});
  }

  for (std::size_t i = 1; i < valid.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (normalize_option(valid[i].question.key()) != normalize_option(valid[k].question.key())) continue;
      const auto avoid = "Do not use \"" + valid[k].question.key() + "\" as the key; test a different point.\n";
      try {
        const auto again = llm::parse_question_batch(gw.complete(build_generation_prompt(in, 1, avoid)));
        if (!again.empty()) {
          auto d = stamp(again.front(), in, i);
          if (validate_format(d).empty()) valid[i].question = Question::create(std::move(d));
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::parse_error) throw;
      }
      valid[i].generation_calls += 1;
      break;
    }
  }
  return valid;
}

// ---------------------------------------------------------------------------
// Evaluation and refinement

inline EvaluationResult evaluate_question(const llm::Gateway& gw, const Question& q) {
  auto req = llm::render_template("question_evaluator", {});
  req.add(llm::Role::user, "[Question]\n" + detail::public_fields(q.draft()).dump(2));
  return llm::parse_evaluation(gw.complete(req));
}

/// Rewrites a failed question. The original exchange and the evaluator's
/// rationale both go into the prompt; the result is re-validated.
inline Question refine_question(const llm::Gateway& gw, const GenerationInput& in, const Question& q,
                                const EvaluationResult& verdict) {
  if (verdict.passed()) fail(ErrorCode::precondition_failed, "refinement needs a failed evaluation");
  if (is_blank_text(verdict.rationale)) fail(ErrorCode::precondition_failed, "refinement needs a rationale");
  auto req = llm::render_template("question_refiner", {});
  req.add(llm::Role::user, detail::describe_exchange(in) + "[Failed question]\n" +
                               detail::public_fields(q.draft()).dump(2) + "\n[Evaluator rationale]\n" +
                               verdict.rationale + "\n[Failed criteria]\nanswerability: " +
                               (verdict.answerability ? "pass" : "fail") +
                               "\nproficiency: " + (verdict.proficiency ? "pass" : "fail"));
  const auto drafts = llm::parse_question_batch(gw.complete(req));
  if (drafts.empty()) fail(ErrorCode::invalid_question, "refinement returned no question");
  auto d = drafts.front();
  d.id = q.id();
  d.source_message_id = q.source_message_id();
  d.marked_source = q.marked_source();
  if (!d.context_hint || is_blank_text(*d.context_hint)) d.context_hint = q.context_hint();
  return Question::create(std::move(d));
}

// ---------------------------------------------------------------------------
// QA loop

enum class QaStatus { accepted, discarded };

inline std::string_view to_string(QaStatus s) { return s == QaStatus::accepted ? "accepted" : "discarded"; }

struct AuditStep {
  QuestionDraft version;
  std::optional<EvaluationResult> evaluation;
  std::optional<std::string> error;  // refinement that failed validation
  bool operator==(const AuditStep&) const = default;
};

struct QaOutcome {
  QaStatus status = QaStatus::discarded;
  int attempts_used = 0;
  std::optional<Question> final_question;
  std::vector<AuditStep> audit_trail;

  bool operator==(const QaOutcome&) const = default;
};

inline void to_json(Json& j, const AuditStep& s) {
  j = {{"version", s.version}};
  j["evaluation"] = s.evaluation ? Json(*s.evaluation) : Json(nullptr);
  j["error"] = s.error ? Json(*s.error) : Json(nullptr);
}

inline void to_json(Json& j, const QaOutcome& o) {
  j = {{"status", to_string(o.status)}, {"attempts_used", o.attempts_used}, {"audit_trail", o.audit_trail}};
  j["final_question"] = o.final_question ? Json(*o.final_question) : Json(nullptr);
}

/// Evaluate, refine on failure, re-evaluate. Initial generation plus
/// refinements never exceed policy.max_generation_attempts; a candidate that
/// has not passed when the budget runs out is discarded. Provider failures
/// propagate with the trail so far in the error detail.
inline QaOutcome run_qa_loop(const llm::Gateway& gw, const GenerationInput& in, const Candidate& candidate,
                             const QuizPolicy& policy) {
  QaOutcome out;
  int attempt = candidate.generation_calls;
  Question current = candidate.question;
  auto abort_with_trail = [&out](const Error& e) {
    Json detail = e.detail().is_object() ? e.detail() : Json::object();
    detail["audit_trail"] = out.audit_trail;
    throw Error(e.code(), e.what(), detail);
  };

  try {
    for (;;) {
      const auto verdict = evaluate_question(gw, current);
      out.audit_trail.push_back({current.draft(), verdict, std::nullopt});
      if (verdict.passed()) {
        out.status = QaStatus::accepted;
        out.attempts_used = attempt;
        out.final_question = current;
        return out;
      }
      bool refined = false;
      while (attempt < policy.max_generation_attempts) {
        ++attempt;
        try {
          current = refine_question(gw, in, current, verdict);
          refined = true;
          break;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::invalid_question && e.code() != ErrorCode::parse_error) throw;
          out.audit_trail.push_back({current.draft(), std::nullopt, std::string(e.what())});
        }
      }
      if (!refined) {
        out.status = QaStatus::discarded;
        out.attempts_used = attempt;
        return out;
      }
    }
  } catch (const Error& e) {
    abort_with_trail(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whole pipeline for one pair

struct PairReport {
  std::string pair_id;
  bool filtered = false;
  std::vector<QaOutcome> outcomes;
  std::optional<std::string> generation_error;

  std::vector<Question> accepted() const {
    std::vector<Question> qs;
    for (const auto& o : outcomes) {
      if (o.status == QaStatus::accepted && o.final_question) {
        if (!validate_format(o.final_question->draft()).empty()) continue;
        qs.push_back(*o.final_question);
      }
    }
    return qs;
  }
  int discarded() const {
    int n = 0;
    for (const auto& o : outcomes) n += o.status == QaStatus::discarded ? 1 : 0;
    return n;
  }
  int refined() const {
    int n = 0;
    for (const auto& o : outcomes) n += (o.status == QaStatus::accepted && o.attempts_used > 1) ? 1 : 0;
    return n;
  }
};

inline void to_json(Json& j, const PairReport& r) {
  j = {{"pair_id", r.pair_id}, {"filtered", r.filtered}, {"outcomes", r.outcomes}};
  j["generation_error"] = r.generation_error ? Json(*r.generation_error) : Json(nullptr);
}

/// Filter, generate, and QA one pair. Transport failures propagate so the
/// caller can retry the pair later; malformed batches are salvaged.
inline PairReport process_pair(const llm::Gateway& gw, const QueryPair& pair, const QuizPolicy& policy,
                               const std::vector<QuestionDraft>& exam_samples = default_exam_samples()) {
  PairReport report{pair.id, false, {}, std::nullopt};
  if (!is_language_query(gw, pair)) {
    report.filtered = true;
    return report;
  }
  const auto input = make_input(pair, exam_samples);
  std::vector<Candidate> candidates;
  try {
    candidates = generate_questions(gw, input, policy.questions_per_pair);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::partial_batch) {
      report.generation_error = e.what();
      for (const auto& q : e.detail().at("salvageable")) candidates.push_back({q.get<Question>(), 1});
    } else if (e.code() == ErrorCode::parse_error) {
      report.generation_error = e.what();
    } else {
      throw;
    }
  }
  for (const auto& c : candidates) report.outcomes.push_back(run_qa_loop(gw, input, c, policy));
  return report;
}

}  // namespace lingoq::quizgen
