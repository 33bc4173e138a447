#include "lingoq/quizgen.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lingoq;
using namespace lingoq::quizgen;
using namespace lingoq::testing;
using lingoq::llm::Gateway;
using lingoq::llm::MockProvider;
using lingoq::llm::PromptRequest;

namespace {

const Timestamp kT0 = from_epoch(1'740'000'000);

const TaskContext kClinical{"Please keep monitoring the patient's airway to ensure proper breathing",
                            "Writing an email to ward nurses about post-operative care",
                            ContextSource::client_supplied};

Question make_question(const std::string& id, const std::string& stem = "Check the patient's ____ first.") {
  return Question::create({id, stem, {"airway", "airline", "aisle"}, 0, "The airway carries air.", "lookup", {}, "m", false});
}

/// Drives evaluator and refiner from scripts; counts calls per template.
struct ScriptedLlm {
  MockProvider mock;
  std::vector<std::string> verdicts;  // consumed in order; last repeats
  std::vector<std::string> refinements;
  std::size_t next_verdict = 0;
  std::size_t next_refinement = 0;

  ScriptedLlm() {
    mock.set_fallback([this](const PromptRequest& req) -> std::optional<std::string> {
      if (req.template_name == "question_evaluator") {
        const auto& v = verdicts.at(std::min(next_verdict, verdicts.size() - 1));
        ++next_verdict;
        return v;
      }
      if (req.template_name == "question_refiner") {
        if (!refinements.empty()) {
          const auto& r = refinements.at(std::min(next_refinement, refinements.size() - 1));
          ++next_refinement;
          return r;
        }
        ++next_refinement;
        return batch({question_json("Version " + std::to_string(next_refinement) + ": keep the ____ clear.",
                                    {"airway", "airline", "aisle"}, 0)});
      }
      return std::nullopt;
    });
  }

  std::size_t evaluations() const { return mock.call_count("question_evaluator"); }
  std::size_t refines() const { return mock.call_count("question_refiner"); }
};

}  // namespace

// ---------------------------------------------------------------------------
// Language filter

TEST(LanguageFilter, StructuredIntentsPassWithoutProviderCall) {
  MockProvider mock;
  Gateway gw(mock);
  EXPECT_TRUE(is_language_query(gw, lookup_pair("p1", "mitigate", kT0)));
  auto tr = lookup_pair("p2", "x", kT0);
  tr.query.intent = QueryIntent::translation;
  tr.response = ChatMessage::from_assistant("p2-a", "t", Translation{"안녕", "Hello", "greeting"}, kT0);
  EXPECT_TRUE(is_language_query(gw, tr));
  EXPECT_EQ(mock.call_count(), 0u);
}

TEST(LanguageFilter, TextIntentAskedToProvider) {
  MockProvider mock;
  mock.add({"language_filter#*", R"({"english_related": false, "reason": "programming"})",
            std::string("Python script"), {}});
  mock.add({"language_filter#*", R"({"english_related": true})", std::nullopt, {}});
  Gateway gw(mock);
  EXPECT_FALSE(is_language_query(gw, text_pair("p1", "write me a Python script", "print('hi')", kT0)));
  EXPECT_TRUE(is_language_query(gw, text_pair("p2", "Is 'per your request' too formal?", "It is formal.", kT0)));
}

// ---------------------------------------------------------------------------
// Generation

TEST(Generation, AirwayLookupWithClinicalContext) {
  MockProvider mock;
  mock.add({"question_generator#*",
            batch({question_json("Before extubation, the nurse should check the patient's ____ to ensure proper "
                                 "breathing.",
                                 {"airway", "airfare", "hallway"}, 0),
                   question_json("Keep the patient's airway ____ at all times.", {"clear", "clean", "cleared up"}, 0)}),
            std::string("airway"),
            {}});
  Gateway gw(mock);
  const auto input = make_input(lookup_pair("p1", "airway", kT0, kClinical));
  const auto cands = generate_questions(gw, input, 2);
  ASSERT_EQ(cands.size(), 2u);
  const auto& q = cands[0].question;
  EXPECT_NE(q.stem().find("patient's ____"), std::string::npos);
  EXPECT_EQ(q.key(), "airway");
  EXPECT_EQ(q.context_hint(), kClinical.task_description);
  EXPECT_EQ(q.id(), "p1-q1");
  EXPECT_EQ(cands[1].question.id(), "p1-q2");
  EXPECT_EQ(q.source_message_id(), "p1-a");

  const auto req = mock.calls().at(0).request;
  EXPECT_EQ(req.vars.at("count"), "2");
  EXPECT_NE(req.vars.at("exam_samples").find("TOEIC"), std::string::npos);
  EXPECT_NE(req.messages.at(0).text.find("task_description: Writing an email"), std::string::npos);
}

TEST(Generation, DeterministicUnderMock) {
  MockProvider mock;
  mock.add({"question_generator#*",
            batch({question_json("a ____ b", {"x", "y", "z"}, 0), question_json("c ____ d", {"u", "v", "w"}, 1)}),
            std::nullopt,
            {}});
  Gateway gw(mock);
  const auto input = make_input(lookup_pair("p1", "airway", kT0));
  const auto a = generate_questions(gw, input, 2);
  const auto b = generate_questions(gw, input, 2);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].question, b[i].question);
  EXPECT_EQ(mock.calls()[0].key, mock.calls()[1].key);
}

TEST(Generation, DuplicateOptionsYieldPartialBatch) {
  MockProvider mock;
  mock.add({"question_generator#*",
            batch({question_json("Prices will ____ next year.", {"rise", "rise", "raise"}, 0),
                   question_json("Please ____ your hand.", {"raise", "rise", "arise"}, 0)}),
            std::nullopt,
            {}});
  Gateway gw(mock);
  try {
    generate_questions(gw, make_input(lookup_pair("p1", "raise", kT0)), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::partial_batch);
    ASSERT_EQ(e.detail().at("salvageable").size(), 1u);
    EXPECT_EQ(e.detail().at("salvageable")[0].at("stem"), "Please ____ your hand.");
    EXPECT_EQ(e.detail().at("rejected")[0].at("index"), 0);
  }
}

TEST(Generation, SharedKeyRegeneratedOnce) {
  MockProvider mock;
  Gateway gw(mock);
  const auto input = make_input(lookup_pair("p1", "mitigate", kT0));
  mock.add({"question_generator#*", batch({question_json("We must ____ the risk.", {"mitigate", "militate", "migrate"}, 0)}),
            std::string("Do not use"), {}});
  mock.add({"question_generator#*",
            batch({question_json("Steps to ____ delays.", {"mitigate", "mediate", "meditate"}, 0),
                   question_json("They tried to ____ the damage.", {"mitigate", "litigate", "instigate"}, 0)}),
            std::nullopt,
            {}});
  const auto cands = generate_questions(gw, input, 2);
  EXPECT_EQ(mock.call_count("question_generator"), 2u);
  EXPECT_EQ(cands[0].generation_calls, 1);
  EXPECT_EQ(cands[1].generation_calls, 2);
  EXPECT_EQ(cands[1].question.stem(), "We must ____ the risk.");
  EXPECT_EQ(cands[1].question.id(), "p1-q2");
}

TEST(Generation, SharedKeyKeptWhenRegenerationRepeatsIt) {
  MockProvider mock;
  mock.add({"question_generator#*",
            batch({question_json("a ____ b", {"k", "y", "z"}, 0), question_json("c ____ d", {"K", "v", "w"}, 0)}),
            std::nullopt,
            {}});
  Gateway gw(mock);
  const auto cands = generate_questions(gw, make_input(lookup_pair("p1", "k", kT0)), 2);
  ASSERT_EQ(cands.size(), 2u);
  EXPECT_EQ(mock.call_count("question_generator"), 2u);
  EXPECT_EQ(cands[1].question.stem(), "a ____ b");
}

// ---------------------------------------------------------------------------
// Evaluation and refinement

TEST(Evaluation, Verdicts) {
  MockProvider mock;
  mock.add({"question_evaluator#*", kPass, std::string("well-formed"), {}});
  mock.add({"question_evaluator#*", kFailAnswerability, std::string("ambiguous"), {}});
  mock.add({"question_evaluator#*", kFailProficiency, std::string("trivial"), {}});
  Gateway gw(mock);

  const auto ok = evaluate_question(gw, make_question("q1", "A well-formed ____ item."));
  EXPECT_EQ(ok, (EvaluationResult{true, true, ""}));

  const auto amb = evaluate_question(gw, make_question("q2", "An ambiguous ____ item."));
  EXPECT_FALSE(amb.answerability);
  EXPECT_FALSE(amb.rationale.empty());

  const auto easy = evaluate_question(gw, make_question("q3", "A trivial ____ item."));
  EXPECT_TRUE(easy.answerability);
  EXPECT_FALSE(easy.proficiency);
  EXPECT_FALSE(easy.rationale.empty());

  // The evaluator never sees provenance fields.
  EXPECT_EQ(mock.calls()[0].request.messages[0].text.find("source_message_id"), std::string::npos);
}

TEST(Refinement, ProducesValidDifferentItem) {
  ScriptedLlm llm;
  Gateway gw(llm.mock);
  const auto input = make_input(lookup_pair("p1", "airway", kT0, kClinical));
  const auto original = make_question("p1-q1");
  const EvaluationResult failed{false, true, "Both 'airway' and 'aisle' could fit."};
  const auto refined = refine_question(gw, input, original, failed);
  EXPECT_NE(refined.stem(), original.stem());
  EXPECT_EQ(refined.id(), original.id());
  EXPECT_EQ(refined.source_message_id(), original.source_message_id());
  const auto prompt = llm.mock.calls().at(0).request.messages.at(0).text;
  EXPECT_NE(prompt.find(failed.rationale), std::string::npos);
  EXPECT_NE(prompt.find("[Exchange]"), std::string::npos);
  EXPECT_NE(prompt.find("answerability: fail"), std::string::npos);
}

TEST(Refinement, RequiresFailedVerdictWithRationale) {
  ScriptedLlm llm;
  Gateway gw(llm.mock);
  const auto input = make_input(lookup_pair("p1", "airway", kT0));
  try {
    refine_question(gw, input, make_question("q"), {true, true, ""});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::precondition_failed);
  }
  EXPECT_EQ(llm.refines(), 0u);
}

TEST(Refinement, TwoOptionsIsStructuralError) {
  ScriptedLlm llm;
  llm.refinements = {batch({question_json("x ____ y", {"a", "b"}, 0)})};
  Gateway gw(llm.mock);
  try {
    refine_question(gw, make_input(lookup_pair("p1", "a", kT0)), make_question("q"), {false, false, "bad"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_question);
  }
}

// ---------------------------------------------------------------------------
// QA loop

namespace {
struct LoopRun {
  QaOutcome outcome;
  std::size_t evaluations;
  std::size_t refines;
};

LoopRun run_script(std::vector<std::string> verdicts, QuizPolicy policy = {}) {
  ScriptedLlm llm;
  llm.verdicts = std::move(verdicts);
  Gateway gw(llm.mock);
  const auto input = make_input(lookup_pair("p1", "airway", kT0));
  auto out = run_qa_loop(gw, input, {make_question("p1-q1"), 1}, policy);
  return {out, llm.evaluations(), llm.refines()};
}
}  // namespace

TEST(QaLoop, PassesImmediately) {
  const auto r = run_script({kPass});
  EXPECT_EQ(r.outcome.status, QaStatus::accepted);
  EXPECT_EQ(r.outcome.attempts_used, 1);
  EXPECT_EQ(r.evaluations, 1u);
  EXPECT_EQ(r.refines, 0u);
  ASSERT_TRUE(r.outcome.final_question);
  EXPECT_EQ(r.outcome.final_question->id(), "p1-q1");
}

TEST(QaLoop, FailTwiceThenPass) {
  const auto r = run_script({kFailAnswerability, kFailProficiency, kPass});
  EXPECT_EQ(r.outcome.status, QaStatus::accepted);
  EXPECT_EQ(r.outcome.attempts_used, 3);
  EXPECT_EQ(r.refines, 2u);
  ASSERT_EQ(r.outcome.audit_trail.size(), 3u);
  EXPECT_EQ(r.outcome.final_question->draft(), r.outcome.audit_trail.back().version);
  EXPECT_TRUE(r.outcome.audit_trail.back().evaluation->passed());
}

TEST(QaLoop, FailThreeTimesIsDiscardedWithoutFourthEvaluation) {
  const auto r = run_script({kFailAnswerability, kFailAnswerability, kFailProficiency, kPass});
  EXPECT_EQ(r.outcome.status, QaStatus::discarded);
  EXPECT_EQ(r.outcome.attempts_used, 3);
  EXPECT_EQ(r.evaluations, 3u);
  EXPECT_EQ(r.refines, 2u);
  EXPECT_FALSE(r.outcome.final_question);
  EXPECT_EQ(r.outcome.audit_trail.size(), 3u);
}

TEST(QaLoop, BudgetHoldsForRandomScripts) {
  std::mt19937 rng(7);
  const std::string options[] = {kPass, kFailAnswerability, kFailProficiency, verdict(false, false, "both")};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> script(1 + rng() % 5);
    for (auto& v : script) v = options[rng() % 4];
    QuizPolicy policy;
    policy.max_generation_attempts = 1 + static_cast<int>(rng() % 4);
    const auto r = run_script(script, policy);

    std::size_t first_pass = SIZE_MAX;  // last verdict repeats, so no pass means never
    for (std::size_t i = 0; i < script.size(); ++i) {
      if (script[i] == kPass) {
        first_pass = i;
        break;
      }
    }
    const auto budget = static_cast<std::size_t>(policy.max_generation_attempts);
    const bool accepted = first_pass < budget;
    const std::size_t evals = accepted ? first_pass + 1 : budget;
    EXPECT_EQ(r.outcome.status, accepted ? QaStatus::accepted : QaStatus::discarded);
    EXPECT_EQ(r.evaluations, evals);
    EXPECT_EQ(1 + r.refines, evals);
    EXPECT_LE(1 + r.refines, budget);
    EXPECT_EQ(r.outcome.attempts_used, static_cast<int>(evals));
    if (accepted) EXPECT_TRUE(r.outcome.audit_trail.back().evaluation->passed());
  }
}

TEST(QaLoop, InvalidRefinementConsumesAnAttempt) {
  ScriptedLlm llm;
  llm.verdicts = {kFailAnswerability, kPass};
  llm.refinements = {batch({question_json("no blank", {"a", "b", "c"}, 0)}),
                     batch({question_json("fixed ____ item", {"a", "b", "c"}, 0)})};
  Gateway gw(llm.mock);
  const auto out = run_qa_loop(gw, make_input(lookup_pair("p1", "a", kT0)), {make_question("p1-q1"), 1}, {});
  EXPECT_EQ(out.status, QaStatus::accepted);
  EXPECT_EQ(out.attempts_used, 3);
  EXPECT_EQ(llm.refines(), 2u);
  ASSERT_EQ(out.audit_trail.size(), 3u);
  EXPECT_TRUE(out.audit_trail[1].error);
  EXPECT_EQ(out.final_question->stem(), "fixed ____ item");
}

TEST(QaLoop, RegeneratedCandidateStartsWithLessBudget) {
  ScriptedLlm llm;
  llm.verdicts = {kFailAnswerability};
  Gateway gw(llm.mock);
  const auto out = run_qa_loop(gw, make_input(lookup_pair("p1", "a", kT0)), {make_question("p1-q2"), 2}, {});
  EXPECT_EQ(out.status, QaStatus::discarded);
  EXPECT_EQ(out.attempts_used, 3);
  EXPECT_EQ(llm.refines(), 1u);
}

TEST(QaLoop, ProviderFailureKeepsTrail) {
  ScriptedLlm llm;
  llm.verdicts = {kFailAnswerability};
  llm.mock.add({"question_refiner#*", "", std::nullopt, ErrorCode::transport_error});
  Gateway gw(llm.mock, no_backoff());
  try {
    run_qa_loop(gw, make_input(lookup_pair("p1", "a", kT0)), {make_question("p1-q1"), 1}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::transport_error);
    ASSERT_EQ(e.detail().at("audit_trail").size(), 1u);
    EXPECT_EQ(e.detail().at("audit_trail")[0].at("evaluation").at("answerability"), false);
  }
}

// ---------------------------------------------------------------------------
// Whole pair

TEST(ProcessPair, FilteredPairsCauseNoDownstreamCalls) {
  MockProvider mock;
  mock.add({"language_filter#*", R"({"english_related": false})", std::nullopt, {}});
  Gateway gw(mock);
  const auto report = process_pair(gw, text_pair("p1", "write me a Python script", "print()", kT0), {});
  EXPECT_TRUE(report.filtered);
  EXPECT_TRUE(report.outcomes.empty());
  EXPECT_EQ(mock.call_count(), 1u);
  EXPECT_EQ(mock.call_count("language_filter"), 1u);
}

TEST(ProcessPair, DeterministicOutcomes) {
  auto run = [] {
    ScriptedLlm llm;
    llm.verdicts = {kFailProficiency, kPass};
    llm.mock.add({"question_generator#*",
                  batch({question_json("a ____ b", {"x", "y", "z"}, 0), question_json("c ____ d", {"u", "v", "w"}, 1)}),
                  std::nullopt,
                  {}});
    Gateway gw(llm.mock);
    return Json(process_pair(gw, lookup_pair("p1", "x", kT0), {})).dump();
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  EXPECT_NE(a.find("\"accepted\""), std::string::npos);
}

TEST(ProcessPair, SalvagesPartialBatch) {
  ScriptedLlm llm;
  llm.verdicts = {kPass};
  llm.mock.add({"question_generator#*",
                batch({question_json("two ____ blanks ____", {"x", "y", "z"}, 0), question_json("c ____ d", {"u", "v", "w"}, 1)}),
                std::nullopt,
                {}});
  Gateway gw(llm.mock);
  const auto report = process_pair(gw, lookup_pair("p1", "x", kT0), {});
  EXPECT_TRUE(report.generation_error);
  ASSERT_EQ(report.accepted().size(), 1u);
  EXPECT_EQ(report.accepted()[0].stem(), "c ____ d");
}
