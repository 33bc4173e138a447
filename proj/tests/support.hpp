#pragma once

// Shared builders for tests: canned provider responses and small domain
// values.

#include "lingoq/domain.hpp"
#include "lingoq/llm/provider.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace lingoq::testing {

inline Json question_json(const std::string& stem, std::vector<std::string> options, int key,
                          const std::string& explanation = "Because the key fits the context.",
                          const std::string& rationale = "Practises the looked-up word.") {
  return {{"stem", stem},
          {"options", std::move(options)},
          {"key_index", key},
          {"explanation", explanation},
          {"rationale", rationale},
          {"context_hint", nullptr}};
}

inline std::string batch(std::vector<Json> items) { return Json{{"questions", std::move(items)}}.dump(); }

inline std::string verdict(bool answerability, bool proficiency, const std::string& rationale = "") {
  return Json{{"answerability", answerability}, {"proficiency", proficiency}, {"rationale", rationale}}.dump();
}

inline const std::string kPass = verdict(true, true);
inline const std::string kFailAnswerability = verdict(false, true, "Two options fit the blank.");
inline const std::string kFailProficiency = verdict(true, false, "The distractors are obviously wrong.");

inline QueryPair lookup_pair(const std::string& id, const std::string& word, Timestamp at,
                             std::optional<TaskContext> ctx = std::nullopt) {
  auto q = ChatMessage::from_user(id + "-u", "t-" + id,
                                  "Please explain the meaning of the following word (or expression) in detail in "
                                  "dictionary format\n" + word,
                                  QueryIntent::lookup, at);
  q.context = std::move(ctx);
  auto a = ChatMessage::from_assistant(id + "-a", "t-" + id,
                                       Dictionary{word, {"meaning of " + word}, {}, {"An example with " + word + "."}},
                                       at);
  return {id, "alice", "t-" + id, q, a, {}, at};
}

inline QueryPair text_pair(const std::string& id, const std::string& text, const std::string& reply, Timestamp at) {
  auto q = ChatMessage::from_user(id + "-u", "t-" + id, text, QueryIntent::text, at);
  auto a = ChatMessage::from_assistant(id + "-a", "t-" + id, TextBody{reply}, at);
  return {id, "alice", "t-" + id, q, a, {}, at};
}

/// Wildcard fixtures for the whole pipeline: every message is a lookup,
/// every generation yields two valid questions, every evaluation passes.
inline void add_happy_path(llm::MockProvider& mock) {
  mock.add({"intent_classifier#*", "lookup", std::nullopt, {}});
  mock.add({"response_generator#*",
            R"({"type":"dictionary","headword":"airway","meanings":["the passage air moves through"],"synonyms":[],"example_sentences":["Keep the airway clear."]})",
            std::nullopt,
            {}});
  mock.add({"language_filter#*", R"({"english_related": true})", std::nullopt, {}});
  mock.add({"question_generator#*",
            batch({question_json("Check the patient's ____ first.", {"airway", "airline", "aisle"}, 0),
                   question_json("The nurse kept the airway ____.", {"clear", "clean", "cleared"}, 0)}),
            std::nullopt,
            {}});
  mock.add({"question_evaluator#*", kPass, std::nullopt, {}});
}

inline llm::ProviderConfig no_backoff() {
  llm::ProviderConfig c;
  c.retry_backoff = std::chrono::milliseconds{0};
  c.max_retries = 0;
  return c;
}

}  // namespace lingoq::testing
