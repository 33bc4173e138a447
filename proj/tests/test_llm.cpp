#include "lingoq/llm/http_provider.hpp"
#include "lingoq/llm/parse.hpp"
#include "lingoq/llm/prompt.hpp"
#include "lingoq/llm/provider.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <sstream>
#include <thread>

using namespace lingoq;
using namespace lingoq::llm;

TEST(Templates, IntentClassifierRendersWithoutVars) {
  const auto req = render_template("intent_classifier", {});
  EXPECT_NE(req.system_prompt.find("You are an Intention Classifier"), std::string::npos);
  EXPECT_EQ(req.schema_tag, SchemaTag::intent_label);
  EXPECT_EQ(req.template_version, "v1");
}

TEST(Templates, ResponseGeneratorBindsUserLanguage) {
  const auto req = render_template("response_generator", {{"user_language", "Korean"}});
  EXPECT_NE(req.system_prompt.find("speak in polite and supportive Korean"), std::string::npos);
  EXPECT_EQ(req.system_prompt.find("{user_language}"), std::string::npos);
  // The literal placeholder token from the original prompt text is preserved.
  EXPECT_NE(req.system_prompt.find("[Intention: INTENTION_PLACEHOLDER]"), std::string::npos);
}

TEST(Templates, UnboundPlaceholderIsAnError) {
  try {
    render_template("response_generator", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unbound_placeholder);
    EXPECT_EQ(e.detail().at("placeholders"), Json::array({"user_language"}));
  }
}

TEST(Templates, UnknownTemplate) {
  try {
    render_template("nope", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unknown_template);
  }
}

TEST(Templates, RenderingIsPure) {
  const TemplateVars vars{{"exam_samples", "[]"}, {"count", "2"}, {"avoid", ""}};
  const auto a = render_template("question_generator", vars);
  const auto b = render_template("question_generator", vars);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.system_prompt, b.system_prompt);
}

TEST(Templates, JsonBracesSurviveSubstitution) {
  EXPECT_EQ(substitute(R"({ "a": {x} } {1} {Up})", {{"x", "1"}}), R"({ "a": 1 } {1} {Up})");
}

TEST(Templates, EveryShippedTemplateRenders) {
  const TemplateVars vars{{"user_language", "Korean"}, {"exam_samples", "[]"}, {"count", "2"}, {"avoid", ""}};
  for (const auto& t : prompt_templates()) {
    EXPECT_NO_THROW(render_template(t.name, vars)) << t.name;
  }
}

TEST(RequestKey, StableAndSensitiveToInputs) {
  auto a = render_template("intent_classifier", {});
  a.add(Role::user, "hello");
  auto b = a;
  EXPECT_EQ(request_key(a), request_key(b));
  b.messages[0].text = "hello!";
  EXPECT_NE(request_key(a), request_key(b));
  EXPECT_EQ(request_key(a).rfind("intent_classifier#", 0), 0u);
  EXPECT_EQ(request_key(a).size(), std::string("intent_classifier#").size() + 16);
}

// ---------------------------------------------------------------------------

namespace {
PromptRequest classifier_request(const std::string& text) {
  auto r = render_template("intent_classifier", {});
  r.add(Role::user, text);
  return r;
}

class FlakyProvider : public Provider {
 public:
  explicit FlakyProvider(int failures) : failures_(failures) {}
  std::string send(const PromptRequest&) override {
    if (calls_++ < failures_) fail(ErrorCode::transport_error, "flaky");
    return "lookup";
  }
  int calls() const { return calls_; }

 private:
  int failures_;
  std::atomic<int> calls_{0};
};

ProviderConfig fast_config(int retries) {
  ProviderConfig c;
  c.max_retries = retries;
  c.retry_backoff = std::chrono::milliseconds{0};
  c.timeout = std::chrono::milliseconds{500};
  return c;
}
}  // namespace

TEST(Complete, MockFixtureByKey) {
  MockProvider mock;
  const auto req = classifier_request("airway");
  mock.add(request_key(req), "lookup");
  Gateway gw(mock);
  EXPECT_EQ(gw.complete(req), "lookup");
  EXPECT_EQ(mock.call_count("intent_classifier"), 1u);
}

TEST(Complete, EmptyMessagesViolatePrecondition) {
  MockProvider mock;
  Gateway gw(mock);
  try {
    gw.complete(render_template("intent_classifier", {}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::precondition_failed);
  }
  EXPECT_EQ(mock.call_count(), 0u);
}

TEST(Complete, RetriesTransientFailures) {
  FlakyProvider flaky(2);
  EXPECT_EQ(Gateway(flaky, fast_config(2)).complete(classifier_request("x")), "lookup");
  EXPECT_EQ(flaky.calls(), 3);

  FlakyProvider stubborn(2);
  EXPECT_THROW(Gateway(stubborn, fast_config(1)).complete(classifier_request("x")), Error);
  EXPECT_EQ(stubborn.calls(), 2);
}

TEST(Complete, NonTransientErrorsAreNotRetried) {
  MockProvider mock;
  Gateway gw(mock, fast_config(5));
  try {
    gw.complete(classifier_request("unknown"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::fixture_missing);
    EXPECT_TRUE(e.detail().contains("key"));
  }
  EXPECT_EQ(mock.call_count(), 1u);
}

TEST(Complete, InvalidConfigRejected) {
  MockProvider mock;
  ProviderConfig c;
  c.timeout = std::chrono::milliseconds{0};
  EXPECT_THROW(Gateway(mock, c), Error);
  c = {};
  c.max_retries = -1;
  EXPECT_THROW(Gateway(mock, c), Error);
}

TEST(HttpProviderTest, UnreachableEndpointIsTransportError) {
  ProviderConfig cfg = fast_config(0);
  cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  HttpProvider http(cfg);
  Gateway gw(http, cfg);
  try {
    gw.complete(classifier_request("x"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::transport_error || e.code() == ErrorCode::timeout) << e.what();
  }
}

TEST(HttpProviderTest, SpeaksChatCompletionFormatAndRetries) {
  httplib::Server server;
  std::atomic<int> hits{0};
  Json seen;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 503;
      return;
    }
    seen = Json::parse(req.body);
    EXPECT_EQ(req.get_header_value("Authorization"), "Bearer secret");
    res.set_content(Json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "proofread"}}}}}}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ProviderConfig cfg = fast_config(1);
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.model_name = "test-model";
  cfg.api_key = "secret";
  HttpProvider http(cfg);
  Gateway gw(http, cfg);
  EXPECT_EQ(gw.complete(classifier_request("fix my email")), "proofread");
  server.stop();
  t.join();

  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(seen["model"], "test-model");
  ASSERT_EQ(seen["messages"].size(), 2u);
  EXPECT_EQ(seen["messages"][0]["role"], "system");
  EXPECT_EQ(seen["messages"][1]["content"], "fix my email");
}

// ---------------------------------------------------------------------------

TEST(MockProviderTest, RepeatedKeysScriptASequence) {
  MockProvider mock;
  const auto req = classifier_request("x");
  mock.add(request_key(req), "text");
  mock.add(request_key(req), "lookup");
  Gateway gw(mock);
  EXPECT_EQ(gw.complete(req), "text");
  EXPECT_EQ(gw.complete(req), "lookup");
  EXPECT_EQ(gw.complete(req), "lookup");
}

TEST(MockProviderTest, JsonlWildcardsAndInjectedErrors) {
  std::istringstream in(R"({"key": "intent_classifier#*", "contains": "airway", "response_text": "lookup"}
{"key": "intent_classifier#*", "contains": "boom", "error": "transport_error"}

{"key": "intent_classifier#*", "response_text": "text"}
)");
  MockProvider mock;
  mock.load_jsonl(in);
  Gateway gw(mock, fast_config(0));
  EXPECT_EQ(gw.complete(classifier_request("what is an airway")), "lookup");
  EXPECT_EQ(gw.complete(classifier_request("anything else")), "text");
  try {
    gw.complete(classifier_request("boom"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::transport_error);
  }
}

TEST(MockProviderTest, BadFixtureLineReportsLineNumber) {
  std::istringstream in("{\"key\": \"a#*\", \"response_text\": \"x\"}\nnot json\n");
  MockProvider mock;
  try {
    mock.load_jsonl(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------

TEST(Parse, IntentLabel) {
  EXPECT_EQ(std::get<QueryIntent>(parse_structured("translation", SchemaTag::intent_label)), QueryIntent::translation);
  EXPECT_EQ(parse_intent_label("  \"Lookup\".\n"), QueryIntent::lookup);
  try {
    parse_structured("maybe-translation", SchemaTag::intent_label);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse_error);
    EXPECT_EQ(e.detail().at("span"), "maybe-translation");
  }
  EXPECT_THROW(parse_intent_label("I think it is translation"), Error);
}

TEST(Parse, RefinementInsideCodeFence) {
  const auto v = parse_structured(R"(```json {"original":"a","refined":"a","rationale":"ok"}```)",
                                  SchemaTag::response_payload);
  EXPECT_EQ(std::get<StructuredResponse>(v), StructuredResponse(Refinement{"a", "a", "ok"}));
}

TEST(Parse, ToleratesProseAroundJson) {
  const auto p = parse_payload("Sure! Here you go:\n{\"type\":\"text\",\"body\":\"has } brace\"}\nHope that helps.");
  EXPECT_EQ(p, StructuredResponse(TextBody{"has } brace"}));
}

TEST(Parse, MissingFieldAndNonJson) {
  try {
    parse_payload(R"({"type":"translation","original":"x"})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse_error);
    EXPECT_TRUE(e.detail().contains("span"));
  }
  EXPECT_THROW(parse_payload("no json at all"), Error);
  EXPECT_THROW(parse_evaluation(R"({"answerability": "yes", "proficiency": true})"), Error);
  EXPECT_THROW(parse_evaluation(R"({"answerability": false, "proficiency": true, "rationale": ""})"), Error);
}

TEST(Parse, QuestionBatchShapes) {
  const std::string item = R"({"stem":"a ____ b","options":["x","y","z"],"key_index":1,"explanation":"e","rationale":"r"})";
  EXPECT_EQ(parse_question_batch("{\"questions\":[" + item + "," + item + "]}").size(), 2u);
  EXPECT_EQ(parse_question_batch("[" + item + "]").size(), 1u);
  EXPECT_EQ(parse_question_batch(item).size(), 1u);
  EXPECT_THROW(parse_question_batch(R"({"questions":[{"stem":"x"}]})"), Error);
}

TEST(Parse, LanguageCheckAndContext) {
  EXPECT_FALSE(std::get<bool>(parse_structured(R"({"english_related": false})", SchemaTag::language_check)));
  EXPECT_THROW(parse_language_check(R"({"english_related": "no"})"), Error);
  const auto c = std::get<TaskContext>(parse_structured(
      R"({"surrounding_text":"s","task_description":"t"})", SchemaTag::context_extraction));
  EXPECT_EQ(c.task_description, "t");
}

TEST(Parse, SerializeThenParseIsIdentity) {
  std::vector<StructuredValue> values = {
      QueryIntent::lookup,
      QueryIntent::text,
      StructuredResponse(Dictionary{"mitigate", {"to lessen"}, {"alleviate"}, {"We mitigate risk."}}),
      StructuredResponse(Translation{"회의를 연기합시다", "Let's postpone the meeting.", "Polite suggestion."}),
      StructuredResponse(Refinement{"I has a question", "I have a question", "Subject-verb agreement."}),
      StructuredResponse(TextBody{"plain {braces} and \"quotes\""}),
      EvaluationResult{true, false, "too easy"},
      TaskContext{"the patient's airway", "Writing a clinical email", ContextSource::client_supplied},
      true,
      false,
  };
  QuestionDraft d{"id", "a ____ b", {"x", "y", "z"}, 2, "e", "r", std::string("hint"), "m", true};
  values.push_back(std::vector<QuestionDraft>{d, d});
  const SchemaTag tags[] = {SchemaTag::intent_label,     SchemaTag::response_payload, SchemaTag::question_batch,
                            SchemaTag::evaluation,       SchemaTag::context_extraction, SchemaTag::language_check};
  for (const auto& v : values) {
    const auto text = serialize_structured(v);
    SchemaTag tag = tags[0];
    if (v.index() == 1) tag = tags[1];
    if (v.index() == 2) tag = tags[2];
    if (v.index() == 3) tag = tags[3];
    if (v.index() == 4) tag = tags[4];
    if (v.index() == 5) tag = tags[5];
    EXPECT_EQ(parse_structured(text, tag), v) << text;
    EXPECT_EQ(parse_structured("```json\n" + text + "\n```", tag), v) << text;
  }
}
