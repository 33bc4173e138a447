#pragma once

#include "lingoq/eval.hpp"
#include "lingoq/llm/parse.hpp"
#include "lingoq/service.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace lingoq::offline {

// ---------------------------------------------------------------------------
// Chat export import

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct ImportReport {
  std::size_t lines = 0;
  std::size_t ingested = 0;
  std::size_t duplicates = 0;
  std::vector<LineError> errors;
};

inline Json to_json(const ImportReport& r) {
  auto errs = Json::array();
  for (const auto& e : r.errors) errs.push_back({{"line", e.line}, {"message", e.message}});
  return {{"lines", r.lines}, {"ingested", r.ingested}, {"duplicates", r.duplicates}, {"errors", errs}};
}

namespace detail {

inline std::string hash_id(std::string_view prefix, std::string_view data) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(llm::fnv1a64(data)));
  return std::string(prefix) + hex;
}

inline Timestamp parse_when(const Json& j) {
  if (j.is_number_integer()) return from_epoch(j.get<std::int64_t>());
  if (j.is_string()) return parse_iso8601(j.get<std::string>());
  fail(ErrorCode::schema_violation, "timestamp must be an ISO-8601 string or epoch seconds");
}

/// Text replies are stored verbatim; structured intents need the reply in
/// the payload's JSON form.
inline StructuredResponse parse_reply(const std::string& assistant_text, QueryIntent intent) {
  if (intent == QueryIntent::text) return TextBody{assistant_text};
  StructuredResponse payload;
  try {
    payload = llm::parse_payload(assistant_text);
  } catch (const Error& e) {
    fail(ErrorCode::schema_violation, "assistant_text is not a " + std::string(to_string(intent)) + " payload: " + e.what());
  }
  if (intent_of(payload) != intent) {
    fail(ErrorCode::schema_violation, "assistant_text holds a " + std::string(payload_type_name(payload)) +
                                          " payload but intent is " + std::string(to_string(intent)));
  }
  return payload;
}

inline std::string required_text(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) fail(ErrorCode::schema_violation, std::string("missing ") + key);
  auto s = it->get<std::string>();
  if (is_blank_text(s)) fail(ErrorCode::schema_violation, std::string(key) + " is empty");
  return s;
}

}  // namespace detail

/// Ingests one user's chat export: JSONL of
/// {user_text, assistant_text, intent, context?, timestamp, thread?}.
///
/// Each line becomes a user turn, an assistant turn and a queued pair, as a
/// live exchange would. Ids derive from the line content, so importing the
/// same file twice adds nothing. Lines sharing a `thread` value land in one
/// thread in file order; otherwise each line gets its own. Bad lines are
/// reported and skipped.
inline ImportReport import_chat_export(store::Store& store, const std::string& user_id, std::istream& in) {
  if (user_id.empty()) fail(ErrorCode::bad_request, "import needs a user id");
  ImportReport report;
  store.write([&](store::Snapshot& s) {
    std::string line;
    while (std::getline(in, line)) {
      ++report.lines;
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      try {
        Json j;
        try {
          j = Json::parse(line);
        } catch (const nlohmann::json::exception& e) {
          fail(ErrorCode::schema_violation, std::string("not JSON: ") + e.what());
        }
        if (!j.is_object()) fail(ErrorCode::schema_violation, "line must be a JSON object");
        const auto user_text = detail::required_text(j, "user_text");
        const auto assistant_text = detail::required_text(j, "assistant_text");
        const auto intent = parse_intent(detail::required_text(j, "intent"));
        if (!j.contains("timestamp")) fail(ErrorCode::schema_violation, "missing timestamp");
        const auto at = detail::parse_when(j.at("timestamp"));
        std::optional<TaskContext> context;
        if (auto it = j.find("context"); it != j.end() && !it->is_null()) {
          try {
            context = it->get<TaskContext>();
          } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::schema_violation, std::string("bad context: ") + e.what());
          }
        }
        auto payload = detail::parse_reply(assistant_text, intent);

        const auto pair_id = detail::hash_id("x", user_id + "\n" + j.dump());
        if (s.queue.contains(pair_id)) {
          ++report.duplicates;
          continue;
        }
        const auto thread_key = j.contains("thread") && j["thread"].is_string() ? j["thread"].get<std::string>() : pair_id;
        const auto thread_id = detail::hash_id("xt", user_id + "\n" + thread_key);
        auto [it, created] = s.threads.try_emplace(thread_id, ChatThread{thread_id, user_id, "imported", at, {}});
        auto& thread = it->second;
        if (!created && thread.user_id != user_id) fail(ErrorCode::forbidden, "thread belongs to another user");

        const auto history = thread.messages;
        auto query = ChatMessage::from_user(pair_id + "-u", thread_id, user_text, intent, at);
        query.context = context;
        auto reply = ChatMessage::from_assistant(pair_id + "-a", thread_id, std::move(payload), at);
        thread.messages.push_back(query);
        thread.messages.push_back(reply);
        s.queue.enqueue({pair_id, user_id, thread_id, query, reply, history, at});
        s.active_since.try_emplace(user_id, at);
        ++report.ingested;
      } catch (const Error& e) {
        report.errors.push_back({report.lines, e.what()});
      }
    }
  });
  return report;
}

inline ImportReport import_chat_export_file(store::Store& store, const std::string& user_id, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::storage_error, "cannot read " + path);
  return import_chat_export(store, user_id, in);
}

// ---------------------------------------------------------------------------
// Batch generation

struct BatchReport {
  std::size_t pairs_processed = 0;
  std::size_t filtered = 0;
  std::size_t accepted = 0;
  std::size_t refined = 0;
  std::size_t discarded = 0;
  std::size_t generation_errors = 0;  // malformed batches that were salvaged
  std::size_t remaining = 0;          // pairs still queued when the run ended
  std::optional<std::string> resume_cursor;  // pair that failed; rerunning starts there
  std::optional<Json> failure;
};

inline Json to_json(const BatchReport& r) {
  Json j = {{"pairs_processed", r.pairs_processed}, {"filtered", r.filtered},   {"accepted", r.accepted},
            {"refined", r.refined},                 {"discarded", r.discarded}, {"generation_errors", r.generation_errors},
            {"remaining", r.remaining}};
  j["resume_cursor"] = r.resume_cursor ? Json(*r.resume_cursor) : Json(nullptr);
  j["failure"] = r.failure ? *r.failure : Json(nullptr);
  return j;
}

/// Runs the question pipeline over a user's uncommitted pairs in queue
/// order, committing each pair as it finishes. A provider failure stops the
/// run; pairs already committed stay committed, so running again resumes at
/// the cursor.
inline BatchReport batch_generate(store::Store& store, const llm::Gateway& gw, const std::string& user_id,
                                  const QuizPolicy& policy = {},
                                  const std::vector<QuestionDraft>& exam_samples = quizgen::default_exam_samples()) {
  const auto pending = store.read([&](const store::Snapshot& s) {
    std::vector<QueryPair> out;
    for (const auto& p : s.queue.pairs) {
      if (p.user_id == user_id && !s.queue.committed.count(p.id)) out.push_back(p);
    }
    return out;
  });
  BatchReport report;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    const auto& pair = pending[i];
    quizgen::PairReport result;
    try {
      result = quizgen::process_pair(gw, pair, policy, exam_samples);
    } catch (const Error& e) {
      report.resume_cursor = pair.id;
      report.failure = Json{{"code", to_string(e.code())}, {"message", e.what()}, {"detail", e.detail()}};
      report.remaining = pending.size() - i;
      return report;
    }
    store.write([&](store::Snapshot& s) { service::commit_report(s, pair, result); });
    ++report.pairs_processed;
    report.filtered += result.filtered ? 1 : 0;
    report.accepted += result.accepted().size();
    report.refined += static_cast<std::size_t>(result.refined());
    report.discarded += static_cast<std::size_t>(result.discarded());
    report.generation_errors += result.generation_error ? 1 : 0;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Exports

/// One QA report per processed pair, in processing order.
inline std::string export_audit_jsonl(const std::vector<Json>& audit) {
  std::string out;
  for (const auto& r : audit) out += r.dump() + "\n";
  return out;
}

/// Sessions with their submission logs, ordered by session id.
inline std::string export_sessions_jsonl(const std::map<std::string, session::QuizSession>& sessions,
                                         const std::string& user_id = {}) {
  std::string out;
  for (const auto& [id, s] : sessions) {
    if (user_id.empty() || s.user_id == user_id) out += Json(s).dump() + "\n";
  }
  return out;
}

/// The evaluator's first verdict on each generated candidate, keyed by
/// question id. This is what the expert labels are scored against.
inline std::map<std::string, eval::BinaryLabel> decisions_from_audit(const std::vector<Json>& audit) {
  std::map<std::string, eval::BinaryLabel> out;
  for (const auto& report : audit) {
    for (const auto& outcome : report.value("outcomes", Json::array())) {
      for (const auto& step : outcome.value("audit_trail", Json::array())) {
        const auto& ev = step.at("evaluation");
        if (ev.is_null()) continue;
        out.try_emplace(step.at("version").at("id").get<std::string>(),
                        eval::BinaryLabel{ev.at("answerability").get<bool>(), ev.at("proficiency").get<bool>()});
        break;
      }
    }
  }
  return out;
}

}  // namespace lingoq::offline
