#pragma once

#include "lingoq/domain.hpp"
#include "lingoq/pool.hpp"

#include <algorithm>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lingoq::session {

enum class SessionState { active, completed, abandoned };

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::active: return "active";
    case SessionState::completed: return "completed";
    case SessionState::abandoned: return "abandoned";
  }
  return "active";
}

struct Submission {
  std::string question_id;
  int option_index = 0;
  bool correct = false;
  Timestamp at{};
  bool operator==(const Submission&) const = default;
};

struct QuizSession {
  std::string id;
  std::string user_id;
  std::vector<pool::QuizItem> quiz;
  std::deque<std::string> queue;
  std::set<std::string> solved;
  std::vector<Submission> submissions;
  SessionState state = SessionState::active;
  bool partial = false;
  std::uint64_t version = 0;
  Timestamp started_at{};
  std::optional<Timestamp> completed_at;

  const pool::QuizItem& item(const std::string& question_id) const {
    for (const auto& i : quiz) {
      if (i.question.id() == question_id) return i;
    }
    fail(ErrorCode::not_found, "question " + question_id + " is not in this quiz");
  }
  bool operator==(const QuizSession&) const = default;
};

inline QuizSession start_session(std::string id, const pool::Quiz& quiz, Timestamp now) {
  if (quiz.items.empty()) fail(ErrorCode::no_questions, "cannot start an empty quiz");
  QuizSession s;
  s.id = std::move(id);
  s.user_id = quiz.user_id;
  s.quiz = quiz.items;
  s.partial = quiz.partial;
  s.started_at = now;
  std::set<std::string> seen;
  for (const auto& item : quiz.items) {
    if (!seen.insert(item.question.id()).second) {
      fail(ErrorCode::precondition_failed, "question " + item.question.id() + " repeats within the quiz");
    }
    s.queue.push_back(item.question.id());
  }
  return s;
}

struct Badges {
  bool is_new = false;  // first-ever exposure
  bool star = false;    // generated from a marked response
};

/// What the client sees before answering: never the key.
struct PresentedQuestion {
  std::string question_id;
  std::string stem;
  std::vector<std::string> options;
  std::optional<std::string> context_hint;
  Badges badges;
  std::size_t position = 0;  // submissions so far
};

inline void require_active(const QuizSession& s) {
  if (s.state != SessionState::active) {
    fail(ErrorCode::session_inactive, "session " + s.id + " is " + std::string(to_string(s.state)));
  }
}

inline PresentedQuestion current_question(const QuizSession& s) {
  require_active(s);
  const auto& item = s.item(s.queue.front());
  const auto& q = item.question;
  return {q.id(), q.stem(), q.options(), q.context_hint(), {item.is_new, q.marked_source()}, s.submissions.size()};
}

struct Feedback {
  bool correct = false;
  int key_index = 0;
  std::string explanation;
  std::optional<std::string> context_hint;
  bool completed = false;
  double progress = 0.0;
};

inline double progress(const QuizSession& s) {
  if (s.quiz.empty()) return 0.0;
  return static_cast<double>(s.solved.size()) / static_cast<double>(s.quiz.size());
}

/// Grades the head of the queue. Correct answers leave the queue; incorrect
/// ones go to its tail. The session completes when every question has been
/// answered correctly once.
inline Feedback submit_answer(QuizSession& s, const std::string& question_id, int option_index, Timestamp now,
                              std::optional<std::uint64_t> expected_version = std::nullopt) {
  require_active(s);
  if (expected_version && *expected_version != s.version) {
    fail(ErrorCode::version_conflict, "session " + s.id + " is at version " + std::to_string(s.version),
         {{"version", s.version}});
  }
  if (option_index < 0 || option_index >= static_cast<int>(kOptionsPerQuestion)) {
    fail(ErrorCode::invalid_option, "option_index must be 0..2");
  }
  if (question_id != s.queue.front()) {
    fail(ErrorCode::out_of_order, "expected an answer for " + s.queue.front(), {{"expected", s.queue.front()}});
  }
  const auto& q = s.item(question_id).question;
  const bool correct = option_index == q.key_index();
  s.submissions.push_back({question_id, option_index, correct, now});
  s.queue.pop_front();
  if (correct) {
    s.solved.insert(question_id);
  } else {
    s.queue.push_back(question_id);
  }
  if (s.queue.empty()) {
    s.state = SessionState::completed;
    s.completed_at = now;
  }
  ++s.version;
  return {correct, q.key_index(), q.explanation(), q.context_hint(), s.state == SessionState::completed, progress(s)};
}

inline void abandon(QuizSession& s) {
  require_active(s);
  s.state = SessionState::abandoned;
  ++s.version;
}

struct ReplayedState {
  std::deque<std::string> queue;
  std::set<std::string> solved;
  SessionState state = SessionState::active;
  bool operator==(const ReplayedState&) const = default;
};

/// Rebuilds queue, solved set and state from the quiz order and the log.
inline ReplayedState replay(const std::vector<pool::QuizItem>& quiz, const std::vector<Submission>& log) {
  ReplayedState r;
  for (const auto& item : quiz) r.queue.push_back(item.question.id());
  for (const auto& sub : log) {
    if (r.queue.empty() || r.queue.front() != sub.question_id) {
      fail(ErrorCode::schema_violation, "submission log does not match the quiz order");
    }
    r.queue.pop_front();
    if (sub.correct) r.solved.insert(sub.question_id);
    else r.queue.push_back(sub.question_id);
  }
  if (r.queue.empty()) r.state = SessionState::completed;
  return r;
}

/// Mirrors one graded submission into the pool's counters.
inline void apply_submission(std::vector<PoolEntry>& entries, const std::string& user_id, const Submission& sub) {
  for (auto& e : entries) {
    if (e.user_id != user_id || e.question.id() != sub.question_id) continue;
    ++e.attempts;
    if (!sub.correct) ++e.wrong_attempts;
    e.last_practiced = sub.at;
    return;
  }
}

struct DashboardStats {
  int quizzes_today = 0;
  int quizzes_total = 0;
  int new_questions_available = 0;
  bool operator==(const DashboardStats&) const = default;
};

inline DashboardStats dashboard_stats(const std::vector<QuizSession>& sessions, const std::vector<PoolEntry>& entries,
                                      const std::string& user_id, Timestamp now, UtcOffset tz = {}) {
  DashboardStats d;
  for (const auto& s : sessions) {
    if (s.user_id != user_id || s.state != SessionState::completed) continue;
    ++d.quizzes_total;
    if (s.completed_at && tz.same_day(*s.completed_at, now)) ++d.quizzes_today;
  }
  for (const auto& e : entries) {
    if (e.user_id == user_id && e.is_new()) ++d.new_questions_available;
  }
  return d;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(Json& j, const Submission& s) {
  j = {{"question_id", s.question_id}, {"option_index", s.option_index}, {"correct", s.correct}, {"at", to_epoch(s.at)}};
}

inline void from_json(const Json& j, Submission& s) {
  s.question_id = j.at("question_id").get<std::string>();
  s.option_index = j.at("option_index").get<int>();
  s.correct = j.at("correct").get<bool>();
  s.at = from_epoch(j.at("at").get<std::int64_t>());
}

inline void to_json(Json& j, const QuizSession& s) {
  auto items = Json::array();
  for (const auto& i : s.quiz) items.push_back({{"question", i.question}, {"is_new", i.is_new}});
  j = {{"id", s.id},
       {"user_id", s.user_id},
       {"quiz", items},
       {"queue", s.queue},
       {"solved", s.solved},
       {"submissions", s.submissions},
       {"state", to_string(s.state)},
       {"partial", s.partial},
       {"version", s.version},
       {"started_at", to_epoch(s.started_at)}};
  j["completed_at"] = s.completed_at ? Json(to_epoch(*s.completed_at)) : Json(nullptr);
}

inline QuizSession session_from_json(const Json& j) {
  QuizSession s;
  s.id = j.at("id").get<std::string>();
  s.user_id = j.at("user_id").get<std::string>();
  for (const auto& i : j.at("quiz")) s.quiz.push_back({i.at("question").get<Question>(), i.value("is_new", false)});
  s.queue = j.at("queue").get<std::deque<std::string>>();
  s.solved = j.at("solved").get<std::set<std::string>>();
  s.submissions = j.at("submissions").get<std::vector<Submission>>();
  const auto state = j.at("state").get<std::string>();
  if (state == "active") s.state = SessionState::active;
  else if (state == "completed") s.state = SessionState::completed;
  else if (state == "abandoned") s.state = SessionState::abandoned;
  else fail(ErrorCode::schema_violation, "unknown session state " + state);
  s.partial = j.value("partial", false);
  s.version = j.value("version", std::uint64_t{0});
  s.started_at = from_epoch(j.at("started_at").get<std::int64_t>());
  if (auto it = j.find("completed_at"); it != j.end() && !it->is_null()) s.completed_at = from_epoch(it->get<std::int64_t>());
  return s;
}

/// Client view of a session: no keys, only what has been earned.
inline Json public_view(const QuizSession& s) {
  Json j = {{"id", s.id},
            {"state", to_string(s.state)},
            {"version", s.version},
            {"partial", s.partial},
            {"size", s.quiz.size()},
            {"solved", s.solved.size()},
            {"submissions", s.submissions.size()},
            {"progress", progress(s)}};
  if (s.state == SessionState::active) {
    const auto q = current_question(s);
    j["current"] = {{"question_id", q.question_id},
                    {"stem", q.stem},
                    {"options", q.options},
                    {"context_hint", q.context_hint ? Json(*q.context_hint) : Json(nullptr)},
                    {"badges", {{"new", q.badges.is_new}, {"star", q.badges.star}}}};
  } else {
    j["current"] = nullptr;
  }
  return j;
}

}  // namespace lingoq::session
