#pragma once

#include "lingoq/conversation.hpp"
#include "lingoq/pool.hpp"
#include "lingoq/quizgen.hpp"
#include "lingoq/session.hpp"
#include "lingoq/store.hpp"

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <thread>

namespace lingoq::service {

using Clock = std::function<Timestamp()>;

struct Options {
  QuizPolicy policy;
  pool::ReviewWeightParams weights;
  conversation::IntentTemplates templates;
  std::string user_language = "Korean";
  UtcOffset timezone;
  Seconds evening_cutoff = std::chrono::hours{18};
  std::uint64_t seed = 0;  // 0 seeds from std::random_device
  std::vector<QuestionDraft> exam_samples = quizgen::default_exam_samples();
};

struct PostMessage {
  std::string text;
  std::optional<QueryIntent> intent;  // explicit selection skips classification
  std::optional<TaskContext> context;
  std::optional<std::string> capture_text;  // raw window text; context is extracted from it
};

struct PostResult {
  ChatMessage user_message;
  ChatMessage assistant_message;
  std::string pair_id;
};

struct TickReport {
  std::size_t handed_out = 0;
  std::size_t committed = 0;
  std::size_t filtered = 0;
  std::size_t accepted = 0;
  std::size_t discarded = 0;
  std::vector<std::string> failures;  // pair ids released for retry
};

inline void to_json(Json& j, const TickReport& r) {
  j = {{"handed_out", r.handed_out}, {"committed", r.committed}, {"filtered", r.filtered},
       {"accepted", r.accepted},     {"discarded", r.discarded}, {"failures", r.failures}};
}

/// Moves one processed pair into the pool. Live polling and offline batch
/// generation both go through here, so they produce identical pools.
inline void commit_report(store::Snapshot& s, const QueryPair& pair, const quizgen::PairReport& report) {
  for (const auto& q : report.accepted()) {
    const bool exists = std::any_of(s.pool.begin(), s.pool.end(), [&](const PoolEntry& e) {
      return e.user_id == pair.user_id && e.question.id() == q.id();
    });
    if (!exists) s.pool.push_back({q, pair.user_id, 0, 0, 0, std::nullopt, pair.created_at});
  }
  s.audit.push_back(report);
  s.queue.committed.insert(pair.id);
}

/// Facade over the modules; owns no business rules of its own.
class Service {
 public:
  Service(store::Store& store, const llm::Gateway& gw, Options opts = {}, Clock clock = now_utc)
      : store_(store), gw_(gw), opts_(std::move(opts)), clock_(std::move(clock)),
        rng_(opts_.seed ? opts_.seed : std::random_device{}()) {
    if (auto errs = validate_policy(opts_.policy); !errs.empty()) {
      fail(ErrorCode::invalid_policy, errs.front(), {{"errors", errs}});
    }
    if (auto errs = pool::validate_params(opts_.weights); !errs.empty()) {
      fail(ErrorCode::invalid_policy, errs.front(), {{"errors", errs}});
    }
  }

  const Options& options() const { return opts_; }
  Timestamp now() const { return clock_(); }

  // -- threads ---------------------------------------------------------------

  ChatThread create_thread(const std::string& user_id, const std::string& title = {}) {
    const auto at = now();
    return store_.write([&](store::Snapshot& s) {
      ChatThread t{s.fresh_id("t"), user_id, title, at, {}};
      s.threads.emplace(t.id, t);
      s.active_since.try_emplace(user_id, at);
      return t;
    });
  }

  std::vector<ChatThread> list_threads(const std::string& user_id) const {
    return store_.read([&](const store::Snapshot& s) {
      std::vector<ChatThread> out;
      for (const auto& [id, t] : s.threads) {
        if (t.user_id == user_id) out.push_back(t);
      }
      std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
      });
      return out;
    });
  }

  ChatThread get_thread(const std::string& user_id, const std::string& thread_id) const {
    return store_.read([&](const store::Snapshot& s) {
      return s.thread_for(user_id, thread_id);
    });
  }

  /// Classifies (unless an intent was chosen), generates the reply, appends
  /// both turns and queues the pair for question generation. Nothing is
  /// stored when a provider call fails.
  PostResult post_message(const std::string& user_id, const std::string& thread_id, const PostMessage& msg) {
    if (is_blank_text(msg.text)) fail(ErrorCode::bad_request, "message text is empty");
    std::lock_guard thread_lock(*thread_mutex(thread_id));
    const auto thread = get_thread(user_id, thread_id);

    auto context = msg.context;
    if (context) check_context(*context);
    if (!context && msg.capture_text) context = conversation::extract_task_context(gw_, *msg.capture_text);
    const auto intent = msg.intent ? *msg.intent : conversation::classify_intent(gw_, msg.text);
    auto payload = conversation::generate_response(gw_, thread, {msg.text, intent, context, opts_.user_language},
                                                   opts_.templates);
    const auto at = now();

    return store_.write([&](store::Snapshot& s) {
      auto& t = s.thread_for(user_id, thread_id);
      const auto history = t.messages;
      auto user_msg = ChatMessage::from_user(s.fresh_id("m"), t.id, msg.text, intent, at);
      auto reply = ChatMessage::from_assistant(s.fresh_id("m"), t.id, std::move(payload), at);
      t.messages.push_back(user_msg);
      if (context) user_msg = conversation::attach_context(t, user_msg.id, *context);
      t.messages.push_back(reply);
      QueryPair pair{s.fresh_id("p"), user_id, t.id, user_msg, reply, history, at};
      s.queue.enqueue(pair);
      s.active_since.try_emplace(user_id, at);
      return PostResult{user_msg, reply, pair.id};
    });
  }

  ChatMessage attach_context(const std::string& user_id, const std::string& message_id, const TaskContext& ctx) {
    check_context(ctx);
    return store_.write([&](store::Snapshot& s) {
      auto [thread, msg] = s.message_for(user_id, message_id);
      auto updated = conversation::attach_context(*thread, message_id, ctx);
      for (auto& p : s.queue.pairs) {
        if (p.query.id == message_id && !s.queue.committed.count(p.id)) p.query.context = ctx;
      }
      return updated;
    });
  }

  /// Marks an assistant reply; questions already generated from it and
  /// queued pairs pick up the flag.
  ChatMessage mark_message(const std::string& user_id, const std::string& message_id, bool marked) {
    return store_.write([&](store::Snapshot& s) {
      auto [thread, msg] = s.message_for(user_id, message_id);
      auto updated = conversation::set_mark(*thread, message_id, marked);
      for (auto& e : s.pool) {
        if (e.user_id == user_id && e.question.source_message_id() == message_id) e.question = e.question.with_marked(marked);
      }
      for (auto& p : s.queue.pairs) {
        if (p.response.id == message_id) p.response.marked = marked;
      }
      return updated;
    });
  }

  // -- quizzes ---------------------------------------------------------------

  /// Assembles and starts a quiz. Any active quiz of the user is replaced
  /// (abandoned); exposures are counted at start.
  session::QuizSession create_quiz(const std::string& user_id) {
    const auto at = now();
    return store_.write([&](store::Snapshot& s) {
      pool::Quiz quiz;
      {
        std::lock_guard lock(rng_mu_);
        quiz = pool::assemble_quiz(s.pool, user_id, at, opts_.policy, opts_.weights, rng_);
      }
      for (auto& [id, existing] : s.sessions) {
        if (existing.user_id == user_id && existing.state == session::SessionState::active) session::abandon(existing);
      }
      pool::record_exposures(s.pool, quiz);
      auto sess = session::start_session(s.fresh_id("q"), quiz, at);
      s.sessions.emplace(sess.id, sess);
      s.active_since.try_emplace(user_id, at);
      return sess;
    });
  }

  session::QuizSession get_quiz(const std::string& user_id, const std::string& quiz_id) const {
    return store_.read([&](const store::Snapshot& s) {
      return s.session_for(user_id, quiz_id);
    });
  }

  std::vector<session::QuizSession> list_quizzes(const std::string& user_id) const {
    return store_.read([&](const store::Snapshot& s) {
      std::vector<session::QuizSession> out;
      for (const auto& [id, q] : s.sessions) {
        if (q.user_id == user_id) out.push_back(q);
      }
      return out;
    });
  }

  /// Grades one answer; the submission log and the pool counters change in
  /// the same transaction.
  session::Feedback answer(const std::string& user_id, const std::string& quiz_id, const std::string& question_id,
                           int option_index, std::optional<std::uint64_t> expected_version = std::nullopt) {
    const auto at = now();
    return store_.write([&](store::Snapshot& s) {
      auto& sess = s.session_for(user_id, quiz_id);
      auto fb = session::submit_answer(sess, question_id, option_index, at, expected_version);
      session::apply_submission(s.pool, user_id, sess.submissions.back());
      return fb;
    });
  }

  session::QuizSession abandon_quiz(const std::string& user_id, const std::string& quiz_id) {
    return store_.write([&](store::Snapshot& s) {
      auto& sess = s.session_for(user_id, quiz_id);
      session::abandon(sess);
      return sess;
    });
  }

  session::DashboardStats dashboard(const std::string& user_id) const {
    const auto at = now();
    return store_.read([&](const store::Snapshot& s) {
      std::vector<session::QuizSession> sessions;
      for (const auto& [id, q] : s.sessions) sessions.push_back(q);
      return session::dashboard_stats(sessions, s.pool, user_id, at, opts_.timezone);
    });
  }

  pool::ActivitySummary activity(const std::string& user_id) const {
    const auto at = now();
    return store_.read([&](const store::Snapshot& s) {
      pool::ActivitySummary a;
      a.timezone = opts_.timezone;
      a.evening_cutoff = opts_.evening_cutoff;
      auto since = s.active_since.find(user_id);
      a.active_since = since == s.active_since.end() ? at : since->second;
      for (const auto& [id, q] : s.sessions) {
        if (q.user_id != user_id || !q.completed_at) continue;
        if (!a.last_quiz_completed || *q.completed_at > *a.last_quiz_completed) a.last_quiz_completed = q.completed_at;
      }
      for (const auto& e : s.pool) {
        if (e.user_id == user_id && e.attempts == 0 && opts_.timezone.same_day(e.created_at, at)) {
          ++a.unattempted_generated_today;
        }
      }
      return a;
    });
  }

  bool notification_eligible(const std::string& user_id) const { return pool::notify_eligible(activity(user_id), now()); }

  std::vector<PoolEntry> pool_entries(const std::string& user_id) const {
    return store_.read([&](const store::Snapshot& s) {
      std::vector<PoolEntry> out;
      for (const auto& e : s.pool) {
        if (e.user_id == user_id) out.push_back(e);
      }
      return out;
    });
  }

  // -- scheduler -------------------------------------------------------------

  /// One polling pass: hands out new pairs, runs the question pipeline on
  /// each and commits the results. A pair whose processing fails is
  /// released and retried on the next tick.
  TickReport tick() {
    std::lock_guard tick_lock(tick_mu_);
    const auto at = now();
    const auto pairs = store_.read([&](const store::Snapshot& s) { return poller_.poll(s.queue, at); });
    TickReport report;
    report.handed_out = pairs.size();
    for (const auto& pair : pairs) {
      try {
        // Re-read so marks placed after the poll are honoured.
        const auto current = store_.read([&](const store::Snapshot& s) {
          for (const auto& p : s.queue.pairs) {
            if (p.id == pair.id) return p;
          }
          return pair;
        });
        const auto result = quizgen::process_pair(gw_, current, opts_.policy, opts_.exam_samples);
        store_.write([&](store::Snapshot& s) {
          commit_report(s, current, result);
          poller_.commit(s.queue, current.id);
        });
        ++report.committed;
        report.filtered += result.filtered ? 1 : 0;
        report.accepted += result.accepted().size();
        report.discarded += static_cast<std::size_t>(result.discarded());
      } catch (const Error&) {
        poller_.release(pair.id);
        report.failures.push_back(pair.id);
      }
    }
    return report;
  }

 private:
  std::shared_ptr<std::mutex> thread_mutex(const std::string& thread_id) {
    std::lock_guard lock(locks_mu_);
    auto& m = thread_locks_[thread_id];
    if (!m) m = std::make_shared<std::mutex>();
    return m;
  }

  store::Store& store_;
  const llm::Gateway& gw_;
  Options opts_;
  Clock clock_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
  std::mutex tick_mu_;
  pool::Poller poller_;
  std::mutex locks_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> thread_locks_;
};

/// Runs Service::tick every poll interval on a background thread.
class Scheduler {
 public:
  explicit Scheduler(Service& svc, std::function<void(const TickReport&)> on_tick = {})
      : svc_(svc), on_tick_(std::move(on_tick)) {}
  ~Scheduler() { stop(); }

  void start() {
    if (worker_.joinable()) return;
    stopping_ = false;
    worker_ = std::thread([this] { run(); });
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

 private:
  void run() {
    std::unique_lock lock(mu_);
    while (!stopping_) {
      lock.unlock();
      try {
        auto r = svc_.tick();
        if (on_tick_) on_tick_(r);
      } catch (const std::exception&) {
        // Storage trouble: the next tick retries.
      }
      lock.lock();
      cv_.wait_for(lock, svc_.options().policy.poll_interval, [this] { return stopping_; });
    }
  }

  Service& svc_;
  std::function<void(const TickReport&)> on_tick_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace lingoq::service
