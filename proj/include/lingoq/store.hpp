#pragma once

#include "lingoq/domain.hpp"
#include "lingoq/pool.hpp"
#include "lingoq/session.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace lingoq::store {

/// Everything the service persists.
struct Snapshot {
  std::map<std::string, ChatThread> threads;
  pool::PairQueue queue;
  std::vector<PoolEntry> pool;
  std::map<std::string, session::QuizSession> sessions;
  std::vector<Json> audit;  // one QA report per processed pair
  std::map<std::string, Timestamp> active_since;  // first activity per user
  std::uint64_t next_id = 1;

  std::string fresh_id(std::string_view prefix) { return std::string(prefix) + std::to_string(next_id++); }

  ChatThread& thread_for(const std::string& user_id, const std::string& thread_id);
  std::pair<ChatThread*, ChatMessage*> message_for(const std::string& user_id, const std::string& message_id);
  session::QuizSession& session_for(const std::string& user_id, const std::string& session_id);

  const ChatThread& thread_for(const std::string& user_id, const std::string& thread_id) const {
    return const_cast<Snapshot*>(this)->thread_for(user_id, thread_id);
  }
  const session::QuizSession& session_for(const std::string& user_id, const std::string& session_id) const {
    return const_cast<Snapshot*>(this)->session_for(user_id, session_id);
  }

  bool operator==(const Snapshot&) const = default;
};

/// Lookups scoped to one user: another user's entity is forbidden, a
/// missing one is not_found.
inline ChatThread& Snapshot::thread_for(const std::string& user_id, const std::string& thread_id) {
  auto it = threads.find(thread_id);
  if (it == threads.end()) fail(ErrorCode::not_found, "no thread " + thread_id);
  if (it->second.user_id != user_id) fail(ErrorCode::forbidden, "thread " + thread_id + " belongs to another user");
  return it->second;
}

inline std::pair<ChatThread*, ChatMessage*> Snapshot::message_for(const std::string& user_id,
                                                                  const std::string& message_id) {
  for (auto& [id, t] : threads) {
    for (auto& m : t.messages) {
      if (m.id != message_id) continue;
      if (t.user_id != user_id) fail(ErrorCode::forbidden, "message " + message_id + " belongs to another user");
      return {&t, &m};
    }
  }
  fail(ErrorCode::not_found, "no message " + message_id);
}

inline session::QuizSession& Snapshot::session_for(const std::string& user_id, const std::string& session_id) {
  auto it = sessions.find(session_id);
  if (it == sessions.end()) fail(ErrorCode::not_found, "no quiz " + session_id);
  if (it->second.user_id != user_id) fail(ErrorCode::forbidden, "quiz " + session_id + " belongs to another user");
  return it->second;
}

inline constexpr int kSnapshotFormat = 1;

inline Json snapshot_to_json(const Snapshot& s) {
  Json threads = Json::array();
  for (const auto& [id, t] : s.threads) threads.push_back(t);
  Json sessions = Json::array();
  for (const auto& [id, x] : s.sessions) sessions.push_back(x);
  Json active = Json::object();
  for (const auto& [u, t] : s.active_since) active[u] = to_epoch(t);
  return {{"format", kSnapshotFormat},
          {"next_id", s.next_id},
          {"threads", threads},
          {"pairs", s.queue.pairs},
          {"committed", s.queue.committed},
          {"pool", s.pool},
          {"sessions", sessions},
          {"audit", s.audit},
          {"active_since", active}};
}

inline Snapshot snapshot_from_json(const Json& j) {
  if (j.value("format", 0) != kSnapshotFormat) fail(ErrorCode::storage_error, "unsupported snapshot format");
  Snapshot s;
  s.next_id = j.at("next_id").get<std::uint64_t>();
  for (const auto& t : j.at("threads")) {
    auto thread = t.get<ChatThread>();
    s.threads.emplace(thread.id, std::move(thread));
  }
  s.queue.pairs = j.at("pairs").get<std::vector<QueryPair>>();
  s.queue.committed = j.at("committed").get<std::set<std::string>>();
  for (const auto& e : j.at("pool")) s.pool.push_back(pool_entry_from_json(e));
  for (const auto& x : j.at("sessions")) {
    auto sess = session::session_from_json(x);
    s.sessions.emplace(sess.id, std::move(sess));
  }
  s.audit = j.value("audit", std::vector<Json>{});
  const auto active = j.value("active_since", Json::object());
  for (const auto& [u, t] : active.items()) s.active_since[u] = from_epoch(t.get<std::int64_t>());
  return s;
}

/// File-backed snapshot store. Every transaction runs against a copy and is
/// written (temp file + rename) before it becomes visible, so a failed or
/// interrupted mutation leaves the previous state intact. An empty path
/// keeps everything in memory.
class Store {
 public:
  explicit Store(std::filesystem::path path = {}) : path_(std::move(path)) {
    if (!path_.empty() && std::filesystem::exists(path_)) {
      std::ifstream in(path_);
      if (!in) fail(ErrorCode::storage_error, "cannot read " + path_.string());
      try {
        state_ = snapshot_from_json(Json::parse(in));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::storage_error, "corrupt snapshot " + path_.string() + ": " + e.what());
      }
    }
  }

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  /// Consistent copy of the whole state.
  Snapshot read() const {
    std::lock_guard lock(mu_);
    return state_;
  }

  template <typename F>
  auto read(F&& f) const -> decltype(f(std::declval<const Snapshot&>())) {
    std::lock_guard lock(mu_);
    return f(static_cast<const Snapshot&>(state_));
  }

  /// Runs `f` on a working copy; commits and persists it only if `f`
  /// returns normally.
  template <typename F>
  auto write(F&& f) -> decltype(f(std::declval<Snapshot&>())) {
    std::lock_guard lock(mu_);
    Snapshot work = state_;
    if constexpr (std::is_void_v<decltype(f(work))>) {
      f(work);
      commit(std::move(work));
    } else {
      auto result = f(work);
      commit(std::move(work));
      return result;
    }
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  void commit(Snapshot work) {
    if (!path_.empty()) persist(work);
    state_ = std::move(work);
  }

  void persist(const Snapshot& s) const {
    const auto tmp = path_.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) fail(ErrorCode::storage_error, "cannot write " + tmp);
      out << snapshot_to_json(s).dump() << '\n';
      out.flush();
      if (!out) fail(ErrorCode::storage_error, "short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path_, ec);
    if (ec) fail(ErrorCode::storage_error, "cannot replace " + path_.string() + ": " + ec.message());
  }

  std::filesystem::path path_;
  mutable std::mutex mu_;
  Snapshot state_;
};

// ---------------------------------------------------------------------------
// Pool export

/// One JSON object per line, ordered by user then question id. The ordering
/// makes exports comparable byte for byte.
inline std::string export_pool_jsonl(const std::vector<PoolEntry>& pool, const std::string& user_id = {}) {
  std::vector<const PoolEntry*> rows;
  for (const auto& e : pool) {
    if (user_id.empty() || e.user_id == user_id) rows.push_back(&e);
  }
  std::sort(rows.begin(), rows.end(), [](const PoolEntry* a, const PoolEntry* b) {
    return std::tie(a->user_id, a->question.id()) < std::tie(b->user_id, b->question.id());
  });
  std::string out;
  for (const auto* e : rows) out += Json(*e).dump() + "\n";
  return out;
}

}  // namespace lingoq::store
