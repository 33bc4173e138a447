#pragma once

#include "lingoq/domain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace lingoq::pool {

// ---------------------------------------------------------------------------
// Review weights

struct ReviewWeightParams {
  double mark_boost = 1.5;
  double wrong_rate_gain = 1.0;
  double recency_halfsat_days = 7.0;
  double recency_cap_days = 14.0;

  bool operator==(const ReviewWeightParams&) const = default;
};

inline std::vector<std::string> validate_params(const ReviewWeightParams& p) {
  std::vector<std::string> errors;
  if (!(p.mark_boost >= 1.0)) errors.emplace_back("mark_boost must be >= 1");
  if (!(p.wrong_rate_gain > 0.0)) errors.emplace_back("wrong_rate_gain must be positive");
  if (!(p.recency_halfsat_days > 0.0)) errors.emplace_back("recency_halfsat must be positive");
  if (!(p.recency_cap_days > 0.0)) errors.emplace_back("recency_cap must be positive");
  return errors;
}

inline void to_json(Json& j, const ReviewWeightParams& p) {
  j = {{"mark_boost", p.mark_boost},
       {"wrong_rate_gain", p.wrong_rate_gain},
       {"recency_halfsat_days", p.recency_halfsat_days},
       {"recency_cap_days", p.recency_cap_days}};
}

inline void from_json(const Json& j, ReviewWeightParams& p) {
  ReviewWeightParams d;
  p.mark_boost = j.value("mark_boost", d.mark_boost);
  p.wrong_rate_gain = j.value("wrong_rate_gain", d.wrong_rate_gain);
  p.recency_halfsat_days = j.value("recency_halfsat_days", d.recency_halfsat_days);
  p.recency_cap_days = j.value("recency_cap_days", d.recency_cap_days);
}

/// Days since the entry was last practiced (or entered the pool), never
/// negative.
inline double days_since_practice(const PoolEntry& e, Timestamp now) {
  const auto since = e.last_practiced.value_or(e.created_at);
  const double secs = static_cast<double>((now - since).count());
  return std::max(0.0, secs / 86400.0);
}

/// weight = 1/(1+exposures)
///        * (1 + gain * wrong/max(attempts,1))
///        * (marked ? mark_boost : 1)
///        * (1 + min(days_stale, cap)/halfsat)
inline double compute_weight(const PoolEntry& e, Timestamp now, const ReviewWeightParams& p = {}) {
  if (e.exposures < 1) fail(ErrorCode::precondition_failed, "new questions are never review-weighted");
  const double exposure = 1.0 / (1.0 + e.exposures);
  const double wrong_rate = static_cast<double>(e.wrong_attempts) / std::max(e.attempts, 1);
  const double difficulty = 1.0 + p.wrong_rate_gain * wrong_rate;
  const double mark = e.question.marked_source() ? p.mark_boost : 1.0;
  const double recency = 1.0 + std::min(days_since_practice(e, now), p.recency_cap_days) / p.recency_halfsat_days;
  return exposure * difficulty * mark * recency;
}

/// Draws up to k distinct indices with probability proportional to
/// `weights`, renormalising after each draw. Zero-weight items are drawn
/// only once every positive-weight item is exhausted.
template <typename Rng>
std::vector<std::size_t> weighted_sample_without_replacement(std::vector<double> weights, std::size_t k, Rng& rng) {
  std::vector<std::size_t> picked;
  std::vector<bool> taken(weights.size(), false);
  k = std::min(k, weights.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (picked.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) total += taken[i] ? 0.0 : weights[i];
    std::size_t choice = weights.size();
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        if (taken[i] || weights[i] <= 0.0) continue;
        acc += weights[i];
        choice = i;
        if (target < acc) break;
      }
    } else {
      for (std::size_t i = 0; i < weights.size() && choice == weights.size(); ++i) {
        if (!taken[i]) choice = i;
      }
    }
    taken[choice] = true;
    picked.push_back(choice);
  }
  return picked;
}

// ---------------------------------------------------------------------------
// Quiz assembly

struct QuizItem {
  Question question;
  bool is_new = false;  // exposures == 0 at assembly time
  bool operator==(const QuizItem&) const = default;
};

struct Quiz {
  std::string user_id;
  std::vector<QuizItem> items;
  bool partial = false;  // fewer than quiz_size questions were available

  std::size_t new_items() const {
    return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [](const auto& i) { return i.is_new; }));
  }
};

/// Selects a quiz from one user's pool.
///
/// New questions (never shown) fill the new slots freshest first. Review
/// questions (shown at least once) are sampled by compute_weight without
/// replacement. A shortfall on either side is filled from the other; if the
/// pool cannot supply quiz_size questions the quiz is shorter and flagged
/// partial. Selection never mutates the pool.
template <typename Rng>
Quiz assemble_quiz(const std::vector<PoolEntry>& entries, const std::string& user_id, Timestamp now,
                   const QuizPolicy& policy, const ReviewWeightParams& params, Rng& rng) {
  std::vector<const PoolEntry*> fresh;
  std::vector<const PoolEntry*> seen;
  for (const auto& e : entries) {
    if (e.user_id != user_id) continue;
    (e.is_new() ? fresh : seen).push_back(&e);
  }
  if (fresh.empty() && seen.empty()) fail(ErrorCode::no_questions, "the question pool is empty");

  std::sort(fresh.begin(), fresh.end(), [](const PoolEntry* a, const PoolEntry* b) {
    if (a->created_at != b->created_at) return a->created_at > b->created_at;
    return a->question.id() < b->question.id();
  });
  std::sort(seen.begin(), seen.end(),
            [](const PoolEntry* a, const PoolEntry* b) { return a->question.id() < b->question.id(); });

  const auto quiz_size = static_cast<std::size_t>(policy.quiz_size);
  const auto want_review = static_cast<std::size_t>(policy.review_count);
  const auto want_new = static_cast<std::size_t>(policy.new_count);

  const std::size_t review_target = std::min(seen.size(), want_review + (want_new - std::min(want_new, fresh.size())));
  const std::size_t new_target = std::min(fresh.size(), quiz_size - review_target);

  Quiz quiz{user_id, {}, false};
  for (std::size_t i = 0; i < new_target; ++i) quiz.items.push_back({fresh[i]->question, true});

  std::vector<double> weights;
  weights.reserve(seen.size());
  for (const auto* e : seen) weights.push_back(compute_weight(*e, now, params));
  for (auto idx : weighted_sample_without_replacement(std::move(weights), review_target, rng)) {
    quiz.items.push_back({seen[idx]->question, false});
  }
  quiz.partial = quiz.items.size() < quiz_size;
  return quiz;
}

/// Applies the exposure that starting a quiz implies.
inline void record_exposures(std::vector<PoolEntry>& entries, const Quiz& quiz) {
  std::set<std::string> ids;
  for (const auto& item : quiz.items) ids.insert(item.question.id());
  for (auto& e : entries) {
    if (e.user_id == quiz.user_id && ids.count(e.question.id())) ++e.exposures;
  }
}

// ---------------------------------------------------------------------------
// Pair polling

/// Durable part of the handoff: every pair ever enqueued and the ids whose
/// questions have been committed to the pool.
struct PairQueue {
  std::vector<QueryPair> pairs;
  std::set<std::string> committed;

  bool contains(const std::string& id) const {
    return std::any_of(pairs.begin(), pairs.end(), [&](const auto& p) { return p.id == id; });
  }

  /// False (and no change) when a pair with this id already exists.
  bool enqueue(QueryPair pair) {
    if (contains(pair.id)) return false;
    pairs.push_back(std::move(pair));
    return true;
  }

  std::size_t pending() const { return pairs.size() - committed.size(); }

  bool operator==(const PairQueue&) const = default;
};

/// In-memory part of the handoff. A pair is handed out at most once per
/// poller; if the process dies before commit(), a fresh poller over the same
/// queue hands it out again.
class Poller {
 public:
  std::vector<QueryPair> poll(const PairQueue& queue, Timestamp now) {
    std::vector<QueryPair> out;
    for (const auto& p : queue.pairs) {
      if (p.created_at > now || queue.committed.count(p.id) || in_flight_.count(p.id)) continue;
      in_flight_.insert(p.id);
      out.push_back(p);
    }
    return out;
  }

  void commit(PairQueue& queue, const std::string& pair_id) {
    queue.committed.insert(pair_id);
    in_flight_.erase(pair_id);
  }

  /// Returns a pair to the queue after a failed attempt; the next tick
  /// retries it.
  void release(const std::string& pair_id) { in_flight_.erase(pair_id); }

  std::size_t in_flight() const { return in_flight_.size(); }

 private:
  std::set<std::string> in_flight_;
};

// ---------------------------------------------------------------------------
// Reminder eligibility

struct ActivitySummary {
  std::optional<Timestamp> last_quiz_completed;
  Timestamp active_since{};       // used when no quiz was ever completed
  int unattempted_generated_today = 0;
  UtcOffset timezone;
  Seconds evening_cutoff = std::chrono::hours{18};
};

inline constexpr auto kInactivityThreshold = std::chrono::hours{72};

/// True when no quiz was completed for more than three days, or when
/// questions generated today are still unattempted at the evening cutoff.
inline bool notify_eligible(const ActivitySummary& a, Timestamp now) {
  const auto last = a.last_quiz_completed.value_or(a.active_since);
  if (now - last > kInactivityThreshold) return true;
  return a.unattempted_generated_today > 0 && a.timezone.time_of_day(now) >= a.evening_cutoff;
}

}  // namespace lingoq::pool
