#pragma once

#include "lingoq/error.hpp"
#include "lingoq/llm/prompt.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace lingoq::llm {

struct ProviderConfig {
  std::string endpoint;
  std::string model_name;
  std::string api_key;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{250};
};

inline std::vector<std::string> validate_config(const ProviderConfig& cfg) {
  std::vector<std::string> errors;
  if (cfg.timeout.count() <= 0) errors.emplace_back("timeout must be positive");
  if (cfg.max_retries < 0) errors.emplace_back("max_retries must be non-negative");
  return errors;
}

/// Reads LINGOQ_ENDPOINT, LINGOQ_MODEL, LINGOQ_API_KEY, LINGOQ_TIMEOUT_MS and
/// LINGOQ_MAX_RETRIES over the given defaults.
inline ProviderConfig config_from_env(ProviderConfig cfg = {}) {
  auto env = [](const char* name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name); v && *v) return std::string(v);
    return std::nullopt;
  };
  if (auto v = env("LINGOQ_ENDPOINT")) cfg.endpoint = *v;
  if (auto v = env("LINGOQ_MODEL")) cfg.model_name = *v;
  if (auto v = env("LINGOQ_API_KEY")) cfg.api_key = *v;
  if (auto v = env("LINGOQ_TIMEOUT_MS")) cfg.timeout = std::chrono::milliseconds{std::stoll(*v)};
  if (auto v = env("LINGOQ_MAX_RETRIES")) cfg.max_retries = std::stoi(*v);
  return cfg;
}

/// One attempt against a backend. Implementations must be safe to call
/// concurrently and signal retryable failures with transport_error or timeout.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string send(const PromptRequest& req) = 0;
};

inline bool is_transient(ErrorCode code) {
  return code == ErrorCode::transport_error || code == ErrorCode::timeout;
}

/// The single entry point to a provider: validates the request and retries
/// transient failures up to cfg.max_retries times.
class Gateway {
 public:
  Gateway(Provider& provider, ProviderConfig cfg = {}) : provider_(&provider), cfg_(std::move(cfg)) {
    if (auto errs = validate_config(cfg_); !errs.empty()) {
      fail(ErrorCode::precondition_failed, "invalid provider config: " + errs.front());
    }
  }

  std::string complete(const PromptRequest& req) const {
    check_request(req);
    for (int attempt = 0;; ++attempt) {
      try {
        return provider_->send(req);
      } catch (const Error& e) {
        if (!is_transient(e.code()) || attempt >= cfg_.max_retries) throw;
      }
      if (cfg_.retry_backoff.count() > 0) std::this_thread::sleep_for(cfg_.retry_backoff * (attempt + 1));
    }
  }

  const ProviderConfig& config() const { return cfg_; }

 private:
  Provider* provider_;
  ProviderConfig cfg_;
};

/// Deterministic provider backed by fixtures.
///
/// Fixture lines are JSON objects:
///   {"key": "question_evaluator#0123abcd...", "response_text": "..."}
///   {"key": "question_generator#*", "contains": "airway", "response_text": "..."}
///   {"key": "...", "error": "transport_error"}
/// Exact keys are looked up first. Repeating an exact key scripts a sequence
/// of responses; the last one repeats once the sequence is exhausted.
/// Wildcard keys match by template name, optionally requiring a substring of
/// the request inputs, in file order.
class MockProvider : public Provider {
 public:
  struct Fixture {
    std::string key;
    std::string response_text;
    std::optional<std::string> contains;
    std::optional<ErrorCode> error;
  };

  struct Call {
    std::string template_name;
    std::string key;
    PromptRequest request;
  };

  using Handler = std::function<std::optional<std::string>(const PromptRequest&)>;

  MockProvider() = default;

  void add(Fixture f) {
    std::lock_guard lock(mu_);
    if (f.key.size() >= 2 && f.key.compare(f.key.size() - 2, 2, "#*") == 0) {
      wildcards_.push_back(std::move(f));
    } else {
      exact_[f.key].push_back(std::move(f));
    }
  }

  void add(std::string key, std::string response_text) { add(Fixture{std::move(key), std::move(response_text), {}, {}}); }

  /// Consulted when no fixture matches.
  void set_fallback(Handler h) {
    std::lock_guard lock(mu_);
    fallback_ = std::move(h);
  }

  void load_jsonl(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::schema_violation, "fixture line " + std::to_string(lineno) + ": " + e.what());
      }
      Fixture f;
      f.key = j.at("key").get<std::string>();
      f.response_text = j.value("response_text", std::string{});
      if (auto it = j.find("contains"); it != j.end() && it->is_string()) f.contains = it->get<std::string>();
      if (auto it = j.find("error"); it != j.end() && it->is_string()) {
        const auto name = it->get<std::string>();
        for (std::size_t i = 0; i < kErrorCodeNames.size(); ++i) {
          if (kErrorCodeNames[i] == name) f.error = static_cast<ErrorCode>(i);
        }
        if (!f.error) fail(ErrorCode::schema_violation, "fixture line " + std::to_string(lineno) + ": unknown error code");
      }
      add(std::move(f));
    }
  }

  void load_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::storage_error, "cannot open fixture file " + path);
    load_jsonl(in);
  }

  std::string send(const PromptRequest& req) override {
    const auto key = request_key(req);
    std::unique_lock lock(mu_);
    calls_.push_back({req.template_name, key, req});
    const Fixture* hit = nullptr;
    if (auto it = exact_.find(key); it != exact_.end()) {
      auto& cursor = cursors_[key];
      hit = &it->second[std::min(cursor, it->second.size() - 1)];
      ++cursor;
    } else {
      const auto wildcard = req.template_name + "#*";
      std::string haystack;
      for (const auto& f : wildcards_) {
        if (f.key != wildcard) continue;
        if (f.contains) {
          if (haystack.empty()) haystack = searchable_text(req);
          if (haystack.find(*f.contains) == std::string::npos) continue;
        }
        hit = &f;
        break;
      }
    }
    if (hit) {
      if (hit->error) fail(*hit->error, "scripted provider failure for " + key);
      return hit->response_text;
    }
    auto fallback = fallback_;
    lock.unlock();
    if (fallback) {
      if (auto text = fallback(req)) return *text;
    }
    fail(ErrorCode::fixture_missing, "no fixture for " + key, {{"key", key}, {"inputs", canonical_inputs(req)}});
  }

  std::vector<Call> calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  std::size_t call_count(std::string_view template_name) const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& c : calls_) n += c.template_name == template_name ? 1 : 0;
    return n;
  }

  std::size_t call_count() const {
    std::lock_guard lock(mu_);
    return calls_.size();
  }

  void clear_calls() {
    std::lock_guard lock(mu_);
    calls_.clear();
  }

 private:
  static std::string searchable_text(const PromptRequest& req) {
    std::string s;
    for (const auto& [k, v] : req.vars) s += v + "\n";
    for (const auto& m : req.messages) s += m.text + "\n";
    return s;
  }

  mutable std::mutex mu_;
  std::map<std::string, std::vector<Fixture>> exact_;
  std::map<std::string, std::size_t> cursors_;
  std::vector<Fixture> wildcards_;
  Handler fallback_;
  std::vector<Call> calls_;
};

}  // namespace lingoq::llm
