#pragma once

#include "lingoq/domain.hpp"
#include "lingoq/llm/provider.hpp"
#include "lingoq/pool.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

namespace lingoq::config {

enum class ProviderKind { http, mock };

struct Config {
  ProviderKind provider_kind = ProviderKind::http;
  llm::ProviderConfig provider;
  std::string fixtures_path;  // JSONL fixtures when provider_kind is mock
  QuizPolicy policy;
  pool::ReviewWeightParams weights;
  std::map<std::string, std::string> tokens;  // bearer token -> user_id
  std::string storage_path = "lingoq-data.json";
  std::string host = "127.0.0.1";
  int port = 8080;
  UtcOffset timezone;
  int evening_cutoff_hour = 18;
  std::string user_language = "Korean";
  std::uint64_t seed = 0;
};

inline std::vector<std::string> validate(const Config& c) {
  auto errors = validate_policy(c.policy);
  for (auto& e : pool::validate_params(c.weights)) errors.push_back(std::move(e));
  for (auto& e : llm::validate_config(c.provider)) errors.push_back(std::move(e));
  if (c.provider_kind == ProviderKind::http && c.provider.endpoint.empty()) errors.emplace_back("provider endpoint is required");
  if (c.provider_kind == ProviderKind::mock && c.fixtures_path.empty()) errors.emplace_back("mock provider needs fixtures");
  if (c.port <= 0 || c.port > 65535) errors.emplace_back("port out of range");
  if (c.evening_cutoff_hour < 0 || c.evening_cutoff_hour > 23) errors.emplace_back("evening_cutoff_hour must be 0..23");
  for (const auto& [token, user] : c.tokens) {
    if (token.empty() || user.empty()) errors.emplace_back("tokens must map non-empty strings");
  }
  return errors;
}

/// "tokA:alice,tokB:bob"
inline std::map<std::string, std::string> parse_token_list(const std::string& s) {
  std::map<std::string, std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    const auto item = s.substr(start, end - start);
    if (!item.empty()) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) fail(ErrorCode::bad_request, "token entry without user: " + item);
      out[item.substr(0, colon)] = item.substr(colon + 1);
    }
    start = end + 1;
  }
  return out;
}

inline Config from_json(const Json& j) {
  Config c;
  if (auto p = j.find("provider"); p != j.end()) {
    const auto kind = p->value("kind", std::string("http"));
    if (kind == "http") c.provider_kind = ProviderKind::http;
    else if (kind == "mock") c.provider_kind = ProviderKind::mock;
    else fail(ErrorCode::bad_request, "unknown provider kind: " + kind);
    c.provider.endpoint = p->value("endpoint", c.provider.endpoint);
    c.provider.model_name = p->value("model", c.provider.model_name);
    c.provider.api_key = p->value("api_key", c.provider.api_key);
    c.provider.timeout = std::chrono::milliseconds{p->value("timeout_ms", c.provider.timeout.count())};
    c.provider.max_retries = p->value("max_retries", c.provider.max_retries);
    c.provider.retry_backoff = std::chrono::milliseconds{p->value("retry_backoff_ms", c.provider.retry_backoff.count())};
    c.fixtures_path = p->value("fixtures", c.fixtures_path);
  }
  if (j.contains("policy")) c.policy = j["policy"].get<QuizPolicy>();
  if (j.contains("weights")) c.weights = j["weights"].get<pool::ReviewWeightParams>();
  if (j.contains("tokens")) c.tokens = j["tokens"].get<std::map<std::string, std::string>>();
  c.storage_path = j.value("storage_path", c.storage_path);
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  c.timezone.offset = std::chrono::minutes{j.value("timezone_offset_minutes", 0)};
  c.evening_cutoff_hour = j.value("evening_cutoff_hour", c.evening_cutoff_hour);
  c.user_language = j.value("user_language", c.user_language);
  c.seed = j.value("seed", c.seed);
  return c;
}

/// Environment variables win over the file.
inline Config apply_env(Config c) {
  auto env = [](const char* name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name); v && *v) return std::string(v);
    return std::nullopt;
  };
  c.provider = llm::config_from_env(c.provider);
  if (auto v = env("LINGOQ_PROVIDER")) {
    if (*v == "mock") c.provider_kind = ProviderKind::mock;
    else if (*v == "http") c.provider_kind = ProviderKind::http;
    else fail(ErrorCode::bad_request, "LINGOQ_PROVIDER must be http or mock");
  }
  if (auto v = env("LINGOQ_FIXTURES")) c.fixtures_path = *v;
  if (auto v = env("LINGOQ_STORAGE")) c.storage_path = *v;
  if (auto v = env("LINGOQ_HOST")) c.host = *v;
  if (auto v = env("LINGOQ_PORT")) c.port = std::stoi(*v);
  if (auto v = env("LINGOQ_POLL_INTERVAL")) c.policy.poll_interval = Seconds{std::stoll(*v)};
  if (auto v = env("LINGOQ_TOKENS")) c.tokens = parse_token_list(*v);
  if (auto v = env("LINGOQ_TZ_OFFSET_MINUTES")) c.timezone.offset = std::chrono::minutes{std::stoi(*v)};
  if (auto v = env("LINGOQ_SEED")) c.seed = std::stoull(*v);
  return c;
}

/// Reads the optional config file and applies the environment.
inline Config read(const std::optional<std::filesystem::path>& file) {
  Config c;
  if (file) {
    std::ifstream in(*file);
    if (!in) fail(ErrorCode::bad_request, "cannot read config " + file->string());
    try {
      c = from_json(Json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::bad_request, std::string("malformed config: ") + e.what());
    }
  }
  return apply_env(std::move(c));
}

inline void require_valid(const Config& c) {
  if (auto errs = validate(c); !errs.empty()) fail(ErrorCode::invalid_policy, errs.front(), {{"errors", errs}});
}

/// read() followed by validation.
inline Config load(const std::optional<std::filesystem::path>& file) {
  auto c = read(file);
  require_valid(c);
  return c;
}

}  // namespace lingoq::config
