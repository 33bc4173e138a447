#pragma once

#include "lingoq/llm/provider.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <regex>
#include <string>

namespace lingoq::llm {

/// Chat-completion provider speaking the OpenAI-compatible wire format:
/// POST <endpoint> with {model, messages:[{role, content}]} and a bearer key.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.endpoint, m, url_re)) {
      fail(ErrorCode::precondition_failed, "invalid provider endpoint: " + cfg_.endpoint);
    }
    base_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
  }

  std::string send(const PromptRequest& req) override {
    nlohmann::json body;
    body["model"] = cfg_.model_name;
    auto& msgs = body["messages"];
    msgs.push_back({{"role", "system"}, {"content", req.system_prompt}});
    for (const auto& m : req.messages) {
      msgs.push_back({{"role", m.role == Role::user ? "user" : "assistant"}, {"content", m.text}});
    }

    httplib::Client client(base_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
        fail(ErrorCode::timeout, "provider request timed out: " + httplib::to_string(err));
      }
      fail(ErrorCode::transport_error, "provider unreachable: " + httplib::to_string(err));
    }
    if (res->status == 429 || res->status >= 500) {
      fail(ErrorCode::transport_error, "provider returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
      fail(ErrorCode::parse_error, "provider returned HTTP " + std::to_string(res->status), {{"body", res->body}});
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::parse_error, std::string("unexpected provider response: ") + e.what(), {{"body", res->body}});
    }
  }

 private:
  ProviderConfig cfg_;
  std::string base_;
  std::string path_;
};

}  // namespace lingoq::llm
