#pragma once

#include "lingoq/service.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace lingoq::api {

struct ApiRequest {
  std::string method;
  std::string path;
  std::string body;
  std::map<std::string, std::string> headers;  // lower-case names
};

struct ApiResponse {
  int status = 200;
  Json body;
};

inline Json error_body(const Error& e) {
  Json j = {{"code", to_string(e.code())}, {"message", e.what()}};
  j["detail"] = e.detail().is_null() ? Json(nullptr) : e.detail();
  return j;
}

inline ApiResponse error_response(const Error& e) { return {http_status(e.code()), error_body(e)}; }

namespace detail {

inline std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  const auto end = path.find('?');
  const auto p = path.substr(0, end);
  while (i < p.size()) {
    auto j = p.find('/', i);
    if (j == std::string::npos) j = p.size();
    if (j > i) parts.push_back(p.substr(i, j - i));
    i = j + 1;
  }
  return parts;
}

/// Client input problems are bad_request, whatever layer noticed them.
template <typename F>
auto decode(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::bad_request, std::string("invalid request body: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::bad_request || e.code() == ErrorCode::invalid_option) throw;
    fail(ErrorCode::bad_request, e.what(), e.detail());
  }
}

inline Json body_json(const ApiRequest& req) {
  if (req.body.empty()) return Json::object();
  return decode([&] {
    auto j = Json::parse(req.body);
    if (!j.is_object()) fail(ErrorCode::bad_request, "request body must be a JSON object");
    return j;
  });
}

inline Json thread_summary(const ChatThread& t) {
  return {{"id", t.id}, {"title", t.title}, {"created_at", format_iso8601(t.created_at)},
          {"message_count", t.messages.size()}};
}

inline Json feedback_json(const session::Feedback& f) {
  Json j = {{"correct", f.correct}, {"key_index", f.key_index}, {"explanation", f.explanation},
            {"completed", f.completed}, {"progress", f.progress}};
  j["context_hint"] = f.context_hint ? Json(*f.context_hint) : Json(nullptr);
  return j;
}

}  // namespace detail

/// Routes JSON requests onto the service. Every route except /healthz needs
/// a bearer token; the token decides the user every lookup is scoped to.
class Router {
 public:
  Router(service::Service& svc, std::map<std::string, std::string> tokens) : svc_(svc), tokens_(std::move(tokens)) {}

  ApiResponse handle(const ApiRequest& req) {
    try {
      return dispatch(req);
    } catch (const Error& e) {
      return error_response(e);
    } catch (const std::exception& e) {
      return error_response(Error(ErrorCode::internal, e.what()));
    }
  }

 private:
  std::string authenticate(const ApiRequest& req) const {
    auto it = req.headers.find("authorization");
    if (it == req.headers.end()) fail(ErrorCode::unauthorized, "missing bearer token");
    const std::string prefix = "Bearer ";
    if (it->second.rfind(prefix, 0) != 0) fail(ErrorCode::unauthorized, "malformed authorization header");
    auto user = tokens_.find(it->second.substr(prefix.size()));
    if (user == tokens_.end()) fail(ErrorCode::unauthorized, "unknown token");
    return user->second;
  }

  static void expect_method(const ApiRequest& req, std::initializer_list<std::string_view> allowed) {
    for (auto m : allowed) {
      if (req.method == m) return;
    }
    fail(ErrorCode::method_not_allowed, req.method + " not allowed on " + req.path);
  }

  ApiResponse dispatch(const ApiRequest& req) {
    const auto parts = detail::split_path(req.path);
    const auto n = parts.size();
    if (n == 1 && parts[0] == "healthz") {
      expect_method(req, {"GET"});
      return {200, {{"status", "ok"}}};
    }
    const auto user = authenticate(req);

    if (n >= 1 && parts[0] == "threads") {
      if (n == 1) {
        expect_method(req, {"GET", "POST"});
        if (req.method == "POST") {
          const auto body = detail::body_json(req);
          const auto title = detail::decode([&] { return body.value("title", std::string{}); });
          return {201, svc_.create_thread(user, title)};
        }
        auto arr = Json::array();
        for (const auto& t : svc_.list_threads(user)) arr.push_back(detail::thread_summary(t));
        return {200, {{"threads", arr}}};
      }
      if (n == 2) {
        expect_method(req, {"GET"});
        return {200, svc_.get_thread(user, parts[1])};
      }
      if (n == 3 && parts[2] == "messages") {
        expect_method(req, {"POST"});
        const auto body = detail::body_json(req);
        const auto msg = detail::decode([&] {
          service::PostMessage m;
          m.text = body.at("text").get<std::string>();
          if (body.contains("intent") && !body["intent"].is_null()) m.intent = parse_intent(body["intent"].get<std::string>());
          if (body.contains("context") && !body["context"].is_null()) {
            m.context = body["context"].get<TaskContext>();
            check_context(*m.context);
          }
          if (body.contains("capture_text") && !body["capture_text"].is_null()) {
            m.capture_text = body["capture_text"].get<std::string>();
          }
          return m;
        });
        const auto r = svc_.post_message(user, parts[1], msg);
        return {200, {{"user_message", r.user_message}, {"assistant_message", r.assistant_message}, {"pair_id", r.pair_id}}};
      }
    }

    if (n == 3 && parts[0] == "messages") {
      expect_method(req, {"POST"});
      const auto body = detail::body_json(req);
      if (parts[2] == "mark") {
        const bool marked = detail::decode([&] { return body.value("marked", true); });
        return {200, svc_.mark_message(user, parts[1], marked)};
      }
      if (parts[2] == "context") {
        const auto ctx = detail::decode([&] {
          auto c = body.get<TaskContext>();
          check_context(c);
          return c;
        });
        return {200, svc_.attach_context(user, parts[1], ctx)};
      }
    }

    if (n == 1 && parts[0] == "dashboard") {
      expect_method(req, {"GET"});
      const auto d = svc_.dashboard(user);
      return {200,
              {{"quizzes_today", d.quizzes_today},
               {"quizzes_total", d.quizzes_total},
               {"new_questions_available", d.new_questions_available}}};
    }

    if (n >= 1 && parts[0] == "quizzes") {
      if (n == 1) {
        expect_method(req, {"POST"});
        return {201, session::public_view(svc_.create_quiz(user))};
      }
      if (n == 2) {
        expect_method(req, {"GET"});
        return {200, session::public_view(svc_.get_quiz(user, parts[1]))};
      }
      if (n == 3 && parts[2] == "answers") {
        expect_method(req, {"POST"});
        const auto body = detail::body_json(req);
        struct Answer {
          std::string question_id;
          int option_index;
          std::optional<std::uint64_t> version;
        };
        const auto a = detail::decode([&] {
          Answer x{body.at("question_id").get<std::string>(), 0, std::nullopt};
          const auto& opt = body.at("option_index");
          if (!opt.is_number_integer()) fail(ErrorCode::invalid_option, "option_index must be an integer");
          x.option_index = opt.get<int>();
          if (body.contains("version") && !body["version"].is_null()) x.version = body["version"].get<std::uint64_t>();
          return x;
        });
        const auto fb = svc_.answer(user, parts[1], a.question_id, a.option_index, a.version);
        return {200, {{"feedback", detail::feedback_json(fb)}, {"quiz", session::public_view(svc_.get_quiz(user, parts[1]))}}};
      }
      if (n == 3 && parts[2] == "abandon") {
        expect_method(req, {"POST"});
        return {200, session::public_view(svc_.abandon_quiz(user, parts[1]))};
      }
    }

    if (n == 2 && parts[0] == "notifications" && parts[1] == "eligibility") {
      expect_method(req, {"GET"});
      const auto a = svc_.activity(user);
      Json j = {{"eligible", pool::notify_eligible(a, svc_.now())},
                {"unattempted_generated_today", a.unattempted_generated_today}};
      j["last_quiz_completed"] = a.last_quiz_completed ? Json(format_iso8601(*a.last_quiz_completed)) : Json(nullptr);
      return {200, j};
    }

    fail(ErrorCode::not_found, "no route for " + req.path);
  }

  service::Service& svc_;
  std::map<std::string, std::string> tokens_;
};

}  // namespace lingoq::api
