#pragma once

#include "lingoq/api.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>

namespace lingoq::api {

inline ApiRequest from_httplib(const httplib::Request& r) {
  ApiRequest req{r.method, r.path, r.body, {}};
  for (const auto& [k, v] : r.headers) {
    std::string name = k;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    req.headers[name] = v;
  }
  return req;
}

/// Sends every request on the server through the router.
inline void bind(httplib::Server& server, Router& router) {
  auto handler = [&router](const httplib::Request& r, httplib::Response& res) {
    const auto out = router.handle(from_httplib(r));
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  server.Get(".*", handler);
  server.Post(".*", handler);
  server.Put(".*", handler);
  server.Delete(".*", handler);
  server.Patch(".*", handler);
}

}  // namespace lingoq::api
