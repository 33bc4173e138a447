#pragma once

#include "lingoq/api_http.hpp"
#include "lingoq/config.hpp"
#include "lingoq/llm/http_provider.hpp"
#include "lingoq/offline.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace lingoq::cli {

namespace detail {

struct Globals {
  std::string config_path;
  std::string storage;
  std::string fixtures;
  bool json = false;
};

inline config::Config resolve_config(const Globals& g) {
  auto c = config::read(g.config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(g.config_path));
  if (!g.storage.empty()) c.storage_path = g.storage;
  if (!g.fixtures.empty()) {
    c.provider_kind = config::ProviderKind::mock;
    c.fixtures_path = g.fixtures;
  }
  return c;
}

/// The provider named by the config, plus a gateway over it.
struct Backend {
  std::unique_ptr<llm::Provider> provider;
  std::unique_ptr<llm::Gateway> gateway;
};

inline Backend make_backend(const config::Config& c) {
  config::require_valid(c);
  Backend b;
  if (c.provider_kind == config::ProviderKind::mock) {
    auto mock = std::make_unique<llm::MockProvider>();
    mock->load_jsonl_file(c.fixtures_path);
    b.provider = std::move(mock);
  } else {
    b.provider = std::make_unique<llm::HttpProvider>(c.provider);
  }
  b.gateway = std::make_unique<llm::Gateway>(*b.provider, c.provider);
  return b;
}

inline service::Options service_options(const config::Config& c) {
  service::Options o;
  o.policy = c.policy;
  o.weights = c.weights;
  o.user_language = c.user_language;
  o.timezone = c.timezone;
  o.evening_cutoff = std::chrono::hours{c.evening_cutoff_hour};
  o.seed = c.seed;
  return o;
}

inline void print_import(std::ostream& out, const offline::ImportReport& r) {
  out << "lines       " << r.lines << "\n"
      << "ingested    " << r.ingested << "\n"
      << "duplicates  " << r.duplicates << "\n"
      << "rejected    " << r.errors.size() << "\n";
  for (const auto& e : r.errors) out << "  line " << e.line << ": " << e.message << "\n";
}

inline void print_batch(std::ostream& out, const offline::BatchReport& r) {
  out << "pairs       " << r.pairs_processed << "\n"
      << "filtered    " << r.filtered << "\n"
      << "accepted    " << r.accepted << "\n"
      << "refined     " << r.refined << "\n"
      << "discarded   " << r.discarded << "\n";
  if (r.generation_errors) out << "salvaged    " << r.generation_errors << "\n";
  if (r.resume_cursor) {
    out << "stopped at  " << *r.resume_cursor << " (" << r.remaining << " pairs left): "
        << r.failure->value("message", std::string{}) << "\n";
  }
}

inline std::atomic<httplib::Server*> g_server{nullptr};

inline void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

inline int serve(const config::Config& c, std::ostream& out) {
  auto backend = make_backend(c);
  store::Store store(c.storage_path);
  service::Service svc(store, *backend.gateway, service_options(c));
  api::Router router(svc, c.tokens);
  service::Scheduler scheduler(svc, [&out](const service::TickReport& r) {
    if (r.handed_out) out << "tick " << Json(r).dump() << std::endl;
  });

  httplib::Server server;
  api::bind(server, router);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  scheduler.start();
  out << "listening on " << c.host << ":" << c.port << std::endl;
  const bool ok = server.listen(c.host, c.port);
  scheduler.stop();
  g_server = nullptr;
  if (!ok) fail(ErrorCode::internal, "cannot listen on " + c.host + ":" + std::to_string(c.port));
  return 0;
}

}  // namespace detail

/// Runs one command line. Returns the process exit code: 0 on success, 1 on
/// errors, 2 when a batch stopped early and can be resumed.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"LingoQ operator tool"};
  app.require_subcommand(1);
  detail::Globals g;
  app.add_option("-c,--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("-s,--storage", g.storage, "data file (overrides config)");
  app.add_flag("--json", g.json, "print reports as JSON");

  std::string user;
  std::string input;

  auto* import = app.add_subcommand("import", "queue pairs from a chat export (JSONL)");
  import->add_option("file", input, "export file")->required();
  import->add_option("-u,--user", user, "owning user id")->required();

  auto* generate = app.add_subcommand("generate", "run question generation over queued pairs");
  generate->add_option("-u,--user", user, "user id")->required();
  generate->add_option("-f,--fixtures", g.fixtures, "mock provider fixtures instead of the configured provider")
      ->check(CLI::ExistingFile);

  std::string what = "pool";
  auto* pool = app.add_subcommand("pool", "export the question pool, audit trail or sessions as JSONL");
  pool->add_option("-u,--user", user, "restrict to one user");
  pool->add_option("--what", what, "pool, audit or sessions")->check(CLI::IsMember({"pool", "audit", "sessions"}));

  std::string labels;
  std::string decisions;
  auto* score = app.add_subcommand("score", "score evaluator decisions against expert labels");
  score->add_option("-l,--labels", labels, "expert labels (CSV or JSONL)")->required()->check(CLI::ExistingFile);
  auto* dec_opt = score->add_option("-d,--decisions", decisions, "decisions JSONL {question_id, answerability, proficiency}")
                      ->check(CLI::ExistingFile);
  bool from_audit = false;
  score->add_flag("--from-audit", from_audit, "take decisions from the stored audit trail")->excludes(dec_opt);

  auto* serve_fixtures = app.add_subcommand("serve-fixtures", "serve the API against a mock provider");
  serve_fixtures->add_option("-f,--fixtures", g.fixtures, "mock provider fixtures")->required()->check(CLI::ExistingFile);
  int port = 0;
  serve_fixtures->add_option("-p,--port", port, "listen port");

  auto* serve = app.add_subcommand("serve", "serve the API against the configured provider");
  serve->add_option("-p,--port", port, "listen port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    auto cfg = detail::resolve_config(g);
    if (port) cfg.port = port;

    if (import->parsed()) {
      store::Store store(cfg.storage_path);
      const auto r = offline::import_chat_export_file(store, user, input);
      if (g.json) out << offline::to_json(r).dump(2) << "\n";
      else detail::print_import(out, r);
      return 0;
    }
    if (generate->parsed()) {
      auto backend = detail::make_backend(cfg);
      store::Store store(cfg.storage_path);
      const auto r = offline::batch_generate(store, *backend.gateway, user, cfg.policy);
      if (g.json) out << offline::to_json(r).dump(2) << "\n";
      else detail::print_batch(out, r);
      return r.resume_cursor ? 2 : 0;
    }
    if (pool->parsed()) {
      store::Store store(cfg.storage_path);
      const auto s = store.read();
      if (what == "pool") out << store::export_pool_jsonl(s.pool, user);
      else if (what == "audit") out << offline::export_audit_jsonl(s.audit);
      else out << offline::export_sessions_jsonl(s.sessions, user);
      return 0;
    }
    if (score->parsed()) {
      std::ifstream lin(labels);
      const auto truth = eval::aggregate_majority(eval::load_labels(lin));
      std::map<std::string, eval::BinaryLabel> decided;
      if (from_audit) {
        store::Store store(cfg.storage_path);
        decided = offline::decisions_from_audit(store.read().audit);
      } else if (!decisions.empty()) {
        std::ifstream din(decisions);
        decided = eval::load_decisions(din);
      } else {
        fail(ErrorCode::bad_request, "score needs --decisions or --from-audit");
      }
      const auto r = eval::score_pipeline(decided, truth);
      if (g.json) out << eval::to_json(r).dump(2) << "\n";
      else out << eval::render_table(r);
      return 0;
    }
    if (serve_fixtures->parsed() || serve->parsed()) return detail::serve(cfg, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    if (!e.detail().is_null()) err << e.detail().dump() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace lingoq::cli
