#include "abase/http.hpp"

#include <pthread.h>
#include <signal.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "abase/error.hpp"

namespace abase {

namespace {

Params query_params(const httplib::Request& req) {
  Params p;
  for (const auto& [k, v] : req.params) p[k] = v;
  return p;
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, std::string("request body is not JSON: ") + e.what());
  }
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

using Handler = std::function<json(const httplib::Request&, const std::string& caller)>;

httplib::Server::Handler wrap(Handler fn, int ok_status = 200) {
  return [fn = std::move(fn), ok_status](const httplib::Request& req, httplib::Response& res) {
    auto caller = req.get_header_value("X-Caller-Id");
    try {
      reply(res, ok_status, fn(req, caller));
    } catch (const Error& e) {
      reply(res, http_status(e.kind()), error_json(e));
    } catch (const std::exception& e) {
      reply(res, 500, error_json(Error(ErrorKind::io, e.what())));
    }
    spdlog::info("{} {} -> {}", req.method, req.path, res.status);
  };
}

}  // namespace

HttpGateway::HttpGateway(AnalysisBase& base)
    : base_(base), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  auto& b = base_;

  s.Get("/health", wrap([&b](const auto&, const auto&) { return b.health(); }));
  s.Get("/audit", wrap([&b](const auto&, const auto&) { return b.audit(); }));

  s.Post("/users", wrap([&b](const auto& req, const auto& caller) {
           return b.register_user(caller, body_json(req));
         }, 201));
  s.Patch(R"(/users/([^/]+)/active)", wrap([&b](const auto& req, const auto& caller) {
            return b.set_user_active(caller, req.matches[1], body_json(req));
          }));

  s.Post("/datasets/import", wrap([&b](const auto& req, const auto& caller) {
           return b.import_dataset(caller, req.body, query_params(req));
         }, 201));
  s.Get(R"(/datasets/([^/]+))", wrap([&b](const auto& req, const auto& caller) {
          return b.get_dataset(caller, req.matches[1]);
        }));

  s.Post("/algorithms", wrap([&b](const auto& req, const auto& caller) {
           return b.register_algorithm(caller, body_json(req));
         }, 201));
  s.Post("/pipelines", wrap([&b](const auto& req, const auto& caller) {
           return b.register_pipeline(caller, body_json(req));
         }, 201));
  s.Post(R"(/pipelines/([^/]+)/versions)", wrap([&b](const auto& req, const auto& caller) {
           return b.update_pipeline(caller, req.matches[1], body_json(req));
         }, 201));

  s.Post("/analyses", wrap([&b](const auto& req, const auto& caller) {
           return b.run_analysis(caller, body_json(req));
         }, 201));
  s.Post(R"(/analyses/([^/]+)/rerun)", wrap([&b](const auto& req, const auto& caller) {
           return b.rerun_analysis(caller, req.matches[1], body_json(req));
         }, 201));
  s.Get(R"(/analyses/([^/]+)/provenance)",
        [&b](const httplib::Request& req, httplib::Response& res) {
          if (req.get_param_value("format") == "text") {
            try {
              res.set_content(b.provenance_text(req.matches[1]), "text/plain");
            } catch (const Error& e) {
              reply(res, http_status(e.kind()), error_json(e));
            }
            return;
          }
          wrap([&b](const auto& r, const auto&) { return b.provenance_of(r.matches[1]); })(req, res);
        });
  s.Get(R"(/analyses/([^/]+))", wrap([&b](const auto& req, const auto&) {
          return b.get_analysis(req.matches[1]);
        }));

  s.Post("/annotations", wrap([&b](const auto& req, const auto& caller) {
           return b.annotate(caller, body_json(req));
         }, 201));

  s.Get("/query/items", wrap([&b](const auto& req, const auto& caller) {
          return b.query_items(caller, query_params(req));
        }));
  s.Get("/query/pipelines", wrap([&b](const auto& req, const auto&) {
          return b.query_pipelines(query_params(req));
        }));
  s.Get(R"(/query/provenance/([^/]+))", wrap([&b](const auto& req, const auto&) {
          return b.query_template(req.matches[1], query_params(req));
        }));
}

HttpGateway::~HttpGateway() = default;

int HttpGateway::bind(const std::string& host, int port) {
  int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    throw Error(ErrorKind::io, "cannot listen on " + host + ":" + std::to_string(port));
  }
  return bound;
}

void HttpGateway::serve() { server_->listen_after_bind(); }

void HttpGateway::stop() { server_->stop(); }

std::pair<std::string, int> parse_listen(const std::string& listen) {
  auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::validation, "listen must be host:port");
  auto port = parse_typed("int", listen.substr(colon + 1));
  if (!port || std::get<std::int64_t>(*port) < 0 || std::get<std::int64_t>(*port) > 65535) {
    throw Error(ErrorKind::validation, "bad port in '" + listen + "'");
  }
  return {listen.substr(0, colon), static_cast<int>(std::get<std::int64_t>(*port))};
}

int serve(const Config& config) {
  spdlog::set_level(spdlog::level::from_str(config.log_level));
  auto [host, port] = parse_listen(config.listen);
  AnalysisBase base(config);

  // Signals are taken synchronously by a waiter thread; server threads
  // inherit the blocked mask.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  for (const auto& w : base.store().open_warnings()) spdlog::warn("store: {}", w);
  HttpGateway gw(base);
  int bound = gw.bind(host, port);
  spdlog::info("serving {} on {}:{}", config.store_root.string(), host, bound);
  std::atomic<bool> stopping{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&stop_signals, &sig);
    if (!stopping.exchange(true)) spdlog::info("signal {}; shutting down", sig);
    gw.stop();
  });
  gw.serve();
  if (!stopping.exchange(true)) pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  base.close();
  spdlog::info("stopped; store flushed");
  return 0;
}

}  // namespace abase
