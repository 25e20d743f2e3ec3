#pragma once

#include <memory>
#include <string>

#include "abase/gateway.hpp"

namespace httplib {
class Server;
}

namespace abase {

/// HTTP face of an AnalysisBase. The caller id travels in X-Caller-Id;
/// bodies are JSON except POST /datasets/import, which takes metadata XML.
class HttpGateway {
 public:
  explicit HttpGateway(AnalysisBase& base);
  ~HttpGateway();

  /// Binds without serving; port 0 picks a free port. Throws Error(io).
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void serve();
  void stop();

 private:
  AnalysisBase& base_;
  std::unique_ptr<httplib::Server> server_;
};

/// Splits "host:port".
std::pair<std::string, int> parse_listen(const std::string& listen);

/// Runs the service until SIGINT or SIGTERM, then flushes the store.
int serve(const Config& config);

}  // namespace abase
