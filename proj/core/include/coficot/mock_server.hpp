#pragma once

#include <memory>
#include <string>
#include <thread>

#include "coficot/harness.hpp"

namespace httplib {
class Server;
}

namespace coficot::harness {

/// HTTP frontend for a MockWorld, speaking the same wire shapes as the real
/// backends. Used for transport-parity tests and as a standalone binary.
class MockServer {
 public:
  explicit MockServer(std::shared_ptr<const MockWorld> world);
  ~MockServer();

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Bind and serve on a background thread. port 0 picks a free port.
  /// Returns the bound port.
  int start(int port = 0, const std::string& host = "127.0.0.1");
  void stop();
  /// Block until the server stops (for the standalone binary).
  void wait();

  int port() const { return port_; }
  std::string base_url() const;
  std::string chat_url() const { return base_url() + "/v1/chat"; }
  std::string orm_url() const { return base_url() + "/v1/orm"; }
  std::string prm_url() const { return base_url() + "/v1/prm"; }

 private:
  std::shared_ptr<const MockWorld> world_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

}  // namespace coficot::harness
