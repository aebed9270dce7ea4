#pragma once

#include <httplib.h>

#include <thread>

namespace prx::testing {

// httplib server on an ephemeral loopback port for exercising HTTP clients.
class MockServer {
 public:
  MockServer() = default;
  ~MockServer() { stop(); }

  httplib::Server& server() { return server_; }

  int start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }
  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace prx::testing
