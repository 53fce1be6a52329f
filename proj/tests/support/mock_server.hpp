#pragma once

#include <httplib.h>

#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace arr::testing {

struct RecordedCall {
  std::string path;
  std::string body;
  std::string authorization;
};

/// Loopback HTTP server for wire-protocol tests. Every POST is recorded and
/// answered by the handler, which receives the 0-based call index.
class MockServer {
 public:
  struct Reply {
    int status = 200;
    std::string body;
  };
  using Handler = std::function<Reply(std::size_t index, const std::string& path, const std::string& body)>;

  explicit MockServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t index = 0;
      {
        std::lock_guard lock(mu_);
        index = calls_.size();
        calls_.push_back({req.path, req.body, req.get_header_value("Authorization")});
      }
      const Reply reply = handler_(index, req.path, req.body);
      res.status = reply.status;
      res.set_content(reply.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  std::string base_url(const std::string& prefix = "") const {
    return "http://127.0.0.1:" + std::to_string(port_) + prefix;
  }

  std::vector<RecordedCall> calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::vector<RecordedCall> calls_;
};

}  // namespace arr::testing
