#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace arr::http {

struct Response {
  int status = 0;
  std::string body;
};

/// Minimal JSON-over-HTTP POST interface. Implementations throw
/// Error(kTransport) when no response could be obtained at all.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Response post_json(std::string_view path, const std::string& body) const = 0;
};

struct TransportOptions {
  std::chrono::milliseconds timeout{30'000};
  // Sent as a bearer token; never logged or echoed in errors.
  std::optional<std::string> api_key;
};

/// cpp-httplib backed transport. base_url is "scheme://host[:port][/prefix]";
/// request paths are appended to the prefix.
std::unique_ptr<Transport> make_transport(const std::string& base_url,
                                          TransportOptions options = {});

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{8'000};
  double multiplier = 2.0;
};

// Delay before retry number `retry` (0-based). Nondecreasing in `retry`.
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry);

bool is_retryable_status(int status);

using Sleeper = std::function<void(std::chrono::milliseconds)>;

void default_sleep(std::chrono::milliseconds delay);

/// POSTs and retries transport failures and retryable statuses (408, 429,
/// 5xx) at most policy.max_retries times. Returns only 2xx responses; any
/// other outcome throws kTransport or kHttpStatus.
Response post_with_retry(const Transport& transport, std::string_view path,
                         const std::string& body, const RetryPolicy& policy,
                         const Sleeper& sleep = default_sleep);

/// Counting semaphore with a runtime limit.
class InFlightLimit {
 public:
  explicit InFlightLimit(std::size_t limit);

  void acquire();
  void release();

  std::size_t limit() const noexcept { return limit_; }

  class Guard {
   public:
    explicit Guard(InFlightLimit& limit) : limit_(limit) { limit_.acquire(); }
    ~Guard() { limit_.release(); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    InFlightLimit& limit_;
  };

 private:
  std::size_t limit_;
  std::size_t in_use_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

}  // namespace arr::http
