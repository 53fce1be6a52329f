#include "arr/http.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "arr/error.hpp"

namespace arr::http {

namespace {

class HttplibTransport final : public Transport {
 public:
  HttplibTransport(std::string origin, std::string prefix, TransportOptions options)
      : origin_(std::move(origin)), prefix_(std::move(prefix)), options_(std::move(options)) {}

  Response post_json(std::string_view path, const std::string& body) const override {
    // httplib::Client is not safe for concurrent use; one per request.
    httplib::Client client(origin_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (options_.api_key && !options_.api_key->empty()) {
      headers.emplace("Authorization", "Bearer " + *options_.api_key);
    }
    const std::string full_path = prefix_ + std::string(path);
    auto result = client.Post(full_path, headers, body, "application/json");
    if (!result) {
      throw Error(ErrorKind::kTransport,
                  "POST " + origin_ + full_path + " failed: " + httplib::to_string(result.error()));
    }
    return Response{result->status, result->body};
  }

 private:
  std::string origin_;
  std::string prefix_;
  TransportOptions options_;
};

}  // namespace

std::unique_ptr<Transport> make_transport(const std::string& base_url, TransportOptions options) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::kConfig, "base url must include a scheme: '" + base_url + "'");
  }
  const auto path_start = base_url.find('/', scheme_end + 3);
  std::string origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return std::make_unique<HttplibTransport>(std::move(origin), std::move(prefix), std::move(options));
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry) {
  const double base = static_cast<double>(policy.initial_backoff.count());
  const double scaled = base * std::pow(std::max(policy.multiplier, 1.0), std::max(retry, 0));
  const double capped = std::min(scaled, static_cast<double>(policy.max_backoff.count()));
  return std::chrono::milliseconds(static_cast<long long>(std::max(capped, 0.0)));
}

bool is_retryable_status(int status) {
  return status == 408 || status == 429 || (status >= 500 && status <= 599);
}

void default_sleep(std::chrono::milliseconds delay) { std::this_thread::sleep_for(delay); }

Response post_with_retry(const Transport& transport, std::string_view path, const std::string& body,
                         const RetryPolicy& policy, const Sleeper& sleep) {
  for (int attempt = 0;; ++attempt) {
    const bool can_retry = attempt < policy.max_retries;
    try {
      Response response = transport.post_json(path, body);
      if (response.status >= 200 && response.status < 300) {
        return response;
      }
      if (!can_retry || !is_retryable_status(response.status)) {
        throw Error(ErrorKind::kHttpStatus,
                    "HTTP " + std::to_string(response.status) + " from " + std::string(path) +
                        " after " + std::to_string(attempt + 1) + " attempt(s)");
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kTransport || !can_retry) throw;
    }
    sleep(backoff_delay(policy, attempt));
  }
}

InFlightLimit::InFlightLimit(std::size_t limit) : limit_(std::max<std::size_t>(limit, 1)) {}

void InFlightLimit::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_use_ < limit_; });
  ++in_use_;
}

void InFlightLimit::release() {
  {
    std::lock_guard lock(mu_);
    --in_use_;
  }
  cv_.notify_one();
}

}  // namespace arr::http
