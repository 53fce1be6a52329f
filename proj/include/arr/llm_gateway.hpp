#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "arr/http.hpp"

namespace arr {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline constexpr std::string_view kDefaultDraftInstruction = "Please provide evidence in the Chinese law";

struct ModelEndpointConfig {
  std::string base_url;
  std::string model_name;
  std::size_t max_input_tokens = 8000;
  double temperature = 0.0;
  // Sent as "max_tokens" when set.
  std::optional<std::size_t> max_output_tokens;
  std::chrono::milliseconds timeout{60'000};
  http::RetryPolicy retry;
  std::size_t max_in_flight = 4;
  // Appended to the query (after a newline) when requesting a draft.
  std::string instruction_suffix{kDefaultDraftInstruction};

  void validate() const;
};

/// Produces one completion for a message list.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(std::span<const ChatMessage> messages, const ModelEndpointConfig& config) const = 0;
};

nlohmann::json build_chat_request(std::span<const ChatMessage> messages, const ModelEndpointConfig& config);

// Extracts choices[0].message.content; throws kMalformedResponse otherwise.
std::string parse_chat_response(std::string_view body);

/// POST {base_url}/chat/completions with retry and exponential backoff.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(std::shared_ptr<const http::Transport> transport,
                           http::Sleeper sleeper = http::default_sleep);

  std::string complete(std::span<const ChatMessage> messages, const ModelEndpointConfig& config) const override;

 private:
  std::shared_ptr<const http::Transport> transport_;
  http::Sleeper sleeper_;
};

/// Deterministic stand-in for a model. The last user message is matched
/// against the rules in order; the first rule whose pattern is a substring
/// wins, otherwise the default response is returned.
class ScriptedResponder final : public ChatBackend {
 public:
  struct Rule {
    std::string pattern;
    std::string response;
  };

  explicit ScriptedResponder(std::vector<Rule> rules = {}, std::string default_response = "");

  std::string complete(std::span<const ChatMessage> messages, const ModelEndpointConfig& config) const override;

  std::string respond(std::string_view input) const;

  // Every message list received, in arrival order.
  std::vector<std::vector<ChatMessage>> calls() const;
  std::size_t call_count() const;

 private:
  std::vector<Rule> rules_;
  std::string default_response_;
  mutable std::mutex mu_;
  mutable std::vector<std::vector<ChatMessage>> calls_;
};

/// One model role (draft generator or reviser): endpoint settings plus the
/// backend that serves it. In-flight calls are capped at max_in_flight.
class ModelGateway {
 public:
  ModelGateway(ModelEndpointConfig config, std::shared_ptr<const ChatBackend> backend);

  const ModelEndpointConfig& config() const noexcept { return config_; }

  // Messages must be nonempty, end with a user message, and user messages
  // must be nonempty.
  std::string chat(std::span<const ChatMessage> messages) const;

  /// Sends query + "\n" + instruction_suffix as a single user message.
  /// Throws kEmptyResponse if the model returns nothing.
  std::string generate_draft(std::string_view query) const;

  /// Sends the assembled prompt verbatim. Throws kBudgetExceeded before any
  /// call when the prompt's estimated tokens exceed max_input_tokens.
  std::string revise(std::string_view prompt) const;

 private:
  ModelEndpointConfig config_;
  std::shared_ptr<const ChatBackend> backend_;
  std::unique_ptr<http::InFlightLimit> limit_;
};

ModelGateway make_http_gateway(const ModelEndpointConfig& config, std::optional<std::string> api_key = std::nullopt);

}  // namespace arr
