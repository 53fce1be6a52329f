#include "arr/llm_gateway.hpp"

#include "arr/error.hpp"
#include "arr/tokens.hpp"

namespace arr {

using json = nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

void ModelEndpointConfig::validate() const {
  if (max_input_tokens < 256) {
    throw Error(ErrorKind::kConfig, "max_input_tokens must be >= 256, got " + std::to_string(max_input_tokens));
  }
  if (!(temperature >= 0.0)) throw Error(ErrorKind::kConfig, "temperature must be >= 0");
  if (retry.max_retries < 0) throw Error(ErrorKind::kConfig, "max_retries must be >= 0");
  if (max_in_flight == 0) throw Error(ErrorKind::kConfig, "max_in_flight must be >= 1");
}

json build_chat_request(std::span<const ChatMessage> messages, const ModelEndpointConfig& config) {
  json msgs = json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json request = {{"model", config.model_name}, {"temperature", config.temperature}, {"messages", std::move(msgs)}};
  if (config.max_output_tokens) request["max_tokens"] = *config.max_output_tokens;
  return request;
}

std::string parse_chat_response(std::string_view body) {
  json parsed;
  try {
    parsed = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kMalformedResponse, std::string("chat response is not JSON: ") + e.what());
  }
  const json* content = nullptr;
  if (parsed.is_object() && parsed.contains("choices") && parsed["choices"].is_array() && !parsed["choices"].empty()) {
    const auto& first = parsed["choices"][0];
    if (first.is_object() && first.contains("message") && first["message"].is_object() &&
        first["message"].contains("content")) {
      content = &first["message"]["content"];
    }
  }
  if (content == nullptr || !content->is_string()) {
    throw Error(ErrorKind::kMalformedResponse, "chat response lacks choices[0].message.content");
  }
  return content->get<std::string>();
}

HttpChatBackend::HttpChatBackend(std::shared_ptr<const http::Transport> transport, http::Sleeper sleeper)
    : transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  if (!transport_) throw Error(ErrorKind::kConfig, "chat backend requires a transport");
}

std::string HttpChatBackend::complete(std::span<const ChatMessage> messages, const ModelEndpointConfig& config) const {
  const auto body = build_chat_request(messages, config).dump();
  const auto response = http::post_with_retry(*transport_, "/chat/completions", body, config.retry, sleeper_);
  return parse_chat_response(response.body);
}

ScriptedResponder::ScriptedResponder(std::vector<Rule> rules, std::string default_response)
    : rules_(std::move(rules)), default_response_(std::move(default_response)) {}

std::string ScriptedResponder::respond(std::string_view input) const {
  for (const auto& rule : rules_) {
    if (input.find(rule.pattern) != std::string_view::npos) return rule.response;
  }
  return default_response_;
}

std::string ScriptedResponder::complete(std::span<const ChatMessage> messages, const ModelEndpointConfig&) const {
  {
    std::lock_guard lock(mu_);
    calls_.emplace_back(messages.begin(), messages.end());
  }
  std::string_view input;
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::kUser) {
      input = it->content;
      break;
    }
  }
  return respond(input);
}

std::vector<std::vector<ChatMessage>> ScriptedResponder::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t ScriptedResponder::call_count() const {
  std::lock_guard lock(mu_);
  return calls_.size();
}

ModelGateway::ModelGateway(ModelEndpointConfig config, std::shared_ptr<const ChatBackend> backend)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      limit_(std::make_unique<http::InFlightLimit>(config_.max_in_flight)) {
  config_.validate();
  if (!backend_) throw Error(ErrorKind::kConfig, "model gateway requires a backend");
}

std::string ModelGateway::chat(std::span<const ChatMessage> messages) const {
  if (messages.empty()) throw Error(ErrorKind::kInvalidArgument, "chat requires at least one message");
  if (messages.back().role != Role::kUser) {
    throw Error(ErrorKind::kInvalidArgument, "the last chat message must have role user");
  }
  for (const auto& m : messages) {
    if (m.role == Role::kUser && m.content.empty()) {
      throw Error(ErrorKind::kInvalidArgument, "user messages must be nonempty");
    }
  }
  http::InFlightLimit::Guard guard(*limit_);
  return backend_->complete(messages, config_);
}

std::string ModelGateway::generate_draft(std::string_view query) const {
  if (query.empty()) throw Error(ErrorKind::kInvalidArgument, "draft generation requires a nonempty query");
  const ChatMessage message{Role::kUser, std::string(query) + "\n" + config_.instruction_suffix};
  std::string draft = chat(std::span<const ChatMessage>(&message, 1));
  if (draft.empty()) throw Error(ErrorKind::kEmptyResponse, "draft model returned an empty response");
  return draft;
}

std::string ModelGateway::revise(std::string_view prompt) const {
  const auto tokens = estimate_tokens(prompt);
  if (tokens > config_.max_input_tokens) {
    throw Error(ErrorKind::kBudgetExceeded, "revision prompt needs " + std::to_string(tokens) +
                                                " estimated tokens, limit is " +
                                                std::to_string(config_.max_input_tokens));
  }
  const ChatMessage message{Role::kUser, std::string(prompt)};
  return chat(std::span<const ChatMessage>(&message, 1));
}

ModelGateway make_http_gateway(const ModelEndpointConfig& config, std::optional<std::string> api_key) {
  config.validate();
  std::shared_ptr<const http::Transport> transport =
      http::make_transport(config.base_url, {config.timeout, std::move(api_key)});
  return ModelGateway(config, std::make_shared<HttpChatBackend>(std::move(transport)));
}

}  // namespace arr
