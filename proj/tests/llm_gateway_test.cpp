#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <atomic>
#include <thread>

#include "arr/error.hpp"
#include "arr/llm_gateway.hpp"
#include "arr/tokens.hpp"
#include "support/mock_server.hpp"

namespace arr {
namespace {

using json = nlohmann::json;

std::string completion(const std::string& text) {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

ModelEndpointConfig fast_config(const std::string& url = "http://unused") {
  ModelEndpointConfig c;
  c.base_url = url;
  c.model_name = "gpt-4-0613";
  c.retry.initial_backoff = std::chrono::milliseconds(1);
  c.retry.max_backoff = std::chrono::milliseconds(4);
  return c;
}

TEST(GenerateDraft, AppendsInstructionSuffix) {
  auto responder = std::make_shared<ScriptedResponder>(std::vector<ScriptedResponder::Rule>{}, "D");
  ModelGateway gateway(fast_config(), responder);
  EXPECT_EQ(gateway.generate_draft("Q"), "D");
  const auto calls = responder->calls();
  ASSERT_EQ(calls.size(), 1u);
  ASSERT_EQ(calls[0].size(), 1u);
  EXPECT_EQ(calls[0][0].role, Role::kUser);
  EXPECT_EQ(calls[0][0].content, "Q\nPlease provide evidence in the Chinese law");
}

TEST(GenerateDraft, EmptyQueryMakesNoCall) {
  auto responder = std::make_shared<ScriptedResponder>(std::vector<ScriptedResponder::Rule>{}, "D");
  ModelGateway gateway(fast_config(), responder);
  EXPECT_THROW(gateway.generate_draft(""), Error);
  EXPECT_EQ(responder->call_count(), 0u);
}

TEST(GenerateDraft, ScriptedRuleLookup) {
  auto responder = std::make_shared<ScriptedResponder>(
      std::vector<ScriptedResponder::Rule>{{"theft", "Article 264 ..."}, {"night", "wrong rule"}}, "default");
  ModelGateway gateway(fast_config(), responder);
  EXPECT_EQ(gateway.generate_draft("a case of theft at night"), "Article 264 ...");
  EXPECT_EQ(gateway.generate_draft("unrelated"), "default");
}

TEST(GenerateDraft, SuffixNeverInOutputAndConfigurable) {
  auto responder = std::make_shared<ScriptedResponder>(std::vector<ScriptedResponder::Rule>{}, "answer");
  auto config = fast_config();
  config.instruction_suffix = "\xe8\xaf\xb7\xe6\x8f\x90\xe4\xbe\x9b\xe4\xbe\x9d\xe6\x8d\xae";
  ModelGateway gateway(config, responder);
  const auto draft = gateway.generate_draft("Q");
  EXPECT_EQ(draft.find(config.instruction_suffix), std::string::npos);
  EXPECT_EQ(responder->calls()[0][0].content, "Q\n" + config.instruction_suffix);
}

TEST(GenerateDraft, EmptyModelResponse) {
  auto responder = std::make_shared<ScriptedResponder>(std::vector<ScriptedResponder::Rule>{}, "");
  ModelGateway gateway(fast_config(), responder);
  try {
    gateway.generate_draft("Q");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyResponse);
  }
}

TEST(Revise, PassthroughAndDeterminism) {
  auto responder = std::make_shared<ScriptedResponder>(std::vector<ScriptedResponder::Rule>{}, "R");
  ModelGateway gateway(fast_config(), responder);
  EXPECT_EQ(gateway.revise("prompt"), "R");
  EXPECT_EQ(gateway.revise("prompt"), gateway.revise("prompt"));
  EXPECT_EQ(responder->calls()[0][0].content, "prompt");
}

TEST(Revise, BudgetCheckedBeforeCall) {
  auto responder = std::make_shared<ScriptedResponder>(std::vector<ScriptedResponder::Rule>{}, "R");
  ModelGateway gateway(fast_config(), responder);
  const std::string at_limit(8000 * 4, 'a');
  ASSERT_EQ(estimate_tokens(at_limit), 8000u);
  EXPECT_EQ(gateway.revise(at_limit), "R");
  try {
    gateway.revise(at_limit + "a");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBudgetExceeded);
  }
  EXPECT_EQ(responder->call_count(), 1u);
}

TEST(Chat, Preconditions) {
  ModelGateway gateway(fast_config(), std::make_shared<ScriptedResponder>());
  EXPECT_THROW(gateway.chat({}), Error);
  const std::vector<ChatMessage> ends_with_assistant = {{Role::kUser, "hi"}, {Role::kAssistant, "yo"}};
  EXPECT_THROW(gateway.chat(ends_with_assistant), Error);
  const std::vector<ChatMessage> empty_user = {{Role::kUser, ""}};
  EXPECT_THROW(gateway.chat(empty_user), Error);
}

TEST(ModelEndpointConfig, MinimumInputTokens) {
  auto c = fast_config();
  c.max_input_tokens = 255;
  EXPECT_THROW(c.validate(), Error);
  c.max_input_tokens = 256;
  EXPECT_NO_THROW(c.validate());
}

TEST(HttpChat, WireContract) {
  testing::MockServer server([](std::size_t, const std::string&, const std::string&) {
    return testing::MockServer::Reply{200, completion("hello")};
  });
  ModelGateway gateway = make_http_gateway(fast_config(server.base_url("/v1")), std::string("secret-key"));
  const std::vector<ChatMessage> msgs = {{Role::kSystem, "be terse"}, {Role::kUser, "hi"}};
  EXPECT_EQ(gateway.chat(msgs), "hello");

  const auto calls = server.calls();
  ASSERT_EQ(calls.size(), 1u);
  EXPECT_EQ(calls[0].path, "/v1/chat/completions");
  EXPECT_EQ(calls[0].authorization, "Bearer secret-key");
  const auto body = json::parse(calls[0].body);
  EXPECT_EQ(body["model"], "gpt-4-0613");
  EXPECT_EQ(body["temperature"], 0.0);
  ASSERT_EQ(body["messages"].size(), 2u);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "hi");
  EXPECT_FALSE(body.contains("max_tokens"));
}

TEST(HttpChat, RetriesServerErrors) {
  testing::MockServer server([](std::size_t index, const std::string&, const std::string&) {
    if (index < 2) return testing::MockServer::Reply{500, "{}"};
    return testing::MockServer::Reply{200, completion("ok")};
  });
  auto config = fast_config(server.base_url());
  config.retry.max_retries = 3;
  std::vector<std::chrono::milliseconds> delays;
  auto transport = std::shared_ptr<const http::Transport>(http::make_transport(config.base_url));
  ModelGateway gateway(config, std::make_shared<HttpChatBackend>(
                                   transport, [&](std::chrono::milliseconds d) { delays.push_back(d); }));
  const std::vector<ChatMessage> msgs = {{Role::kUser, "hi"}};
  EXPECT_EQ(gateway.chat(msgs), "ok");
  EXPECT_EQ(server.calls().size(), 3u);
  ASSERT_EQ(delays.size(), 2u);
  EXPECT_LE(delays[0], delays[1]);
}

TEST(HttpChat, GivesUpAfterMaxRetries) {
  testing::MockServer server([](std::size_t, const std::string&, const std::string&) {
    return testing::MockServer::Reply{503, "{}"};
  });
  auto config = fast_config(server.base_url());
  config.retry.max_retries = 2;
  ModelGateway gateway = make_http_gateway(config);
  const std::vector<ChatMessage> msgs = {{Role::kUser, "hi"}};
  try {
    gateway.chat(msgs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kHttpStatus);
  }
  EXPECT_EQ(server.calls().size(), 3u);  // first attempt + 2 retries
}

TEST(HttpChat, ClientErrorsAreNotRetried) {
  testing::MockServer server([](std::size_t, const std::string&, const std::string&) {
    return testing::MockServer::Reply{400, "{}"};
  });
  ModelGateway gateway = make_http_gateway(fast_config(server.base_url()));
  const std::vector<ChatMessage> msgs = {{Role::kUser, "hi"}};
  EXPECT_THROW(gateway.chat(msgs), Error);
  EXPECT_EQ(server.calls().size(), 1u);
}

TEST(HttpChat, MalformedResponse) {
  testing::MockServer server([](std::size_t, const std::string&, const std::string&) {
    return testing::MockServer::Reply{200, R"({"choices":[{"text":"legacy"}]})"};
  });
  ModelGateway gateway = make_http_gateway(fast_config(server.base_url()));
  const std::vector<ChatMessage> msgs = {{Role::kUser, "hi"}};
  try {
    gateway.chat(msgs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMalformedResponse);
  }
}

TEST(ParseChatResponse, Variants) {
  EXPECT_EQ(parse_chat_response(completion("x")), "x");
  EXPECT_THROW(parse_chat_response("not json"), Error);
  EXPECT_THROW(parse_chat_response(R"({"choices":[]})"), Error);
  EXPECT_THROW(parse_chat_response(R"({"choices":[{"message":{"content":null}}]})"), Error);
}

TEST(Backoff, NondecreasingAndCapped) {
  http::RetryPolicy policy;
  policy.initial_backoff = std::chrono::milliseconds(100);
  policy.max_backoff = std::chrono::milliseconds(1000);
  auto previous = std::chrono::milliseconds(0);
  for (int r = 0; r < 20; ++r) {
    const auto d = http::backoff_delay(policy, r);
    EXPECT_GE(d, previous);
    EXPECT_LE(d, policy.max_backoff);
    previous = d;
  }
  EXPECT_EQ(http::backoff_delay(policy, 0), std::chrono::milliseconds(100));
  EXPECT_EQ(http::backoff_delay(policy, 2), std::chrono::milliseconds(400));
}

TEST(Gateway, InFlightCapRespected) {
  class Slow final : public ChatBackend {
   public:
    std::string complete(std::span<const ChatMessage>, const ModelEndpointConfig&) const override {
      const int now = ++active;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --active;
      return "x";
    }
    mutable std::atomic<int> active{0};
    mutable std::atomic<int> peak{0};
  };
  auto backend = std::make_shared<Slow>();
  auto config = fast_config();
  config.max_in_flight = 2;
  ModelGateway gateway(config, backend);
  std::vector<std::jthread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      const std::vector<ChatMessage> msgs = {{Role::kUser, "hi"}};
      for (int i = 0; i < 5; ++i) gateway.chat(msgs);
    });
  }
  threads.clear();
  EXPECT_LE(backend->peak.load(), 2);
}

}  // namespace
}  // namespace arr
