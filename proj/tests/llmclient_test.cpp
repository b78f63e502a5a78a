#include "httplib.h"

#include <cstdlib>
#include <thread>

#include "forge/llmclient.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::llm;

namespace {

EndpointConfig stub_cfg(int retry_limit = 3) {
  EndpointConfig c;
  c.base_url = "stub://local";
  c.model_name = "stub-model";
  c.retry_limit = retry_limit;
  c.backoff_base_ms = 1;
  return c;
}

const Messages kHello = {{Role::system, "be brief"}, {Role::user, "say OK"}};

struct Recorder {
  std::vector<long long> delays;
  Sleeper sleeper() {
    return [this](std::chrono::milliseconds d) { delays.push_back(d.count()); };
  }
};

}  // namespace

TEST_CASE("stub echo") {
  auto stub = std::make_shared<StubTransport>([](const Messages&) { return std::string("OK"); });
  ChatClient client(stub_cfg(), stub);
  auto ex = client.complete(kHello);
  CHECK(ex.response_text == "OK");
  CHECK(ex.attempt == 1);
  CHECK(ex.model_name == "stub-model");
  CHECK(ex.request_messages == kHello);
}

TEST_CASE("request body carries the chat-completions fields") {
  auto stub = std::make_shared<StubTransport>([](const Messages&) { return std::string("x"); });
  auto cfg = stub_cfg();
  cfg.temperature = 0.7;
  cfg.max_tokens = 77;
  ChatClient greedy(cfg, stub);
  greedy.complete(kHello);
  auto body = stub->bodies().back();
  CHECK(body["model"] == "stub-model");
  CHECK(body["temperature"] == 0.0);
  CHECK(body["max_tokens"] == 77);
  REQUIRE(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["content"] == "say OK");

  cfg.greedy = false;
  ChatClient sampled(cfg, stub);
  sampled.complete(kHello);
  CHECK(stub->bodies().back()["temperature"] == 0.7);
}

TEST_CASE("canned responses are keyed by request content") {
  StubTransport stub;
  stub.set_canned(kHello, "canned");
  auto shared = std::shared_ptr<StubTransport>(&stub, [](auto*) {});
  ChatClient client(stub_cfg(0), shared);
  CHECK(client.complete(kHello).response_text == "canned");
  CHECK_ERROR_KIND(client.complete({{Role::user, "unknown"}}), "RetriesExhausted");
}

TEST_CASE("retries transient failures with exponential backoff") {
  auto stub = std::make_shared<StubTransport>([](const Messages&) { return std::string("fine"); });
  stub->fail_next({500, 429});
  Recorder rec;
  auto cfg = stub_cfg(3);
  cfg.backoff_base_ms = 100;
  ChatClient client(cfg, stub, rec.sleeper());
  auto ex = client.complete(kHello);
  CHECK(ex.attempt == 3);
  CHECK(ex.response_text == "fine");
  CHECK(rec.delays == std::vector<long long>{100, 200});

  stub->fail_next({0});  // timeout
  CHECK(client.complete(kHello).attempt == 2);
}

TEST_CASE("retry exhaustion and non-retryable statuses") {
  auto stub = std::make_shared<StubTransport>([](const Messages&) { return std::string("never"); });
  stub->fail_next({503});
  ChatClient none(stub_cfg(0), stub);
  CHECK_ERROR_KIND(none.complete(kHello), "RetriesExhausted");

  stub->fail_next({500, 500, 500});
  Recorder rec;
  ChatClient two(stub_cfg(2), stub, rec.sleeper());
  CHECK_ERROR_KIND(two.complete(kHello), "RetriesExhausted");
  CHECK(stub->calls() == 4);

  stub->fail_next({401});
  CHECK_ERROR_KIND(two.complete(kHello), "NonRetryableStatus");
}

TEST_CASE("empty and malformed responses") {
  auto stub = std::make_shared<StubTransport>([](const Messages&) { return std::string(); });
  ChatClient client(stub_cfg(), stub);
  CHECK_ERROR_KIND(client.complete(kHello), "EmptyResponse");
  CHECK_ERROR_KIND(client.complete({}), "BadRequest");
  CHECK_ERROR_KIND(client.complete({{Role::assistant, "hi"}}), "BadRequest");
}

TEST_CASE("response text is captured verbatim") {
  const std::string weird = "  leading space\n```result\nlabel: SAFE\n```\n\ttab \xc3\xa9 \"quotes\" \\ end  ";
  auto stub = std::make_shared<StubTransport>([&](const Messages&) { return weird; });
  ChatClient client(stub_cfg(), stub);
  CHECK(client.complete(kHello).response_text == weird);
}

TEST_CASE("in-flight requests never exceed max_in_flight") {
  auto stub = std::make_shared<StubTransport>([](const Messages&) { return std::string("ok"); });
  stub->set_delay(std::chrono::milliseconds(5));
  auto cfg = stub_cfg();
  cfg.max_in_flight = 3;
  ChatClient client(cfg, stub);
  std::vector<std::thread> workers;
  for (int i = 0; i < 12; ++i) {
    workers.emplace_back([&] {
      for (int k = 0; k < 3; ++k) client.complete(kHello);
    });
  }
  for (auto& w : workers) w.join();
  CHECK(stub->calls() == 36);
  CHECK(stub->max_concurrent() <= 3);
  CHECK(stub->max_concurrent() >= 2);
}

TEST_CASE("endpoint config parsing keeps secrets out of config") {
  json j = {{"base_url", "http://x"}, {"model_name", "m"}, {"api_key_env_var", "KEY"}};
  auto c = endpoint_from_json(j);
  CHECK(c.greedy);
  CHECK(c.max_in_flight == 4);
  CHECK(c.retry_limit == 3);
  j["api_key"] = "sk-secret";
  CHECK_ERROR_KIND(endpoint_from_json(j), "ConfigInvalid");
  json bad = {{"base_url", "http://x"}, {"model_name", "m"}, {"max_in_flight", 0}};
  CHECK_ERROR_KIND(endpoint_from_json(bad), "ConfigInvalid");
}

TEST_CASE("http transport against a local server") {
  httplib::Server server;
  int hits = 0;
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    seen_auth = req.get_header_value("Authorization");
    if (hits == 1) {
      res.status = 503;
      return;
    }
    auto body = json::parse(req.body);
    std::string reply = "echo:" + body["messages"].back()["content"].get<std::string>();
    json out = {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", reply}}}}})}};
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("FORGE_TEST_KEY", "sk-test", 1);
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.model_name = "m";
  cfg.api_key_env_var = "FORGE_TEST_KEY";
  cfg.backoff_base_ms = 1;
  cfg.timeout_s = 5;
  ChatClient client(cfg, make_http_transport());
  auto ex = client.complete(kHello);
  CHECK(ex.response_text == "echo:say OK");
  CHECK(ex.attempt == 2);
  CHECK(seen_auth == "Bearer sk-test");

  server.stop();
  th.join();

  cfg.retry_limit = 1;
  ChatClient dead(cfg, make_http_transport(), [](auto) {});
  CHECK_ERROR_KIND(dead.complete(kHello), "EndpointUnreachable");
}
