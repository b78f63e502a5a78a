#include "forge/llmclient.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "forge/error.hpp"

namespace forge::llm {

void EndpointConfig::validate() const {
  if (base_url.empty()) throw Error("ConfigInvalid", "endpoint base_url");
  if (model_name.empty()) throw Error("ConfigInvalid", "endpoint model_name");
  if (temperature < 0) throw Error("ConfigInvalid", "temperature must be >= 0");
  if (max_tokens < 1) throw Error("ConfigInvalid", "max_tokens must be positive");
  if (max_in_flight < 1 || max_in_flight > 1024) throw Error("ConfigInvalid", "max_in_flight must be in [1,1024]");
  if (retry_limit < 0) throw Error("ConfigInvalid", "retry_limit must be >= 0");
}

EndpointConfig endpoint_from_json(const json& j) {
  EndpointConfig c;
  c.base_url = j.at("base_url").get<std::string>();
  c.model_name = j.at("model_name").get<std::string>();
  c.api_key_env_var = j.value("api_key_env_var", "");
  c.temperature = j.value("temperature", 0.0);
  c.max_tokens = j.value("max_tokens", 1024);
  c.greedy = j.value("greedy", true);
  c.max_in_flight = j.value("max_in_flight", 4);
  c.retry_limit = j.value("retry_limit", 3);
  c.timeout_s = j.value("timeout", 120.0);
  c.backoff_base_ms = j.value("backoff_base_ms", 500);
  c.backoff_max_ms = j.value("backoff_max_ms", 8000);
  if (j.contains("api_key")) throw Error("ConfigInvalid", "api keys must come from api_key_env_var");
  c.validate();
  return c;
}

json endpoint_to_json(const EndpointConfig& c) {
  return json{{"base_url", c.base_url},       {"model_name", c.model_name},
              {"api_key_env_var", c.api_key_env_var}, {"temperature", c.temperature},
              {"max_tokens", c.max_tokens},   {"greedy", c.greedy},
              {"max_in_flight", c.max_in_flight}, {"retry_limit", c.retry_limit},
              {"timeout", c.timeout_s}};
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw Error("BadRequest", "role " + std::string(s));
}

json request_body(const EndpointConfig& cfg, const Messages& messages) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  return json{{"model", cfg.model_name},
              {"messages", msgs},
              {"temperature", cfg.effective_temperature()},
              {"max_tokens", cfg.max_tokens}};
}

std::string request_hash(const Messages& messages) {
  std::string buf;
  for (const auto& m : messages) {
    buf += to_string(m.role);
    buf += '\n';
    buf += m.content;
    buf += '\x1e';
  }
  return sha256_hex(buf);
}

ChatClient::ChatClient(EndpointConfig cfg, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      slots_(std::clamp(cfg_.max_in_flight, 1, 1024)) {
  cfg_.validate();
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

namespace {

bool retryable(int status) { return status == 429 || status >= 500; }

std::string first_choice_text(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    throw Error("EmptyResponse", "response is not JSON");
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw Error("EmptyResponse", "no choices");
  }
  const auto& msg = j["choices"][0].value("message", json::object());
  if (!msg.contains("content") || !msg["content"].is_string()) throw Error("EmptyResponse", "no content");
  auto text = msg["content"].get<std::string>();
  if (text.empty()) throw Error("EmptyResponse", "empty content");
  return text;
}

// Releases a semaphore slot on scope exit.
class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

}  // namespace

ChatExchange ChatClient::complete(const Messages& messages) {
  if (messages.empty()) throw Error("BadRequest", "no messages");
  if (messages.front().role == Role::assistant) throw Error("BadRequest", "first message must be system or user");

  const std::string url = cfg_.base_url + (cfg_.base_url.ends_with("/") ? "" : "/") + "chat/completions";
  const std::string body = request_body(cfg_, messages).dump();
  std::vector<std::pair<std::string, std::string>> headers = {{"Content-Type", "application/json"}};
  if (!cfg_.api_key_env_var.empty()) {
    if (const char* key = std::getenv(cfg_.api_key_env_var.c_str())) {
      headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
  }

  std::string last_failure;
  bool last_was_unreachable = false;
  for (int attempt = 1; attempt <= cfg_.retry_limit + 1; ++attempt) {
    if (attempt > 1) {
      long long delay = static_cast<long long>(cfg_.backoff_base_ms) << std::min(attempt - 2, 20);
      sleeper_(std::chrono::milliseconds(std::min<long long>(delay, cfg_.backoff_max_ms)));
    }
    auto start = std::chrono::steady_clock::now();
    HttpResponse resp;
    try {
      SlotGuard guard(slots_);
      resp = transport_->post(url, body, headers, cfg_.timeout_s);
    } catch (const TransportFailure& f) {
      last_was_unreachable = !f.timeout;
      last_failure = (f.timeout ? "timeout: " : "unreachable: ") + f.detail;
      continue;
    }
    if (resp.status >= 200 && resp.status < 300) {
      ChatExchange ex;
      ex.request_messages = messages;
      ex.response_text = first_choice_text(resp.body);
      ex.model_name = cfg_.model_name;
      ex.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                          .count();
      ex.attempt = attempt;
      return ex;
    }
    if (!retryable(resp.status)) throw Error("NonRetryableStatus", std::to_string(resp.status));
    last_was_unreachable = false;
    last_failure = "status " + std::to_string(resp.status);
  }
  if (last_was_unreachable) throw Error("EndpointUnreachable", cfg_.base_url + " (" + last_failure + ")");
  throw Error("RetriesExhausted", last_failure);
}

// ---------------------------------------------------------------------------

void StubTransport::set_canned(const Messages& request, std::string response) {
  std::lock_guard lock(mu_);
  canned_[request_hash(request)] = std::move(response);
}

void StubTransport::set_fallback(Responder r) {
  std::lock_guard lock(mu_);
  fallback_ = std::move(r);
}

void StubTransport::fail_next(std::vector<int> statuses) {
  std::lock_guard lock(mu_);
  failures_.insert(failures_.end(), statuses.begin(), statuses.end());
}

std::vector<json> StubTransport::bodies() const {
  std::lock_guard lock(mu_);
  return bodies_;
}

HttpResponse StubTransport::post(const std::string& url, const std::string& body,
                                 const std::vector<std::pair<std::string, std::string>>&, double) {
  ++calls_;
  int now = ++in_flight_;
  int seen = max_concurrent_.load();
  while (now > seen && !max_concurrent_.compare_exchange_weak(seen, now)) {
  }
  struct Leave {
    std::atomic<int>& c;
    ~Leave() { --c; }
  } leave{in_flight_};

  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  if (!url.ends_with("/chat/completions")) return {404, "{}"};

  json req = json::parse(body);
  Messages messages;
  for (const auto& m : req.at("messages")) {
    messages.push_back({role_from_string(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  }

  std::string text;
  {
    std::lock_guard lock(mu_);
    bodies_.push_back(req);
    if (!failures_.empty()) {
      int status = failures_.front();
      failures_.pop_front();
      if (status == 0) throw TransportFailure{true, "stub timeout"};
      return {status, R"({"error":"stub failure"})"};
    }
    auto it = canned_.find(request_hash(messages));
    if (it != canned_.end()) {
      text = it->second;
    } else if (fallback_) {
      text = fallback_(messages);
    } else {
      return {500, R"({"error":"no canned response"})"};
    }
  }
  json resp = {{"id", "stub"},
               {"model", req.value("model", "")},
               {"choices", json::array({{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}}})}};
  return {200, resp.dump()};
}

}  // namespace forge::llm
