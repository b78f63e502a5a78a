#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <vector>

#include "forge/util.hpp"

namespace forge::llm {

struct EndpointConfig {
  std::string base_url;
  std::string model_name;
  std::string api_key_env_var;
  double temperature = 0.0;
  int max_tokens = 1024;
  bool greedy = true;
  int max_in_flight = 4;
  int retry_limit = 3;
  double timeout_s = 120.0;
  int backoff_base_ms = 500;
  int backoff_max_ms = 8000;

  // Temperature actually sent on the wire: greedy decoding pins it to 0.
  double effective_temperature() const { return greedy ? 0.0 : temperature; }
  void validate() const;
};

EndpointConfig endpoint_from_json(const json& j);
json endpoint_to_json(const EndpointConfig& c);

enum class Role { system, user, assistant };
std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

struct Message {
  Role role;
  std::string content;
  bool operator==(const Message&) const = default;
};

using Messages = std::vector<Message>;

struct ChatExchange {
  Messages request_messages;
  std::string response_text;
  std::string model_name;
  long long latency_ms = 0;
  int attempt = 1;
};

json request_body(const EndpointConfig& cfg, const Messages& messages);
// Stable hash of (role, content) pairs; keys the stub's canned responses.
std::string request_hash(const Messages& messages);

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Network-level failure (connect refused, reset, timeout).
struct TransportFailure {
  bool timeout = false;
  std::string detail;
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Returns the response, or throws TransportFailure.
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers, double timeout_s) = 0;
};

// cpp-httplib backed transport for http:// and https:// endpoints.
std::shared_ptr<Transport> make_http_transport();

using Sleeper = std::function<void(std::chrono::milliseconds)>;

class ChatClient {
 public:
  ChatClient(EndpointConfig cfg, std::shared_ptr<Transport> transport, Sleeper sleeper = {});

  // POST {base_url}/chat/completions with retries on timeout, 429 and 5xx.
  // Errors: EndpointUnreachable, NonRetryableStatus, RetriesExhausted,
  // EmptyResponse, BadRequest.
  ChatExchange complete(const Messages& messages);

  const EndpointConfig& config() const { return cfg_; }

 private:
  EndpointConfig cfg_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  std::counting_semaphore<1024> slots_;
};

// Offline endpoint. Responses come from, in order: a scripted failure queue,
// canned responses keyed by request_hash, then a fallback responder.
class StubTransport : public Transport {
 public:
  using Responder = std::function<std::string(const Messages&)>;

  StubTransport() = default;
  explicit StubTransport(Responder fallback) : fallback_(std::move(fallback)) {}

  void set_canned(const Messages& request, std::string response);
  void set_fallback(Responder r);
  // Next calls return these HTTP statuses (0 = transport timeout) before
  // normal responses resume.
  void fail_next(std::vector<int> statuses);
  void set_delay(std::chrono::milliseconds d) { delay_ = d; }

  HttpResponse post(const std::string& url, const std::string& body,
                    const std::vector<std::pair<std::string, std::string>>& headers, double timeout_s) override;

  int calls() const { return calls_.load(); }
  int max_concurrent() const { return max_concurrent_.load(); }
  std::vector<json> bodies() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> canned_;
  std::deque<int> failures_;
  std::vector<json> bodies_;
  Responder fallback_;
  std::chrono::milliseconds delay_{0};
  std::atomic<int> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_concurrent_{0};
};

}  // namespace forge::llm
