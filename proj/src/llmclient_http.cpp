#include "httplib.h"

#include "forge/error.hpp"
#include "forge/llmclient.hpp"

namespace forge::llm {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("ConfigInvalid", "url without scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpTransport : public Transport {
 public:
  HttpResponse post(const std::string& url, const std::string& body,
                    const std::vector<std::pair<std::string, std::string>>& headers, double timeout_s) override {
    auto parts = split_url(url);
    httplib::Client client(parts.origin);
    auto secs = static_cast<time_t>(timeout_s);
    auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
      if (k == "Content-Type") content_type = v;
      else h.emplace(k, v);
    }
    auto res = client.Post(parts.path, h, body, content_type);
    if (!res) {
      auto err = res.error();
      throw TransportFailure{err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout,
                             httplib::to_string(err)};
    }
    return {res->status, res->body};
  }
};

}  // namespace

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttpTransport>(); }

}  // namespace forge::llm
