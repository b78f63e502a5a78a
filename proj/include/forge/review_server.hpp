#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "forge/review.hpp"

namespace forge::review {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  std::filesystem::path static_dir;  // served at "/" when it exists
  std::filesystem::path dataset_root;  // dataset_ref paths resolve against this
};

// "host:port" or ":port" or "host". Errors: ConfigInvalid.
ServerOptions parse_bind_addr(const std::string& addr, ServerOptions base = {});

// Maps an error kind to its HTTP status.
int status_for(const std::string& kind);

// JSON API over a ReviewStore:
//   POST /sessions, GET /sessions/{sid}, GET /sessions/{sid}/raters/{rid}/next,
//   POST /ratings, GET /sessions/{sid}/disagreements, POST /consensus,
//   GET /sessions/{sid}/export[?force=1], POST /sessions/{sid}/close.
// If a request carries X-Rater-Id, it must match the rater in the path or body.
class ReviewServer {
 public:
  ReviewServer(ReviewStore& store, ServerOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  // Errors: BindFailed.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ServerOptions options_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace forge::review
