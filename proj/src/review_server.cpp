#include "forge/review_server.hpp"

#include "forge/error.hpp"
#include "httplib.h"

namespace forge::review {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::string& kind, const std::string& detail) {
  send_json(res, status_for(kind), {{"error", kind}, {"detail", detail}});
}

json parse_body(const httplib::Request& req) {
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw Error("BadRequest", "body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error("BadRequest", std::string("invalid JSON: ") + e.what());
  }
}

void check_rater_header(const httplib::Request& req, const std::string& rater_id) {
  if (req.has_header("X-Rater-Id") && req.get_header_value("X-Rater-Id") != rater_id) {
    throw Error("Forbidden", "X-Rater-Id does not match " + rater_id);
  }
}

std::vector<ReviewItem> load_dataset(const std::filesystem::path& root, const std::string& ref) {
  std::filesystem::path rel(ref);
  if (rel.is_absolute() || rel.lexically_normal().string().rfind("..", 0) == 0) {
    throw Error("BadRequest", "dataset_ref must be relative to the data directory");
  }
  auto path = root / rel;
  if (!std::filesystem::exists(path)) throw Error("UnknownDataset", ref);
  std::vector<ReviewItem> out;
  for (const auto& row : read_jsonl(path)) out.push_back(item_from_json(row));
  return out;
}

SessionRequest session_request(const json& body, const std::filesystem::path& dataset_root) {
  SessionRequest r;
  r.purpose = purpose_from_string(body.at("purpose").get<std::string>());
  if (body.contains("items")) {
    for (const auto& item : body["items"]) r.items.push_back(item_from_json(item));
  } else if (body.contains("item_ids")) {
    for (const auto& id : body["item_ids"]) r.items.push_back(item_from_json(id));
  } else if (body.contains("dataset_ref")) {
    r.items = load_dataset(dataset_root, body["dataset_ref"].get<std::string>());
  } else {
    throw Error("BadRequest", "one of items, item_ids or dataset_ref is required");
  }
  if (body.contains("vuln_type")) {
    auto type = body["vuln_type"].get<std::string>();
    std::erase_if(r.items, [&](const ReviewItem& item) { return item.vuln_type != type; });
  }
  r.raters = body.at("raters").get<std::vector<std::string>>();
  r.adjudicators = body.value("adjudicators", std::vector<std::string>{});
  r.overlap_fraction = body.value("overlap_fraction", r.purpose == Purpose::likert_eval ? 0.2 : 0.0);
  r.seed = body.value("seed", std::uint64_t{0});
  return r;
}

}  // namespace

ServerOptions parse_bind_addr(const std::string& addr, ServerOptions base) {
  if (addr.empty()) return base;
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    base.host = addr;
    return base;
  }
  if (colon > 0) base.host = addr.substr(0, colon);
  try {
    std::size_t used = 0;
    int port = std::stoi(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1 || port < 0 || port > 65535) throw std::invalid_argument("port");
    base.port = port;
  } catch (const std::exception&) {
    throw Error("ConfigInvalid", "bind address " + addr);
  }
  return base;
}

int status_for(const std::string& kind) {
  if (kind == "UnknownSession" || kind == "UnknownRater" || kind == "UnknownItem" || kind == "UnknownDataset") {
    return 404;
  }
  if (kind == "NotAssigned" || kind == "Forbidden") return 403;
  if (kind == "DuplicateRating" || kind == "SessionClosed" || kind == "SessionOpen" || kind == "NotFlagged") {
    return 409;
  }
  if (kind == "IoError" || kind == "CorruptStore" || kind == "Internal") return 500;
  return 400;
}

struct ReviewServer::Impl {
  httplib::Server server;
};

ReviewServer::ReviewServer(ReviewStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>()), options_(std::move(options)) {
  auto& srv = impl_->server;
  auto root = options_.dataset_root.empty() ? store.dir() : options_.dataset_root;

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, e.kind(), e.what());
    } catch (const json::exception& e) {
      send_error(res, "BadRequest", e.what());
    } catch (const std::exception& e) {
      send_error(res, "Internal", e.what());
    }
  });

  srv.Post("/sessions", [&store, root](const httplib::Request& req, httplib::Response& res) {
    auto s = store.create_session(session_request(parse_body(req), root));
    send_json(res, 201, session_to_json(s));
  });

  srv.Get("/sessions/:sid", [&store](const httplib::Request& req, httplib::Response& res) {
    const auto& sid = req.path_params.at("sid");
    auto j = session_to_json(store.session(sid));
    j["ratings"] = store.events(sid).size();
    j["pending_disagreements"] = store.flag_disagreements(sid).pending();
    send_json(res, 200, j);
  });

  srv.Get("/sessions/:sid/raters/:rid/next", [&store](const httplib::Request& req, httplib::Response& res) {
    const auto& rid = req.path_params.at("rid");
    check_rater_header(req, rid);
    auto task = store.next_task(req.path_params.at("sid"), rid);
    if (!task) {
      res.status = 204;
      return;
    }
    send_json(res, 200, task_to_json(*task));
  });

  srv.Post("/ratings", [&store](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req);
    auto event = rating_from_json(body);
    check_rater_header(req, event.rater_id);
    auto id = store.submit_rating(event);
    send_json(res, 201, {{"event_id", id}});
  });

  srv.Get("/sessions/:sid/disagreements", [&store](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, disagreements_to_json(store.flag_disagreements(req.path_params.at("sid"))));
  });

  srv.Post("/consensus", [&store](const httplib::Request& req, httplib::Response& res) {
    auto record = consensus_from_json(parse_body(req));
    check_rater_header(req, record.adjudicator_id);
    store.record_consensus(record);
    send_json(res, 201, {{"ok", true}, {"item_id", record.item_id}});
  });

  srv.Get("/sessions/:sid/export", [&store](const httplib::Request& req, httplib::Response& res) {
    bool force = req.has_param("force") && req.get_param_value("force") != "0";
    auto out = store.export_session(req.path_params.at("sid"), force);
    res.status = 200;
    res.set_content(out.jsonl(), "application/x-ndjson");
  });

  srv.Post("/sessions/:sid/close", [&store](const httplib::Request& req, httplib::Response& res) {
    const auto& sid = req.path_params.at("sid");
    store.close_session(sid);
    send_json(res, 200, session_to_json(store.session(sid)));
  });

  if (!options_.static_dir.empty() && std::filesystem::is_directory(options_.static_dir)) {
    srv.set_mount_point("/", options_.static_dir.string());
  }
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start() {
  auto& srv = impl_->server;
  bool ok = options_.port == 0 ? (port_ = srv.bind_to_any_port(options_.host)) > 0
                               : srv.bind_to_port(options_.host, port_ = options_.port);
  if (!ok) throw Error("BindFailed", options_.host + ":" + std::to_string(options_.port));
  thread_ = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  return port_;
}

void ReviewServer::run() {
  auto& srv = impl_->server;
  bool ok = options_.port == 0 ? (port_ = srv.bind_to_any_port(options_.host)) > 0
                               : srv.bind_to_port(options_.host, port_ = options_.port);
  if (!ok) throw Error("BindFailed", options_.host + ":" + std::to_string(options_.port));
  srv.listen_after_bind();
}

void ReviewServer::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace forge::review
