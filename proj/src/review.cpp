#include "forge/review.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <mutex>

#include "forge/error.hpp"
#include "forge/judge.hpp"

namespace forge::review {

namespace {

json scores_json(const LikertScores& s) {
  return {{"correctness", s.correctness}, {"completeness", s.completeness}, {"conciseness", s.conciseness}};
}

LikertScores scores_from(const json& j) {
  for (const char* k : {"correctness", "completeness", "conciseness"}) {
    if (!j.contains(k) || !j[k].is_number_integer()) throw Error("BadRequest", std::string("scores.") + k);
  }
  return {j["correctness"].get<int>(), j["completeness"].get<int>(), j["conciseness"].get<int>()};
}

std::array<int, 3> as_array(const LikertScores& s) { return {s.correctness, s.completeness, s.conciseness}; }

bool in_likert_range(const LikertScores& s) {
  auto a = as_array(s);
  return std::all_of(a.begin(), a.end(), [](int v) { return v >= 1 && v <= 4; });
}

std::string record_checksum(std::size_t seq, const std::string& type, const json& data) {
  return sha256_hex(json{{"seq", seq}, {"type", type}, {"data", data}}.dump());
}

}  // namespace

json item_to_json(const ReviewItem& item) {
  json j{{"item_id", item.item_id}, {"vuln_type", item.vuln_type}, {"code", item.code},
         {"explanation", item.explanation}, {"locations", json::array()}};
  j["label"] = item.label ? json(*item.label) : json(nullptr);
  for (const auto& [a, b] : item.locations) j["locations"].push_back({a, b});
  return j;
}

ReviewItem item_from_json(const json& j) {
  ReviewItem item;
  if (j.is_string()) {
    item.item_id = j.get<std::string>();
    return item;
  }
  item.item_id = j.at("item_id").get<std::string>();
  item.vuln_type = j.value("vuln_type", "");
  item.code = j.value("code", "");
  item.explanation = j.value("explanation", "");
  if (j.contains("label") && !j["label"].is_null()) item.label = j["label"].get<int>();
  if (j.contains("locations")) {
    for (const auto& loc : j["locations"]) {
      if (loc.is_array()) item.locations.emplace_back(loc.at(0).get<int>(), loc.at(1).get<int>());
      else item.locations.emplace_back(loc.at("start_line").get<int>(), loc.at("end_line").get<int>());
    }
  }
  return item;
}

std::string_view to_string(Status s) { return s == Status::open ? "open" : "closed"; }

json session_to_json(const ReviewSession& s) {
  return json{{"session_id", s.session_id},
              {"purpose", std::string(to_string(s.purpose))},
              {"item_ids", s.item_ids},
              {"raters", s.raters},
              {"adjudicators", s.adjudicators},
              {"overlap_fraction", s.overlap_fraction},
              {"seed", s.seed},
              {"assignments", s.assignments},
              {"status", std::string(to_string(s.status))},
              {"created_at", s.created_at}};
}

ReviewSession session_from_json(const json& j) {
  ReviewSession s;
  s.session_id = j.at("session_id").get<std::string>();
  s.purpose = purpose_from_string(j.at("purpose").get<std::string>());
  s.item_ids = j.at("item_ids").get<std::vector<std::string>>();
  s.raters = j.at("raters").get<std::vector<std::string>>();
  s.adjudicators = j.value("adjudicators", std::vector<std::string>{});
  s.overlap_fraction = j.at("overlap_fraction").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.assignments = j.at("assignments").get<std::map<std::string, std::vector<std::string>>>();
  s.status = j.at("status").get<std::string>() == "closed" ? Status::closed : Status::open;
  s.created_at = j.value("created_at", "");
  return s;
}

std::size_t overlap_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

std::map<std::string, std::vector<std::string>> assign(const std::vector<std::string>& item_ids,
                                                       const std::vector<std::string>& raters, double fraction,
                                                       std::uint64_t seed) {
  if (item_ids.empty()) throw Error("BadRequest", "no items");
  if (!(fraction >= 0.0 && fraction < 1.0)) throw Error("BadRequest", "overlap_fraction outside [0,1)");
  std::set<std::string> seen;
  for (const auto& id : item_ids) {
    if (!seen.insert(id).second) throw Error("DuplicateItems", id);
  }
  std::set<std::string> distinct(raters.begin(), raters.end());
  if (distinct.size() != raters.size()) throw Error("BadRequest", "duplicate rater");
  const std::size_t k = overlap_count(item_ids.size(), fraction);
  if (raters.empty() || (fraction > 0.0 && raters.size() < 2)) {
    throw Error("TooFewRaters", std::to_string(raters.size()) + " rater(s)");
  }

  std::vector<std::size_t> order(item_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, seed);
  std::set<std::size_t> overlapped(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

  std::vector<std::string> rater_order = raters;
  seeded_shuffle(rater_order, mix64(seed ^ 0x7261746572));

  std::map<std::string, std::vector<std::string>> out;
  std::map<std::string, std::size_t> extras;
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    const auto& primary = rater_order[i % rater_order.size()];
    std::vector<std::string> assigned{primary};
    if (overlapped.count(i)) {
      const std::string* best = nullptr;
      for (const auto& r : rater_order) {
        if (r == primary) continue;
        if (!best || extras[r] < extras[*best]) best = &r;
      }
      ++extras[*best];
      assigned.push_back(*best);
    }
    out[item_ids[i]] = std::move(assigned);
  }
  return out;
}

json task_to_json(const Task& t) {
  return json{{"session_id", t.session_id}, {"rater_id", t.rater_id},
              {"purpose", std::string(to_string(t.purpose))}, {"ordinal", t.ordinal},
              {"remaining", t.remaining}, {"item", item_to_json(t.item)},
              {"highlight_lines", t.highlight_lines}, {"rubric", t.rubric}};
}

const std::vector<std::string>& curation_checklist() {
  static const std::vector<std::string> items = {
      "The label matches the code for this vulnerability type.",
      "Every claimed location points at the lines that carry the issue.",
      "The explanation states the mechanism without factual errors.",
      "Approve as is, or edit the explanation to correct or complete it.",
  };
  return items;
}

json consensus_to_json(const ConsensusRecord& c) {
  return json{{"session_id", c.session_id}, {"item_id", c.item_id},         {"scores", scores_json(c.scores)},
              {"adjudicator_id", c.adjudicator_id}, {"note", c.note}, {"replaces", c.replaces},
              {"recorded_at", c.recorded_at}};
}

ConsensusRecord consensus_from_json(const json& j) {
  ConsensusRecord c;
  c.session_id = j.at("session_id").get<std::string>();
  c.item_id = j.at("item_id").get<std::string>();
  c.scores = scores_from(j.at("scores"));
  c.adjudicator_id = j.at("adjudicator_id").get<std::string>();
  c.note = j.value("note", "");
  c.replaces = j.value("replaces", std::vector<std::string>{});
  c.recorded_at = j.value("recorded_at", "");
  return c;
}

std::vector<std::string> DisagreementReport::pending() const {
  std::vector<std::string> out;
  for (const auto& d : flagged) {
    if (!d.resolved) out.push_back(d.item_id);
  }
  return out;
}

json disagreements_to_json(const DisagreementReport& r) {
  json flagged = json::array();
  for (const auto& d : r.flagged) {
    json ratings = json::array();
    for (const auto& [rater, s] : d.ratings) ratings.push_back({{"rater_id", rater}, {"scores", scores_json(s)}});
    flagged.push_back({{"item_id", d.item_id},
                       {"ratings", ratings},
                       {"differences",
                        {{"correctness", d.differences[0]},
                         {"completeness", d.differences[1]},
                         {"conciseness", d.differences[2]}}},
                       {"resolved", d.resolved}});
  }
  return json{{"flagged", flagged}, {"pending", r.pending()}, {"warnings", r.warnings}};
}

std::string ExportResult::jsonl() const {
  std::vector<json> all = rows;
  for (const auto& o : overrides) {
    json locs = json::array();
    for (const auto& [a, b] : o.locations) locs.push_back({a, b});
    all.push_back({{"type", "override"}, {"candidate_id", o.candidate_id}, {"explanation", o.explanation},
                   {"locations", locs}});
  }
  for (const auto& w : warnings) all.push_back({{"type", "warning"}, {"message", w}});
  return to_jsonl(all);
}

std::string utc_now() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct ReviewStore::SessionState {
  ReviewSession session;
  std::map<std::string, ReviewItem> items;
  std::map<std::string, std::size_t> ordinal;
  std::vector<RatingEvent> events;
  std::map<std::pair<std::string, std::string>, std::size_t> latest;  // (item, rater) -> index into events
  std::set<std::string> event_ids;
  std::vector<ConsensusRecord> consensus;

  std::set<std::string> overlapped() const {
    std::set<std::string> out;
    for (const auto& [item, raters] : session.assignments) {
      if (raters.size() > 1) out.insert(item);
    }
    return out;
  }

  const RatingEvent* latest_for(const std::string& item, const std::string& rater) const {
    auto it = latest.find({item, rater});
    return it == latest.end() ? nullptr : &events[it->second];
  }

  std::vector<std::pair<std::string, LikertScores>> scored(const std::string& item) const {
    std::vector<std::pair<std::string, LikertScores>> out;
    for (const auto& r : session.assignments.at(item)) {
      if (const auto* e = latest_for(item, r); e && e->scores) out.emplace_back(r, *e->scores);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

  const ConsensusRecord* consensus_for(const std::string& item) const {
    const ConsensusRecord* found = nullptr;
    for (const auto& c : consensus) {
      if (c.item_id == item) found = &c;
    }
    return found;
  }

  bool needs_consensus(const std::string& item) const {
    auto s = scored(item);
    if (s.size() < 2) return false;
    for (std::size_t d = 0; d < 3; ++d) {
      int lo = 5, hi = 0;
      for (const auto& [r, sc] : s) {
        lo = std::min(lo, as_array(sc)[d]);
        hi = std::max(hi, as_array(sc)[d]);
      }
      if (hi - lo > 1) return true;
    }
    return false;
  }
};

struct ReviewStore::State {
  std::map<std::string, SessionState> sessions;
};

ReviewStore::ReviewStore(std::filesystem::path dir, StoreOptions options)
    : dir_(std::move(dir)), options_(std::move(options)), state_(std::make_unique<State>()) {
  std::filesystem::create_directories(dir_);
  const auto log_path = dir_ / "log.jsonl";
  const auto snap_path = dir_ / "snapshot.json";

  std::size_t skip = 0;
  if (std::filesystem::exists(snap_path)) {
    try {
      auto snap = json::parse(read_file(snap_path));
      if (snap.at("sha256").get<std::string>() == sha256_hex(snap.at("data").dump())) {
        State loaded;
        for (const auto& s : snap["data"].at("sessions")) {
          SessionState st;
          st.session = session_from_json(s.at("session"));
          for (const auto& item : s.at("items")) {
            auto it = item_from_json(item);
            st.items[it.item_id] = it;
          }
          for (std::size_t i = 0; i < st.session.item_ids.size(); ++i) st.ordinal[st.session.item_ids[i]] = i;
          for (const auto& e : s.at("events")) {
            st.events.push_back(rating_from_json(e));
            st.event_ids.insert(st.events.back().event_id);
            st.latest[{st.events.back().item_id, st.events.back().rater_id}] = st.events.size() - 1;
          }
          for (const auto& c : s.at("consensus")) st.consensus.push_back(consensus_from_json(c));
          loaded.sessions.emplace(st.session.session_id, std::move(st));
        }
        *state_ = std::move(loaded);
        skip = snap["data"].at("log_records").get<std::size_t>();
      }
    } catch (const std::exception&) {
      state_ = std::make_unique<State>();
      skip = 0;
    }
  }

  std::size_t valid_bytes = 0;
  std::size_t seen = 0;
  if (std::filesystem::exists(log_path)) {
    std::string content = read_file(log_path);
    std::size_t pos = 0;
    while (pos < content.size()) {
      auto nl = content.find('\n', pos);
      if (nl == std::string::npos) break;  // torn final write
      json rec;
      try {
        rec = json::parse(content.substr(pos, nl - pos));
        if (rec.at("seq").get<std::size_t>() != seen ||
            rec.at("sha256").get<std::string>() !=
                record_checksum(seen, rec.at("type").get<std::string>(), rec.at("data"))) {
          break;
        }
      } catch (const std::exception&) {
        break;
      }
      if (seen >= skip) apply(rec["type"].get<std::string>(), rec["data"]);
      ++seen;
      pos = nl + 1;
      valid_bytes = pos;
    }
    if (seen < skip) {
      // Snapshot is ahead of the log: it cannot be trusted.
      state_ = std::make_unique<State>();
      throw Error("CorruptStore", "snapshot covers " + std::to_string(skip) + " records, log has " +
                                      std::to_string(seen));
    }
    if (valid_bytes < content.size()) std::filesystem::resize_file(log_path, valid_bytes);
  } else if (skip > 0) {
    throw Error("CorruptStore", "snapshot without log");
  }
  records_ = seen;

  fd_ = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd_ < 0) throw Error("IoError", log_path.string() + ": " + std::strerror(errno));
}

ReviewStore::~ReviewStore() {
  if (fd_ >= 0) ::close(fd_);
}

std::string ReviewStore::timestamp() const { return options_.clock ? options_.clock() : utc_now(); }

void ReviewStore::append(const std::string& type, const json& data) {
  json rec{{"seq", records_}, {"type", type}, {"data", data}};
  rec["sha256"] = record_checksum(records_, type, data);
  std::string line = rec.dump() + "\n";
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    auto n = ::write(fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("IoError", std::string("append: ") + std::strerror(errno));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  if (options_.fsync && ::fsync(fd_) != 0) throw Error("IoError", std::string("fsync: ") + std::strerror(errno));
  ++records_;
  apply(type, data);
}

void ReviewStore::apply(const std::string& type, const json& data) {
  if (type == "session") {
    SessionState st;
    st.session = session_from_json(data.at("session"));
    for (const auto& item : data.at("items")) {
      auto it = item_from_json(item);
      st.items[it.item_id] = it;
    }
    for (std::size_t i = 0; i < st.session.item_ids.size(); ++i) st.ordinal[st.session.item_ids[i]] = i;
    state_->sessions.emplace(st.session.session_id, std::move(st));
  } else if (type == "rating") {
    auto e = rating_from_json(data);
    auto& st = state_->sessions.at(e.session_id);
    st.events.push_back(e);
    st.event_ids.insert(e.event_id);
    st.latest[{e.item_id, e.rater_id}] = st.events.size() - 1;
  } else if (type == "consensus") {
    auto c = consensus_from_json(data);
    state_->sessions.at(c.session_id).consensus.push_back(c);
  } else if (type == "close") {
    state_->sessions.at(data.at("session_id").get<std::string>()).session.status = Status::closed;
  } else {
    throw Error("CorruptStore", "unknown record type " + type);
  }
}

const ReviewStore::SessionState& ReviewStore::find(const std::string& session_id) const {
  auto it = state_->sessions.find(session_id);
  if (it == state_->sessions.end()) throw Error("UnknownSession", session_id);
  return it->second;
}

ReviewSession ReviewStore::create_session(const SessionRequest& request) {
  std::vector<std::string> ids;
  ids.reserve(request.items.size());
  for (const auto& item : request.items) ids.push_back(item.item_id);
  auto assignments = assign(ids, request.raters, request.overlap_fraction, request.seed);

  std::unique_lock lock(mutex_);
  ReviewSession s;
  s.purpose = request.purpose;
  s.item_ids = ids;
  s.raters = request.raters;
  s.adjudicators = request.adjudicators;
  s.overlap_fraction = request.overlap_fraction;
  s.seed = request.seed;
  s.assignments = std::move(assignments);
  s.created_at = timestamp();
  json key{{"purpose", std::string(to_string(s.purpose))}, {"items", ids},     {"raters", s.raters},
           {"fraction", s.overlap_fraction},                {"seed", s.seed}, {"n", records_}};
  s.session_id = "s-" + sha256_hex(key.dump()).substr(0, 12);

  json items = json::array();
  for (const auto& item : request.items) items.push_back(item_to_json(item));
  append("session", {{"session", session_to_json(s)}, {"items", items}});
  return s;
}

ReviewSession ReviewStore::session(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  return find(session_id).session;
}

std::vector<std::string> ReviewStore::session_ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, st] : state_->sessions) out.push_back(id);
  return out;
}

std::optional<Task> ReviewStore::next_task(const std::string& session_id, const std::string& rater_id) const {
  std::shared_lock lock(mutex_);
  const auto& st = find(session_id);
  const auto& raters = st.session.raters;
  if (std::find(raters.begin(), raters.end(), rater_id) == raters.end()) throw Error("UnknownRater", rater_id);
  if (st.session.status == Status::closed) throw Error("SessionClosed", session_id);

  std::optional<Task> out;
  std::size_t remaining = 0;
  for (std::size_t i = 0; i < st.session.item_ids.size(); ++i) {
    const auto& item_id = st.session.item_ids[i];
    const auto& assigned = st.session.assignments.at(item_id);
    if (std::find(assigned.begin(), assigned.end(), rater_id) == assigned.end()) continue;
    if (st.latest_for(item_id, rater_id)) continue;
    ++remaining;
    if (out) continue;
    Task t;
    t.session_id = session_id;
    t.rater_id = rater_id;
    t.purpose = st.session.purpose;
    t.ordinal = i;
    auto it = st.items.find(item_id);
    t.item = it != st.items.end() ? it->second : ReviewItem{item_id, "", "", "", std::nullopt, {}};
    std::set<int> lines;
    for (const auto& [a, b] : t.item.locations) {
      for (int l = a; l <= b; ++l) lines.insert(l);
    }
    t.highlight_lines.assign(lines.begin(), lines.end());
    if (t.purpose == Purpose::likert_eval) {
      json rubric{{"scale", "1-4"}, {"dimensions", json::array()}};
      for (auto d : judge::kDimensions) {
        const auto& anchors = judge::likert_anchors(d);
        rubric["dimensions"].push_back({{"name", std::string(judge::to_string(d))},
                                        {"description", std::string(judge::dimension_description(d))},
                                        {"anchors", std::vector<std::string>(anchors.begin(), anchors.end())}});
      }
      t.rubric = rubric;
    } else {
      t.rubric = {{"checklist", curation_checklist()}, {"verdicts", {"approve", "edit"}}};
    }
    out = std::move(t);
  }
  if (out) out->remaining = remaining;
  return out;
}

std::string ReviewStore::submit_rating(RatingEvent event) {
  std::unique_lock lock(mutex_);
  const auto& st = find(event.session_id);
  if (st.session.status == Status::closed) throw Error("SessionClosed", event.session_id);
  auto assigned = st.session.assignments.find(event.item_id);
  if (assigned == st.session.assignments.end() ||
      std::find(assigned->second.begin(), assigned->second.end(), event.rater_id) == assigned->second.end()) {
    throw Error("NotAssigned", event.item_id + "/" + event.rater_id);
  }
  if (st.session.purpose == Purpose::likert_eval) {
    if (!event.scores) throw Error("BadRequest", "likert_eval ratings need scores");
    if (!in_likert_range(*event.scores)) throw Error("ScoreOutOfRange", "scores must be in 1..4");
    event.verdict.reset();
    event.edited_explanation.clear();
  } else {
    if (!event.verdict) throw Error("BadRequest", "curation_verify ratings need a verdict");
    if (*event.verdict == Verdict::edit && trim(event.edited_explanation).empty()) {
      throw Error("BadRequest", "edit verdict needs edited_explanation");
    }
    event.scores.reset();
  }
  const auto* prior = st.latest_for(event.item_id, event.rater_id);
  if (event.supersedes.empty()) {
    if (prior) throw Error("DuplicateRating", event.item_id + "/" + event.rater_id);
  } else {
    if (!prior) throw Error("BadRequest", "nothing to revise for " + event.item_id + "/" + event.rater_id);
    if (prior->event_id != event.supersedes) throw Error("DuplicateRating", "stale revision of " + event.supersedes);
  }
  event.submitted_at = timestamp();
  event.event_id =
      "e-" + sha256_hex(event.session_id + "|" + event.item_id + "|" + event.rater_id + "|" + std::to_string(records_))
                 .substr(0, 16);
  append("rating", rating_to_json(event));
  return event.event_id;
}

DisagreementReport ReviewStore::flag_disagreements(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  const auto& st = find(session_id);
  DisagreementReport rep;
  if (st.session.purpose != Purpose::likert_eval) return rep;

  std::set<std::string> complete;
  for (const auto& item : st.overlapped()) {
    if (st.scored(item).size() >= 2) {
      complete.insert(item);
    } else {
      for (const auto& r : st.session.assignments.at(item)) {
        if (!st.latest_for(item, r)) rep.warnings.push_back("item " + item + ": missing rating from " + r);
      }
    }
  }
  std::vector<RatingEvent> latest;
  for (const auto& [key, idx] : st.latest) latest.push_back(st.events[idx]);
  auto agreement = eval::agreement_report(latest, complete);
  for (const auto& ia : agreement.items) {
    if (!ia.needs_consensus) continue;
    Disagreement d;
    d.item_id = ia.item_id;
    d.ratings = st.scored(ia.item_id);
    d.differences = ia.differences;
    d.resolved = st.consensus_for(ia.item_id) != nullptr;
    rep.flagged.push_back(std::move(d));
  }
  std::sort(rep.flagged.begin(), rep.flagged.end(),
            [&](const auto& a, const auto& b) { return st.ordinal.at(a.item_id) < st.ordinal.at(b.item_id); });
  return rep;
}

void ReviewStore::record_consensus(ConsensusRecord record) {
  std::unique_lock lock(mutex_);
  const auto& st = find(record.session_id);
  if (!st.session.assignments.count(record.item_id)) throw Error("UnknownItem", record.item_id);
  if (!st.needs_consensus(record.item_id)) throw Error("NotFlagged", record.item_id);
  const auto& s = st.session;
  bool known = std::find(s.raters.begin(), s.raters.end(), record.adjudicator_id) != s.raters.end() ||
               std::find(s.adjudicators.begin(), s.adjudicators.end(), record.adjudicator_id) != s.adjudicators.end();
  if (!known) throw Error("UnknownRater", "adjudicator " + record.adjudicator_id);
  if (!in_likert_range(record.scores)) throw Error("ScoreOutOfRange", "scores must be in 1..4");

  auto scored = st.scored(record.item_id);
  auto final_scores = as_array(record.scores);
  for (std::size_t d = 0; d < 3; ++d) {
    int lo = 5, hi = 0;
    for (const auto& [r, sc] : scored) {
      lo = std::min(lo, as_array(sc)[d]);
      hi = std::max(hi, as_array(sc)[d]);
    }
    if ((final_scores[d] < lo || final_scores[d] > hi) && trim(record.note).empty()) {
      throw Error("ConsensusOutOfRange", std::string(judge::to_string(judge::kDimensions[d])) + " outside [" +
                                            std::to_string(lo) + "," + std::to_string(hi) + "] without a note");
    }
  }
  record.replaces.clear();
  for (const auto& [r, sc] : scored) record.replaces.push_back(st.latest_for(record.item_id, r)->event_id);
  record.recorded_at = timestamp();
  append("consensus", consensus_to_json(record));
}

ExportResult ReviewStore::export_session(const std::string& session_id, bool force) const {
  std::shared_lock lock(mutex_);
  const auto& st = find(session_id);
  if (st.session.status == Status::open && !force) throw Error("SessionOpen", session_id);

  ExportResult out;
  if (st.session.status == Status::open) out.warnings.push_back("session " + session_id + " is still open");
  for (const auto& item_id : st.session.item_ids) {
    const auto& assigned = st.session.assignments.at(item_id);
    const auto* consensus = st.consensus_for(item_id);
    std::optional<training::VerifiedOverride> override;
    for (const auto& rater : assigned) {
      const auto* e = st.latest_for(item_id, rater);
      if (!e) {
        out.warnings.push_back("item " + item_id + ": missing rating from " + rater);
        continue;
      }
      json row = rating_to_json(*e);
      row["type"] = "rating";
      row.erase("supersedes");
      std::size_t revisions = 0;
      for (const auto& ev : st.events) {
        if (ev.item_id == item_id && ev.rater_id == rater) ++revisions;
      }
      row["revisions"] = revisions - 1;
      if (e->scores) row["final_scores"] = scores_json(consensus ? consensus->scores : *e->scores);
      row["resolved_by_consensus"] = consensus != nullptr;
      out.rows.push_back(std::move(row));
      if (e->verdict == Verdict::edit && !override) {
        training::VerifiedOverride o;
        o.candidate_id = item_id;
        o.explanation = e->edited_explanation;
        if (auto it = st.items.find(item_id); it != st.items.end()) o.locations = it->second.locations;
        override = std::move(o);
      }
    }
    if (consensus) {
      json row = consensus_to_json(*consensus);
      row["type"] = "consensus";
      out.rows.push_back(std::move(row));
    } else if (st.needs_consensus(item_id)) {
      out.warnings.push_back("item " + item_id + ": disagreement without consensus");
    }
    if (override) out.overrides.push_back(std::move(*override));
  }
  return out;
}

void ReviewStore::close_session(const std::string& session_id) {
  std::unique_lock lock(mutex_);
  const auto& st = find(session_id);
  if (st.session.status == Status::closed) return;
  append("close", {{"session_id", session_id}});
}

std::vector<RatingEvent> ReviewStore::events(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  return find(session_id).events;
}

std::vector<ConsensusRecord> ReviewStore::consensus(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  return find(session_id).consensus;
}

void ReviewStore::snapshot() {
  std::unique_lock lock(mutex_);
  json sessions = json::array();
  for (const auto& [id, st] : state_->sessions) {
    json items = json::array();
    for (const auto& item_id : st.session.item_ids) {
      if (auto it = st.items.find(item_id); it != st.items.end()) items.push_back(item_to_json(it->second));
    }
    json events = json::array();
    for (const auto& e : st.events) events.push_back(rating_to_json(e));
    json consensus = json::array();
    for (const auto& c : st.consensus) consensus.push_back(consensus_to_json(c));
    sessions.push_back({{"session", session_to_json(st.session)},
                        {"items", items},
                        {"events", events},
                        {"consensus", consensus}});
  }
  json data{{"log_records", records_}, {"sessions", sessions}};
  json snap{{"data", data}, {"sha256", sha256_hex(data.dump())}};
  write_file_atomic(dir_ / "snapshot.json", snap.dump());
}

std::size_t ReviewStore::log_records() const {
  std::shared_lock lock(mutex_);
  return records_;
}

}  // namespace forge::review
