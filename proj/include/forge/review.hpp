#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "forge/evalharness.hpp"
#include "forge/rating.hpp"
#include "forge/training.hpp"
#include "forge/util.hpp"

namespace forge::review {

// What a rater sees for one item. Only item_id is required; the rest comes
// from the dataset the session was created from.
struct ReviewItem {
  std::string item_id;
  std::string vuln_type;
  std::string code;
  std::string explanation;
  std::optional<int> label;
  std::vector<std::pair<int, int>> locations;
  bool operator==(const ReviewItem&) const = default;
};

json item_to_json(const ReviewItem& item);
ReviewItem item_from_json(const json& j);

enum class Status { open, closed };
std::string_view to_string(Status s);

struct ReviewSession {
  std::string session_id;
  Purpose purpose = Purpose::likert_eval;
  std::vector<std::string> item_ids;
  std::vector<std::string> raters;
  std::vector<std::string> adjudicators;
  double overlap_fraction = 0.2;
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<std::string>> assignments;  // item_id -> raters, primary first
  Status status = Status::open;
  std::string created_at;
};

json session_to_json(const ReviewSession& s);
ReviewSession session_from_json(const json& j);

struct SessionRequest {
  Purpose purpose = Purpose::likert_eval;
  std::vector<ReviewItem> items;
  std::vector<std::string> raters;
  std::vector<std::string> adjudicators;
  double overlap_fraction = 0.2;
  std::uint64_t seed = 0;
};

// round(fraction * n), half-up.
std::size_t overlap_count(std::size_t n, double fraction);

// Deterministic assignment used by create_session. Overlap items are a seeded
// sample without replacement; primary raters go round-robin over a seeded
// rater order; second raters go to whoever has the fewest extras.
// Errors: TooFewRaters, DuplicateItems, BadRequest (no items, fraction outside [0,1)).
std::map<std::string, std::vector<std::string>> assign(const std::vector<std::string>& item_ids,
                                                       const std::vector<std::string>& raters, double fraction,
                                                       std::uint64_t seed);

struct Task {
  std::string session_id;
  std::string rater_id;
  Purpose purpose = Purpose::likert_eval;
  std::size_t ordinal = 0;
  std::size_t remaining = 0;  // including this one
  ReviewItem item;
  std::vector<int> highlight_lines;
  json rubric;
};

json task_to_json(const Task& t);

// Curation checklist shown with curation_verify tasks.
const std::vector<std::string>& curation_checklist();

struct ConsensusRecord {
  std::string session_id;
  std::string item_id;
  LikertScores scores;
  std::string adjudicator_id;
  std::string note;
  std::vector<std::string> replaces;  // event_ids of the disagreeing ratings
  std::string recorded_at;
  bool operator==(const ConsensusRecord&) const = default;
};

json consensus_to_json(const ConsensusRecord& c);
ConsensusRecord consensus_from_json(const json& j);

struct Disagreement {
  std::string item_id;
  std::vector<std::pair<std::string, LikertScores>> ratings;  // (rater, scores)
  std::array<int, 3> differences{};
  bool resolved = false;
};

struct DisagreementReport {
  std::vector<Disagreement> flagged;  // pending and resolved
  std::vector<std::string> warnings;
  std::vector<std::string> pending() const;
};

json disagreements_to_json(const DisagreementReport& r);

struct ExportResult {
  std::vector<json> rows;
  std::vector<training::VerifiedOverride> overrides;
  std::vector<std::string> warnings;
  // Rows, then one "override" row per override, then one "warning" row per warning.
  std::string jsonl() const;
};

struct StoreOptions {
  bool fsync = true;
  // Returns an ISO 8601 UTC timestamp. Defaults to the system clock.
  std::function<std::string()> clock;
};

std::string utc_now();

// Durable review state. Every mutation is appended to log.jsonl (one record
// per line, each with a sha256 of its payload) and fsynced before it is
// applied. On open the log is replayed after the latest snapshot; a torn or
// corrupt tail is truncated.
class ReviewStore {
 public:
  explicit ReviewStore(std::filesystem::path dir, StoreOptions options = {});
  ~ReviewStore();
  ReviewStore(const ReviewStore&) = delete;
  ReviewStore& operator=(const ReviewStore&) = delete;

  // Errors: TooFewRaters, DuplicateItems, BadRequest.
  ReviewSession create_session(const SessionRequest& request);
  // Errors: UnknownSession.
  ReviewSession session(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;
  // Errors: UnknownSession, UnknownRater, SessionClosed.
  std::optional<Task> next_task(const std::string& session_id, const std::string& rater_id) const;
  // Returns the stored event_id. A revision names the rater's latest event in
  // supersedes. Errors: UnknownSession, SessionClosed, NotAssigned,
  // DuplicateRating, ScoreOutOfRange, BadRequest.
  std::string submit_rating(RatingEvent event);
  // Errors: UnknownSession.
  DisagreementReport flag_disagreements(const std::string& session_id) const;
  // Errors: UnknownSession, UnknownItem, NotFlagged, UnknownRater,
  // ScoreOutOfRange, ConsensusOutOfRange (outside [min,max] without a note).
  void record_consensus(ConsensusRecord record);
  // Errors: UnknownSession, SessionOpen (unless forced).
  ExportResult export_session(const std::string& session_id, bool force = false) const;
  // Errors: UnknownSession.
  void close_session(const std::string& session_id);
  // Every rating event in the session, revisions included.
  std::vector<RatingEvent> events(const std::string& session_id) const;
  std::vector<ConsensusRecord> consensus(const std::string& session_id) const;

  // Writes snapshot.json atomically; later opens replay only newer records.
  void snapshot();
  std::size_t log_records() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  struct SessionState;
  struct State;

  void append(const std::string& type, const json& data);
  void apply(const std::string& type, const json& data);
  const SessionState& find(const std::string& session_id) const;
  std::string timestamp() const;

  std::filesystem::path dir_;
  StoreOptions options_;
  mutable std::shared_mutex mutex_;
  std::unique_ptr<State> state_;
  int fd_ = -1;
  std::size_t records_ = 0;
};

}  // namespace forge::review
