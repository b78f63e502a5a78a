#pragma once

#include <optional>
#include <string>

#include "forge/util.hpp"

namespace forge::review {

enum class Purpose { curation_verify, likert_eval };
std::string_view to_string(Purpose p);
Purpose purpose_from_string(std::string_view s);

enum class Verdict { approve, edit };
std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view s);

struct LikertScores {
  int correctness = 0;
  int completeness = 0;
  int conciseness = 0;
  bool operator==(const LikertScores&) const = default;
};

struct RatingEvent {
  std::string event_id;
  std::string session_id;
  std::string item_id;
  std::string rater_id;
  std::optional<LikertScores> scores;  // likert_eval
  std::optional<Verdict> verdict;      // curation_verify
  std::string edited_explanation;      // verdict == edit
  std::string rationale;
  std::string submitted_at;  // UTC, ISO 8601
  std::string supersedes;    // event_id this one revises, empty if none
  bool operator==(const RatingEvent&) const = default;
};

json rating_to_json(const RatingEvent& e);
RatingEvent rating_from_json(const json& j);

}  // namespace forge::review
