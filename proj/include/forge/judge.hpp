#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "forge/annotate.hpp"
#include "forge/llmclient.hpp"

namespace forge::judge {

enum class Scale { curation_1_to_10, likert_1_to_4 };

std::string_view to_string(Scale s);
Scale scale_from_string(std::string_view s);
int scale_max(Scale s);

enum class Dimension { correctness, completeness, conciseness };
inline constexpr std::array<Dimension, 3> kDimensions = {Dimension::correctness, Dimension::completeness,
                                                         Dimension::conciseness};
std::string_view to_string(Dimension d);

// Four Likert anchors (score 1..4) for a dimension, as shown to raters.
const std::array<std::string, 4>& likert_anchors(Dimension d);
// Short description of what a dimension measures.
std::string_view dimension_description(Dimension d);

struct JudgeScore {
  std::string candidate_id;
  Scale scale = Scale::curation_1_to_10;
  int correctness = 0;
  int completeness = 0;
  int conciseness = 0;
  std::string rationale;
  std::string judge_model;

  int total() const { return correctness + completeness + conciseness; }
  bool operator==(const JudgeScore&) const = default;
};

// ground_truth is shown only in curation mode.
llm::Messages build_judge_prompt(const annotate::AnnotationCandidate& candidate, const corpus::ContractUnit& unit,
                                 Scale scale, std::optional<int> ground_truth = std::nullopt);

struct ParsedScores {
  int correctness = 0;
  int completeness = 0;
  int conciseness = 0;
  std::string rationale;
};

// Strict: out-of-range scores are errors. Errors: MissingBlock,
// ScoreOutOfRange, NonIntegerScore.
ParsedScores parse_judge_scores(const std::string& raw, Scale scale);

// Prompts the judge, with one reformat retry on an unparseable reply.
JudgeScore score_candidate(llm::ChatClient& judge, const annotate::AnnotationCandidate& candidate,
                           const corpus::ContractUnit& unit, Scale scale,
                           std::optional<int> ground_truth = std::nullopt);

struct JudgeItem {
  annotate::AnnotationCandidate candidate;
  const corpus::ContractUnit* unit = nullptr;
  std::optional<int> ground_truth;
};

// Scores items concurrently; in-flight requests are bounded by the client.
// Output order matches input order. Errors from individual items propagate.
std::vector<JudgeScore> score_batch(llm::ChatClient& judge, const std::vector<JudgeItem>& items, Scale scale);

struct ScoredCandidate {
  JudgeScore score;
  std::string unit_id;
  VulnType vuln_type = VulnType::reentrancy;
  std::string generator_id;
};

struct SelectionRecord {
  std::string unit_id;
  VulnType vuln_type = VulnType::reentrancy;
  std::string winner;
  int total_score = 0;
  std::vector<std::pair<std::string, int>> runner_up_scores;
  bool operator==(const SelectionRecord&) const = default;
};

// Ranking weights. total_score stays the unweighted sum.
struct SelectionWeights {
  int correctness = 1;
  int completeness = 1;
  int conciseness = 1;
};

// Winner: highest weighted total, then higher correctness, then smaller
// generator_id. Errors: NoScoredCandidates, ScaleMismatch, MixedUnits.
SelectionRecord select_best(const std::vector<ScoredCandidate>& scored, const SelectionWeights& w = {});

// Groups by (unit_id, vuln_type) and selects per group, ordered by key.
std::vector<SelectionRecord> select_all(const std::vector<ScoredCandidate>& scored, const SelectionWeights& w = {});

json score_to_json(const JudgeScore& s);
JudgeScore score_from_json(const json& j);
json scored_to_json(const ScoredCandidate& s);
ScoredCandidate scored_from_json(const json& j);
json selection_to_json(const SelectionRecord& r);
SelectionRecord selection_from_json(const json& j);

}  // namespace forge::judge
