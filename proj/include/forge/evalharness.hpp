#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "forge/judge.hpp"
#include "forge/patterns.hpp"
#include "forge/rating.hpp"
#include "forge/util.hpp"

namespace forge::eval {

struct EvalRecord {
  std::string unit_id;
  VulnType vuln_type = VulnType::reentrancy;
  int gold = 0;
  int predicted = 0;
  std::string explanation;
  std::string system_id;
  bool operator==(const EvalRecord&) const = default;
};

json record_to_json(const EvalRecord& r);
// Errors: BadRecord when gold or predicted is not 0/1.
EvalRecord record_from_json(const json& j);

// Cuts raw at the first paragraph that repeats an earlier one verbatim.
std::string truncate_repetition(const std::string& raw);

// Structured "label: VULNERABLE|SAFE" line first, else the first whole-word
// VULNERABLE/SAFE keyword (case-insensitive). Errors: NoLabelFound.
int parse_prediction(const std::string& raw);

struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

// Errors: EmptyInput.
ConfusionMatrix confusion(const std::vector<EvalRecord>& records);

struct Metric {
  double value = 0;  // percent, rounded half-up to 2 decimals
  bool undefined = false;
};

struct Metrics {
  Metric accuracy, precision, recall, f1;
};

// Errors: EmptyMatrix.
Metrics metrics(const ConfusionMatrix& cm);

// Harmonic mean of two percentages, rounded half-up to 2 decimals. Returns
// 0 when both are 0.
double f1_from_percentages(double precision, double recall);
// Unrounded 2PR/(P+R).
double f1_raw(double precision, double recall);

struct MetricsTable {
  json data;
  std::string text;
};

// Rows are systems (sorted), column groups are the four vulnerability types.
// Cells for missing (system, type) groups render as "--".
MetricsTable metrics_table(const std::vector<EvalRecord>& records);

// Published comparison table rows; absent metrics are nullopt.
struct PublishedRow {
  std::string system;
  VulnType vuln_type = VulnType::reentrancy;
  std::optional<double> accuracy, precision, recall, f1;
};

std::vector<PublishedRow> published_rows_from_json(const json& j);

struct F1Check {
  std::string system;
  VulnType vuln_type = VulnType::reentrancy;
  double precision = 0, recall = 0, published_f1 = 0;
  double recomputed_f1 = 0;  // rounded to 2 decimals
  double raw_f1 = 0;
  bool pass = false;  // |recomputed - published| <= tolerance, in hundredths
};

// One check per row where P, R and F1 are all published.
std::vector<F1Check> check_published_f1(const std::vector<PublishedRow>& rows, int tolerance_hundredths = 1);

enum class Evaluator { llm, human };
std::string_view to_string(Evaluator e);
Evaluator evaluator_from_string(std::string_view s);

struct LikertDistribution {
  judge::Dimension dimension = judge::Dimension::correctness;
  std::array<std::uint64_t, 4> counts{};  // index 0 is score 1
  std::string system_id;
  Evaluator evaluator = Evaluator::llm;

  std::uint64_t total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
  // Percent per score, rounded half-up to 1 decimal. Errors: EmptyInput.
  std::array<double, 4> shares() const;
};

// Errors: EmptyInput, ScoreOutOfRange.
LikertDistribution likert_distribution(const std::vector<std::pair<std::string, int>>& ratings,
                                       judge::Dimension dimension, const std::string& system_id = "",
                                       Evaluator evaluator = Evaluator::llm);
LikertDistribution distribution_from_counts(const std::array<std::uint64_t, 4>& counts, judge::Dimension dimension,
                                            const std::string& system_id = "", Evaluator evaluator = Evaluator::llm);
json distribution_to_json(const LikertDistribution& d);

struct ItemAgreement {
  std::string item_id;
  std::vector<std::string> raters;  // sorted
  std::array<int, 3> differences{};  // max - min per dimension
  bool needs_consensus = false;
};

struct AgreementReport {
  std::vector<ItemAgreement> items;
  std::vector<std::string> flagged;
  std::array<double, 3> exact_agreement{};  // fraction of items, per dimension
};

// Latest rating per (item, rater) wins; revisions supersede earlier events.
std::map<std::pair<std::string, std::string>, review::RatingEvent> latest_ratings(
    const std::vector<review::RatingEvent>& events);

// Compares Likert ratings on the overlapped items. An item is flagged when
// any dimension differs by more than 1. Errors: MissingSecondRating(item_id).
AgreementReport agreement_report(const std::vector<review::RatingEvent>& events,
                                 const std::set<std::string>& overlapped_items);
json agreement_to_json(const AgreementReport& r);

}  // namespace forge::eval
