#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "forge/corpus.hpp"

namespace forge::dedup {

enum class Mode { exact, minhash_prefilter };

struct SimilarityConfig {
  double threshold = 0.9;
  Mode mode = Mode::exact;
  int minhash_hashes = 256;
  std::uint64_t seed = 0;
  // Candidate pairs whose signature estimate falls below
  // threshold - prefilter_margin skip the exact comparison.
  double prefilter_margin = 0.1;

  void validate() const;
};

Mode mode_from_string(const std::string& s);

double jaccard_index(const std::set<std::string>& a, const std::set<std::string>& b);

using Signature = std::vector<std::uint64_t>;

Signature minhash_signature(const std::set<std::string>& s, const SimilarityConfig& cfg);
double estimate_from_signatures(const Signature& a, const Signature& b);

struct Discarded {
  std::string unit_id;
  std::string origin_path;
  std::string duplicate_of;
  double similarity = 0.0;
};

struct DedupReport {
  std::string filename;
  std::vector<std::string> kept;
  std::vector<Discarded> discarded;
  int groups_processed = 0;
};

// Greedy scan in ascending unit_id order; units must share one filename.
DedupReport dedup_group(const std::vector<corpus::ContractUnit>& units, const SimilarityConfig& cfg);

struct DedupResult {
  std::vector<corpus::ContractUnit> kept_units;  // input order preserved
  std::vector<DedupReport> groups;
};

DedupResult dedup_all(const std::vector<corpus::ContractUnit>& units, const SimilarityConfig& cfg);

json report_to_json(const DedupReport& r);
json result_report_json(const DedupResult& r, const SimilarityConfig& cfg);

}  // namespace forge::dedup
