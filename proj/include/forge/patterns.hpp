#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"

namespace forge {

enum class VulnType { reentrancy, timestamp_dependency, integer_overflow_underflow, delegatecall };

inline constexpr std::array<VulnType, 4> kAllVulnTypes = {
    VulnType::reentrancy, VulnType::timestamp_dependency, VulnType::integer_overflow_underflow,
    VulnType::delegatecall};

std::string_view to_string(VulnType t);
// Short code: RE, TD, IO, DE.
std::string_view short_code(VulnType t);
// Accepts full names and short codes, case-insensitive.
VulnType vuln_type_from_string(std::string_view s);

}  // namespace forge

namespace forge::patterns {

// Feature names recorded in CandidateHit::matched_feature.
inline constexpr std::string_view kCallValue = "call.value";
inline constexpr std::string_view kCallBraceValue = ".call{value:";
inline constexpr std::string_view kBlockTimestamp = "block.timestamp";
inline constexpr std::string_view kNow = "now";
inline constexpr std::string_view kDelegatecall = ".delegatecall";
inline constexpr std::string_view kArithmetic = "arithmetic";
inline constexpr std::string_view kSafeMathAbsent = "safemath_absent";

std::vector<std::string_view> features_for(VulnType t);

struct CandidateHit {
  std::string unit_id;
  VulnType vuln_type;
  std::string matched_feature;
  std::vector<int> lines;
};

std::vector<CandidateHit> extract_candidates(const corpus::ContractUnit& unit, VulnType type);

// Keyword-presence baseline: 1 iff any candidate hit exists.
int rule_label(const corpus::ContractUnit& unit, VulnType type);

json hit_to_json(const CandidateHit& h);
CandidateHit hit_from_json(const json& j);

}  // namespace forge::patterns
