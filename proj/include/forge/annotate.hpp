#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/llmclient.hpp"
#include "forge/patterns.hpp"

namespace forge::annotate {

struct PromptTemplate {
  VulnType vuln_type;
  std::string system_text;
  // Placeholders: {vuln_name} {checklist} {label_hint} {code}
  std::string user_template;
  std::vector<std::string> checklist;
};

const PromptTemplate& template_for(VulnType type);

// "   1 | line" prefixes, 1-based.
std::string number_lines(const std::string& source);

// Label-guided when known_label is set; detection otherwise.
llm::Messages build_prompt(const PromptTemplate& tmpl, const corpus::ContractUnit& unit,
                           std::optional<int> known_label);

// Follow-up sent once when a response lacks a parseable result block.
std::string reformat_request();

struct Location {
  int line_start = 0;
  int line_end = 0;
  std::string snippet;
  bool operator==(const Location&) const = default;
};

struct ParsedAnnotation {
  int label = 0;
  std::string explanation;
  std::vector<Location> locations;
};

// Extracts the fenced ```result block. Errors: MissingBlock, BadLabelValue,
// LocationOutOfRange, BadLocation, MissingLocations.
ParsedAnnotation parse_annotation(const std::string& raw, const corpus::ContractUnit& unit);

// Snippet for a line range: the unit's lines joined and whitespace-collapsed.
std::string snippet_for(const corpus::ContractUnit& unit, int line_start, int line_end);

struct AnnotationCandidate {
  std::string candidate_id;
  std::string unit_id;
  VulnType vuln_type = VulnType::reentrancy;
  std::string generator_id;
  int label = 0;
  std::string explanation;
  std::vector<Location> locations;
  std::string raw_response;
  int attempts = 1;  // 2 when the reformat retry was needed

  bool operator==(const AnnotationCandidate&) const = default;
};

std::string make_candidate_id(const std::string& unit_id, VulnType type, const std::string& generator_id);

struct Generator {
  std::string id;  // model name
  std::shared_ptr<llm::ChatClient> client;
};

struct GenerationFailure {
  std::string unit_id;
  std::string generator_id;
  std::string reason;
};

// One candidate per generator that yields a parseable response. Failures are
// appended to *failures when given. Throws AllGeneratorsFailed when none do.
std::vector<AnnotationCandidate> generate_candidates(const corpus::ContractUnit& unit, VulnType type,
                                                     const std::vector<Generator>& generators,
                                                     std::optional<int> known_label,
                                                     std::vector<GenerationFailure>* failures = nullptr);

json candidate_to_json(const AnnotationCandidate& c);
AnnotationCandidate candidate_from_json(const json& j);

}  // namespace forge::annotate
