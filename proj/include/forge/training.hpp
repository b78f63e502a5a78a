#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "forge/annotate.hpp"
#include "forge/corpus.hpp"
#include "forge/judge.hpp"
#include "forge/patterns.hpp"
#include "forge/util.hpp"

namespace forge::training {

// ---- continual pre-training mix ----

enum class Origin { smart_contract, general };
std::string_view to_string(Origin o);
Origin origin_from_string(std::string_view s);

struct CptRecord {
  std::string record_id;
  std::string text;
  Origin origin = Origin::general;
  std::uint64_t token_count = 0;
  bool operator==(const CptRecord&) const = default;
};

// Whitespace-separated words.
std::vector<std::string> word_split(const std::string& text);

CptRecord contract_record(const corpus::ContractUnit& unit);
CptRecord general_record(const std::string& record_id, const std::string& text);

// Instance fraction of general data in the paper's mix: 100000 / 286397.
double default_general_fraction();

// round(fraction * contracts / (1 - fraction)).
std::uint64_t general_needed(std::uint64_t contracts, double fraction);

struct CptStats {
  std::uint64_t contract_instances = 0;
  std::uint64_t general_instances = 0;
  std::uint64_t contract_tokens = 0;
  std::uint64_t general_tokens = 0;
  double target_fraction = 0;
  double general_fraction = 0;
  std::uint64_t seed = 0;
};

struct CptMix {
  std::vector<CptRecord> records;
  CptStats stats;
};

// General records are drawn from a seeded shuffle of the pool, then the whole
// mix is shuffled. Errors: ConfigInvalid (fraction outside [0,1)),
// InsufficientGeneralData.
CptMix assemble_cpt(const std::vector<CptRecord>& contracts, const std::vector<CptRecord>& general,
                    double target_general_fraction, std::uint64_t seed = 0);
CptMix assemble_cpt(const std::vector<corpus::ContractUnit>& contracts, const std::vector<CptRecord>& general,
                    double target_general_fraction, std::uint64_t seed = 0);

json cpt_record_to_json(const CptRecord& r);
CptRecord cpt_record_from_json(const json& j);
json cpt_stats_to_json(const CptStats& s);

// ---- explanation-guided SFT pairs ----

enum class Provenance { llm_selected, human_verified };
std::string_view to_string(Provenance p);

struct SftExample {
  std::string example_id;
  VulnType vuln_type = VulnType::reentrancy;
  std::string code;
  int label = 0;
  std::string explanation;
  std::vector<std::pair<int, int>> locations;
  Provenance provenance = Provenance::llm_selected;
  bool operator==(const SftExample&) const = default;
};

// Expert-corrected explanation for a candidate, keyed by candidate_id.
struct VerifiedOverride {
  std::string candidate_id;
  std::string explanation;
  std::vector<std::pair<int, int>> locations;
};

using LabelKey = std::pair<std::string, VulnType>;  // (unit_id, vuln_type)

struct SftInputs {
  std::map<std::string, annotate::AnnotationCandidate> candidates;  // by candidate_id
  std::map<std::string, corpus::ContractUnit> units;                // by unit_id
  std::map<std::string, VerifiedOverride> overrides;                // by candidate_id
  std::map<LabelKey, int> ground_truth;                             // optional
};

struct SftResult {
  std::vector<SftExample> examples;
  std::map<VulnType, std::uint64_t> counts;
  std::map<VulnType, std::uint64_t> vulnerable_counts;
  // Examples whose candidate label disagreed with the ground-truth label.
  std::vector<std::string> label_conflicts;
};

// Errors: DanglingSelection(candidate_id), MissingInput (unit absent),
// EmptyExplanation (human-verified override with no text).
SftResult assemble_sft(const std::vector<judge::SelectionRecord>& selections, const SftInputs& inputs);

// Published per-type SFT counts, for comparison only.
const std::map<VulnType, std::uint64_t>& paper_sft_counts();
json sft_counts_report(const SftResult& r);

json sft_to_json(const SftExample& e);
SftExample sft_from_json(const json& j);

// ---- losses ----

struct ProbSequence {
  std::vector<double> probs;
  std::string description;
};

// -sum ln p_i in nats. Errors: NonPositiveProbability(index),
// InvalidProbability(index) for p > 1 or NaN.
double loss_adapt(const ProbSequence& seq);
// (loss_adapt(gen) + loss_adapt(det)) / 2.
double loss_sft(const ProbSequence& gen, const ProbSequence& det);

// ---- n-gram analogue ----

inline const std::string kUnk = "<unk>";

using Context = std::vector<std::string>;

class NgramModel {
 public:
  int order = 2;
  double add_k = 0;
  std::vector<std::string> vocab;  // sorted, includes kUnk
  std::map<Context, std::map<std::string, std::uint64_t>> counts;
  std::map<Context, std::uint64_t> context_totals;

  const std::string& map_token(const std::string& tok) const;
  double prob(const Context& ctx, const std::string& token) const;

  // Distribution over seen successors of ctx (empty if ctx unseen). With
  // add_k > 0 the listed values do not sum to 1.
  std::map<std::string, double> conditional(const Context& ctx) const;
  // Replaces the distribution for ctx; tokens not listed get probability 0.
  void set_conditional(const Context& ctx, std::map<std::string, double> dist);

 private:
  std::map<Context, std::map<std::string, double>> overrides_;
  friend json ngram_to_json(const NgramModel& m);
  friend NgramModel ngram_from_json(const json& j);
};

// Errors: EmptyCorpus, ConfigInvalid (order < 1, k < 0).
NgramModel train_ngram(const std::vector<std::vector<std::string>>& corpus, int order, double add_k);

// Loss over positions order..n (1-based). Errors: SequenceTooShort,
// InfiniteLoss(position).
double model_loss(const NgramModel& m, const std::vector<std::string>& tokens);
// Number of positions scored by model_loss.
std::size_t scored_positions(const NgramModel& m, const std::vector<std::string>& tokens);

// Sum of losses and scored positions over several sequences; sequences
// shorter than the order are skipped.
struct CorpusLoss {
  double total = 0;
  std::size_t positions = 0;
  double average() const { return positions ? total / static_cast<double>(positions) : 0.0; }
};
CorpusLoss corpus_loss(const NgramModel& m, const std::vector<std::vector<std::string>>& corpus);

std::vector<std::string> contract_tokens(const std::string& source);

json ngram_to_json(const NgramModel& m);
NgramModel ngram_from_json(const json& j);

// ---- training manifests ----

enum class Stage { cpt, sft };
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

struct TrainManifest {
  Stage stage = Stage::cpt;
  int per_device_batch = 0;
  int grad_accum = 0;
  int epochs = 0;
  double learning_rate = 0;
  std::string schedule;
  int warmup_steps = 0;
  int cutoff_len = 0;
  int save_steps = 0;
  std::string optimizer;
  double adam_beta1 = 0;
  double adam_beta2 = 0;
  double adam_epsilon = 0;
  std::string theta_note;
  bool operator==(const TrainManifest&) const = default;
};

// Stage defaults with optional field overrides. Errors: ConfigInvalid for
// unknown keys or wrong value types.
TrainManifest emit_train_manifest(Stage stage, const json& overrides = json::object());
json manifest_to_json(const TrainManifest& m);

}  // namespace forge::training
