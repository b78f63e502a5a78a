#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "forge/dedup.hpp"
#include "forge/judge.hpp"
#include "forge/llmclient.hpp"
#include "forge/patterns.hpp"
#include "forge/util.hpp"

namespace forge::pipeline {

struct Paths {
  std::filesystem::path corpus_root;
  std::filesystem::path labels;         // optional: {contract name: {vuln type: 0|1}}
  std::filesystem::path general_text;   // one general-domain document per line
  std::filesystem::path work_dir;
  std::filesystem::path review_export;  // optional: review export JSONL with override rows
};

struct PipelineConfig {
  Paths paths;
  dedup::SimilarityConfig similarity;
  std::vector<llm::EndpointConfig> generators;
  std::optional<llm::EndpointConfig> judge;
  std::vector<llm::EndpointConfig> eval_systems;
  bool rule_baseline = true;
  std::vector<VulnType> vuln_types{kAllVulnTypes.begin(), kAllVulnTypes.end()};
  double general_fraction = 0;  // defaults to the published mix
  std::uint64_t cpt_seed = 0;
  int ngram_order = 2;
  double ngram_k = 0.01;
  judge::SelectionWeights weights;
  json manifest_overrides = {{"cpt", json::object()}, {"sft", json::object()}};
  std::set<std::string> disabled_stages;
};

// Relative paths resolve against base_dir. Errors: ConfigInvalid(field).
PipelineConfig config_from_json(const json& j, const std::filesystem::path& base_dir);
// Errors: ConfigInvalid (unreadable, unparsable or invalid).
PipelineConfig load_config(const std::filesystem::path& path);

// Pipeline stages in run order.
const std::vector<std::string>& stage_names();

enum class Outcome { ran, up_to_date, would_run, skipped };
std::string_view to_string(Outcome o);

struct StageResult {
  std::string stage;
  Outcome outcome = Outcome::ran;
  std::vector<std::string> outputs;  // relative to work_dir
};

using TransportFactory = std::function<std::shared_ptr<llm::Transport>(const std::string& base_url)>;

// Each stage reads declared inputs and writes declared outputs under
// work_dir. A stage whose input hashes, config slice and outputs match its
// stamp in work_dir/.stamps is reported up-to-date and not run. Stamps record
// seeds and hashes; wall-clock times go to a .times.json sidecar.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::ostream& log, TransportFactory transports = {});

  // Errors: UnknownStage, MissingInput(stage: path), and the stage's own errors.
  StageResult run_stage(const std::string& name, bool dry_run = false);
  std::vector<StageResult> run_all(bool dry_run = false);

  const PipelineConfig& config() const { return config_; }

 private:
  struct Input {
    std::filesystem::path path;
    bool optional = false;
  };
  struct Stage {
    std::string name;
    std::vector<Input> inputs;
    std::vector<std::string> outputs;
    json config;
    std::function<void()> body;
  };

  Stage stage(const std::string& name);
  std::filesystem::path work(const std::string& name) const;
  std::shared_ptr<llm::ChatClient> client(const llm::EndpointConfig& cfg) const;
  json seeds() const;

  void ingest();
  void dedup();
  void extract();
  void annotate();
  void judge();
  void select();
  void build_sft();
  void build_cpt();
  void ngram();
  void manifest();
  void evaluate();

  PipelineConfig config_;
  std::ostream& log_;
  TransportFactory transports_;
  std::set<std::string> planned_;  // stages a dry run would execute
};

// Token sequences for n-gram work: lexer lexemes of every .sol file under a
// directory, or whitespace words of each non-empty line of a text file.
std::vector<std::vector<std::string>> contract_sequences(const std::filesystem::path& dir);
std::vector<std::vector<std::string>> text_sequences(const std::filesystem::path& file);

}  // namespace forge::pipeline
