#include "forge/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "forge/annotate.hpp"
#include "forge/corpus.hpp"
#include "forge/error.hpp"
#include "forge/evalharness.hpp"
#include "forge/review.hpp"
#include "forge/stubs.hpp"
#include "forge/training.hpp"

namespace forge::pipeline {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTopLevelKeys = {"paths",  "similarity", "generators", "judge",    "eval",
                                             "vuln_types", "seeds", "cpt",        "ngram",    "selection",
                                             "manifest", "stages"};

dedup::SimilarityConfig similarity_from_json(const json& j) {
  dedup::SimilarityConfig c;
  c.threshold = j.value("threshold", c.threshold);
  c.mode = dedup::mode_from_string(j.value("mode", std::string("exact")));
  c.minhash_hashes = j.value("minhash_hashes", c.minhash_hashes);
  c.seed = j.value("seed", c.seed);
  c.prefilter_margin = j.value("prefilter_margin", c.prefilter_margin);
  c.validate();
  return c;
}

json similarity_to_json(const dedup::SimilarityConfig& c) {
  return {{"threshold", c.threshold},
          {"mode", c.mode == dedup::Mode::exact ? "exact" : "minhash_prefilter"},
          {"minhash_hashes", c.minhash_hashes},
          {"seed", c.seed},
          {"prefilter_margin", c.prefilter_margin}};
}

// Runs fn, rethrowing any failure as ConfigInvalid(field).
template <typename F>
auto field(const std::string& name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == "ConfigInvalid") throw;
    throw Error("ConfigInvalid", name + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error("ConfigInvalid", name + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string hash_path(const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) acc += fs::relative(f, p).generic_string() + "\t" + sha256_hex(read_file(f)) + "\n";
    return sha256_hex(acc);
  }
  if (fs::exists(p)) return sha256_hex(read_file(p));
  return "absent";
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) { write_file_atomic(path, to_jsonl(rows)); }

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

std::map<std::string, corpus::ContractUnit> units_by_id(const std::vector<corpus::ContractUnit>& units) {
  std::map<std::string, corpus::ContractUnit> out;
  for (const auto& u : units) out.emplace(u.unit_id, u);
  return out;
}

struct Target {
  std::string unit_id;
  VulnType vuln_type;
  int label;
  bool from_labels;
};

std::vector<Target> load_targets(const fs::path& path) {
  std::vector<Target> out;
  for (const auto& row : read_jsonl(path)) {
    out.push_back({row.at("unit_id").get<std::string>(), vuln_type_from_string(row.at("vuln_type").get<std::string>()),
                   row.at("label").get<int>(), row.at("label_source").get<std::string>() == "labels"});
  }
  return out;
}

}  // namespace

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error("ConfigInvalid", "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kTopLevelKeys.count(key)) throw Error("ConfigInvalid", "unknown key " + key);
  }
  PipelineConfig c;
  c.general_fraction = training::default_general_fraction();
  const json paths = j.value("paths", json::object());
  field("paths", [&] {
    c.paths.corpus_root = resolve(base_dir, paths.value("corpus_root", ""));
    c.paths.labels = resolve(base_dir, paths.value("labels", ""));
    c.paths.general_text = resolve(base_dir, paths.value("general_text", ""));
    c.paths.work_dir = resolve(base_dir, paths.value("work_dir", "work"));
    c.paths.review_export = resolve(base_dir, paths.value("review_export", ""));
    return 0;
  });
  if (j.contains("similarity")) c.similarity = field("similarity", [&] { return similarity_from_json(j["similarity"]); });
  if (j.contains("generators")) {
    field("generators", [&] {
      for (const auto& g : j["generators"]) {
        c.generators.push_back(llm::endpoint_from_json(g));
        c.generators.back().validate();
      }
      return 0;
    });
  }
  if (j.contains("judge")) {
    c.judge = field("judge", [&] {
      auto e = llm::endpoint_from_json(j["judge"]);
      e.validate();
      return e;
    });
  }
  if (j.contains("eval")) {
    field("eval", [&] {
      for (const auto& s : j["eval"].value("systems", json::array())) {
        c.eval_systems.push_back(llm::endpoint_from_json(s));
        c.eval_systems.back().validate();
      }
      c.rule_baseline = j["eval"].value("rule_baseline", true);
      return 0;
    });
  }
  if (j.contains("vuln_types")) {
    c.vuln_types = field("vuln_types", [&] {
      std::vector<VulnType> out;
      for (const auto& t : j["vuln_types"]) out.push_back(vuln_type_from_string(t.get<std::string>()));
      if (out.empty()) throw Error("ConfigInvalid", "vuln_types: empty");
      return out;
    });
  }
  if (j.contains("seeds")) {
    field("seeds", [&] {
      c.cpt_seed = j["seeds"].value("cpt", c.cpt_seed);
      if (j["seeds"].contains("dedup")) c.similarity.seed = j["seeds"]["dedup"].get<std::uint64_t>();
      return 0;
    });
  }
  if (j.contains("cpt")) {
    c.general_fraction = field("cpt.general_fraction", [&] {
      double f = j["cpt"].value("general_fraction", c.general_fraction);
      if (!(f >= 0.0 && f < 1.0)) throw Error("ConfigInvalid", "cpt.general_fraction outside [0,1)");
      return f;
    });
  }
  if (j.contains("ngram")) {
    field("ngram", [&] {
      c.ngram_order = j["ngram"].value("order", c.ngram_order);
      c.ngram_k = j["ngram"].value("k", c.ngram_k);
      if (c.ngram_order < 1 || c.ngram_k < 0) throw Error("ConfigInvalid", "ngram: order >= 1 and k >= 0");
      return 0;
    });
  }
  if (j.contains("selection")) {
    field("selection.weights", [&] {
      const auto w = j["selection"].value("weights", json::object());
      c.weights.correctness = w.value("correctness", 1);
      c.weights.completeness = w.value("completeness", 1);
      c.weights.conciseness = w.value("conciseness", 1);
      return 0;
    });
  }
  if (j.contains("manifest")) {
    field("manifest", [&] {
      for (const auto& [stage, overrides] : j["manifest"].items()) {
        training::emit_train_manifest(training::stage_from_string(stage), overrides);
        c.manifest_overrides[stage] = overrides;
      }
      return 0;
    });
  }
  if (j.contains("stages")) {
    field("stages", [&] {
      for (const auto& [stage, enabled] : j["stages"].items()) {
        if (std::find(stage_names().begin(), stage_names().end(), stage) == stage_names().end()) {
          throw Error("ConfigInvalid", "stages: unknown stage " + stage);
        }
        if (!enabled.get<bool>()) c.disabled_stages.insert(stage);
      }
      return 0;
    });
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error("ConfigInvalid", "config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error("ConfigInvalid", path.string() + ": " + e.what());
  }
  return config_from_json(j, fs::absolute(path).parent_path());
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"ingest", "dedup",     "extract",   "annotate", "judge",   "select",
                                                 "build-sft", "build-cpt", "ngram", "manifest", "eval"};
  return names;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::ran: return "ran";
    case Outcome::up_to_date: return "up-to-date";
    case Outcome::would_run: return "would run";
    case Outcome::skipped: return "skipped";
  }
  return "?";
}

Pipeline::Pipeline(PipelineConfig config, std::ostream& log, TransportFactory transports)
    : config_(std::move(config)), log_(log), transports_(std::move(transports)) {
  if (!transports_) transports_ = stubs::make_transport;
}

fs::path Pipeline::work(const std::string& name) const { return config_.paths.work_dir / name; }

std::shared_ptr<llm::ChatClient> Pipeline::client(const llm::EndpointConfig& cfg) const {
  return std::make_shared<llm::ChatClient>(cfg, transports_(cfg.base_url));
}

json Pipeline::seeds() const { return {{"dedup", config_.similarity.seed}, {"cpt", config_.cpt_seed}}; }

Pipeline::Stage Pipeline::stage(const std::string& name) {
  const auto& p = config_.paths;
  auto endpoints = [](const std::vector<llm::EndpointConfig>& v) {
    json out = json::array();
    for (const auto& e : v) out.push_back(llm::endpoint_to_json(e));
    return out;
  };
  json types = json::array();
  for (auto t : config_.vuln_types) types.push_back(std::string(short_code(t)));

  if (name == "ingest") return {name, {{p.corpus_root}}, {"units.jsonl", "ingest_report.json"}, json::object(), [this] { ingest(); }};
  if (name == "dedup") {
    return {name, {{work("units.jsonl")}}, {"kept_units.jsonl", "dedup_report.json"},
            similarity_to_json(config_.similarity), [this] { dedup(); }};
  }
  if (name == "extract") {
    return {name, {{work("kept_units.jsonl")}, {p.labels, true}}, {"hits.jsonl", "targets.jsonl"},
            {{"vuln_types", types}}, [this] { extract(); }};
  }
  if (name == "annotate") {
    return {name, {{work("kept_units.jsonl")}, {work("targets.jsonl")}},
            {"candidates.jsonl", "annotate_failures.jsonl"}, {{"generators", endpoints(config_.generators)}},
            [this] { annotate(); }};
  }
  if (name == "judge") {
    json cfg = config_.judge ? llm::endpoint_to_json(*config_.judge) : json(nullptr);
    return {name, {{work("candidates.jsonl")}, {work("kept_units.jsonl")}, {work("targets.jsonl")}},
            {"scores.jsonl"}, {{"judge", cfg}}, [this] { judge(); }};
  }
  if (name == "select") {
    json w{{"correctness", config_.weights.correctness},
           {"completeness", config_.weights.completeness},
           {"conciseness", config_.weights.conciseness}};
    return {name, {{work("scores.jsonl")}}, {"selection.jsonl"}, {{"weights", w}}, [this] { select(); }};
  }
  if (name == "build-sft") {
    return {name,
            {{work("selection.jsonl")}, {work("candidates.jsonl")}, {work("kept_units.jsonl")},
             {work("targets.jsonl")}, {p.review_export, true}},
            {"sft.jsonl", "sft_counts.json"},
            json::object(),
            [this] { build_sft(); }};
  }
  if (name == "build-cpt") {
    return {name, {{work("kept_units.jsonl")}, {p.general_text}}, {"cpt.jsonl", "cpt_stats.json"},
            {{"general_fraction", config_.general_fraction}, {"seed", config_.cpt_seed}}, [this] { build_cpt(); }};
  }
  if (name == "ngram") {
    return {name, {{work("cpt.jsonl")}}, {"ngram_model.json", "ngram_loss.json"},
            {{"order", config_.ngram_order}, {"k", config_.ngram_k}}, [this] { ngram(); }};
  }
  if (name == "manifest") {
    return {name, {}, {"manifest_cpt.json", "manifest_sft.json"}, config_.manifest_overrides, [this] { manifest(); }};
  }
  if (name == "eval") {
    return {name, {{work("kept_units.jsonl")}, {work("targets.jsonl")}},
            {"predictions.jsonl", "metrics.json", "metrics.txt"},
            {{"systems", endpoints(config_.eval_systems)}, {"rule_baseline", config_.rule_baseline}},
            [this] { evaluate(); }};
  }
  throw Error("UnknownStage", name);
}

StageResult Pipeline::run_stage(const std::string& name, bool dry_run) {
  Stage st = stage(name);
  StageResult result{name, Outcome::ran, st.outputs};
  if (config_.disabled_stages.count(name)) {
    log_ << "[" << name << "] skipped (disabled)\n";
    result.outcome = Outcome::skipped;
    return result;
  }

  std::map<std::string, std::string> producers;
  for (const auto& other : stage_names()) {
    if (other == name) break;
    for (const auto& out : stage(other).outputs) producers[out] = other;
  }

  bool upstream_planned = false;
  json inputs = json::object();
  for (const auto& in : st.inputs) {
    if (in.path.empty()) {
      if (in.optional) continue;
      throw Error("MissingInput", name + ": required path not configured");
    }
    const bool in_work = in.path.parent_path() == config_.paths.work_dir;
    const std::string key = in_work ? in.path.filename().string() : in.path.string();
    if (dry_run && in_work && producers.count(key) && planned_.count(producers[key])) {
      upstream_planned = true;
      continue;
    }
    if (!fs::exists(in.path)) {
      if (in.optional) {
        inputs[key] = "absent";
        continue;
      }
      throw Error("MissingInput", name + ": " + in.path.string());
    }
    inputs[key] = hash_path(in.path);
  }

  const json key{{"stage", name}, {"config", st.config}, {"inputs", inputs}};
  const std::string stamp_key = sha256_hex(key.dump());
  const fs::path stamp_path = work(".stamps/" + name + ".json");
  bool fresh = !upstream_planned && fs::exists(stamp_path);
  if (fresh) {
    try {
      auto stamp = json::parse(read_file(stamp_path));
      fresh = stamp.at("key").get<std::string>() == stamp_key;
      for (const auto& out : st.outputs) {
        if (!fresh) break;
        fresh = fs::exists(work(out)) && stamp.at("outputs").value(out, "") == sha256_hex(read_file(work(out)));
      }
    } catch (const std::exception&) {
      fresh = false;
    }
  }
  if (fresh) {
    log_ << "[" << name << "] up-to-date\n";
    result.outcome = Outcome::up_to_date;
    return result;
  }
  if (dry_run) {
    std::string outs;
    for (const auto& o : st.outputs) outs += (outs.empty() ? "" : ", ") + o;
    log_ << "[" << name << "] would run -> " << outs << "\n";
    planned_.insert(name);
    result.outcome = Outcome::would_run;
    return result;
  }

  fs::create_directories(work(".stamps"));
  const auto started = review::utc_now();
  st.body();
  json outputs = json::object();
  for (const auto& out : st.outputs) outputs[out] = sha256_hex(read_file(work(out)));
  json stamp{{"stage", name},     {"key", stamp_key}, {"config", st.config},
             {"inputs", inputs},  {"outputs", outputs}, {"seeds", seeds()}};
  write_json(stamp_path, stamp);
  write_json(work(".stamps/" + name + ".times.json"), {{"started_at", started}, {"finished_at", review::utc_now()}});
  log_ << "[" << name << "] ran\n";
  return result;
}

std::vector<StageResult> Pipeline::run_all(bool dry_run) {
  planned_.clear();
  std::vector<StageResult> out;
  for (const auto& name : stage_names()) out.push_back(run_stage(name, dry_run));
  return out;
}

void Pipeline::ingest() {
  const auto& root = config_.paths.corpus_root;
  auto ingested = corpus::ingest_directory(root);
  std::vector<corpus::ContractUnit> units;
  json report = json::array();
  auto rel = [&](const std::string& p) { return fs::relative(p, root).generic_string(); };
  for (const auto& e : ingested.errors) report.push_back({{"path", rel(e.path)}, {"kind", e.kind}, {"detail", e.detail}});
  for (const auto& file : ingested.files) {
    corpus::DecomposeResult d;
    try {
      d = corpus::decompose_units(file);
    } catch (const Error& e) {
      report.push_back({{"path", rel(file.path)}, {"kind", e.kind()}, {"detail", e.what()}});
      continue;
    }
    for (const auto& e : d.report) report.push_back({{"path", rel(e.path)}, {"kind", e.kind}, {"detail", e.detail}});
    for (const auto& u : d.units) units.push_back(corpus::make_unit(rel(u.origin_path), u.filename, u.kind, u.source));
  }
  corpus::save_units(work("units.jsonl"), units);
  write_json(work("ingest_report.json"),
             {{"files", ingested.files.size()}, {"units", units.size()}, {"issues", report}});
  log_ << "  " << ingested.files.size() << " files, " << units.size() << " units\n";
}

void Pipeline::dedup() {
  auto units = corpus::load_units(work("units.jsonl"));
  auto result = dedup::dedup_all(units, config_.similarity);
  corpus::save_units(work("kept_units.jsonl"), result.kept_units);
  write_json(work("dedup_report.json"), dedup::result_report_json(result, config_.similarity));
  log_ << "  kept " << result.kept_units.size() << " of " << units.size() << " units\n";
}

void Pipeline::extract() {
  auto units = corpus::load_units(work("kept_units.jsonl"));
  json labels = json::object();
  if (!config_.paths.labels.empty() && fs::exists(config_.paths.labels)) labels = json::parse(read_file(config_.paths.labels));
  std::vector<json> hits, targets;
  std::size_t labelled = 0;
  for (const auto& u : units) {
    for (auto t : config_.vuln_types) {
      for (const auto& h : patterns::extract_candidates(u, t)) hits.push_back(patterns::hit_to_json(h));
      const std::string type(to_string(t));
      int label = 0;
      std::string source = "rule";
      if (labels.contains(u.name) && labels[u.name].contains(type)) {
        label = labels[u.name][type].get<int>();
        source = "labels";
        ++labelled;
      } else {
        label = patterns::rule_label(u, t);
      }
      targets.push_back({{"unit_id", u.unit_id}, {"name", u.name}, {"vuln_type", type}, {"label", label},
                         {"label_source", source}});
    }
  }
  write_jsonl(work("hits.jsonl"), hits);
  write_jsonl(work("targets.jsonl"), targets);
  log_ << "  " << hits.size() << " pattern hits, " << targets.size() << " targets (" << labelled << " labelled)\n";
}

void Pipeline::annotate() {
  if (config_.generators.empty()) throw Error("ConfigInvalid", "generators: at least one endpoint is required");
  auto units = units_by_id(corpus::load_units(work("kept_units.jsonl")));
  std::vector<annotate::Generator> gens;
  for (const auto& g : config_.generators) gens.push_back({g.model_name, client(g)});
  std::vector<json> candidates, failures;
  for (const auto& t : load_targets(work("targets.jsonl"))) {
    const auto& unit = units.at(t.unit_id);
    std::vector<annotate::GenerationFailure> fails;
    try {
      for (const auto& c : annotate::generate_candidates(unit, t.vuln_type, gens, t.label, &fails)) {
        candidates.push_back(annotate::candidate_to_json(c));
      }
    } catch (const Error& e) {
      if (e.kind() != "AllGeneratorsFailed") throw;
    }
    for (const auto& f : fails) {
      failures.push_back({{"unit_id", f.unit_id}, {"vuln_type", std::string(to_string(t.vuln_type))},
                          {"generator_id", f.generator_id}, {"reason", f.reason}});
    }
  }
  write_jsonl(work("candidates.jsonl"), candidates);
  write_jsonl(work("annotate_failures.jsonl"), failures);
  log_ << "  " << candidates.size() << " candidates, " << failures.size() << " failures\n";
}

void Pipeline::judge() {
  if (!config_.judge) throw Error("ConfigInvalid", "judge: endpoint is required");
  auto units = units_by_id(corpus::load_units(work("kept_units.jsonl")));
  std::map<training::LabelKey, int> truth;
  for (const auto& t : load_targets(work("targets.jsonl"))) truth[{t.unit_id, t.vuln_type}] = t.label;
  std::vector<judge::JudgeItem> items;
  for (const auto& row : read_jsonl(work("candidates.jsonl"))) {
    auto c = annotate::candidate_from_json(row);
    auto it = units.find(c.unit_id);
    if (it == units.end()) throw Error("MissingInput", "judge: unit " + c.unit_id);
    auto gt = truth.find({c.unit_id, c.vuln_type});
    items.push_back({c, &it->second, gt == truth.end() ? std::nullopt : std::optional<int>(gt->second)});
  }
  auto judge_client = client(*config_.judge);
  auto scores = judge::score_batch(*judge_client, items, judge::Scale::curation_1_to_10);
  std::vector<json> rows;
  for (std::size_t i = 0; i < items.size(); ++i) {
    rows.push_back(judge::scored_to_json(
        {scores[i], items[i].candidate.unit_id, items[i].candidate.vuln_type, items[i].candidate.generator_id}));
  }
  write_jsonl(work("scores.jsonl"), rows);
  log_ << "  " << rows.size() << " scores\n";
}

void Pipeline::select() {
  std::vector<judge::ScoredCandidate> scored;
  for (const auto& row : read_jsonl(work("scores.jsonl"))) scored.push_back(judge::scored_from_json(row));
  std::vector<json> rows;
  for (const auto& s : judge::select_all(scored, config_.weights)) rows.push_back(judge::selection_to_json(s));
  write_jsonl(work("selection.jsonl"), rows);
  log_ << "  " << rows.size() << " selections\n";
}

void Pipeline::build_sft() {
  std::vector<judge::SelectionRecord> selections;
  for (const auto& row : read_jsonl(work("selection.jsonl"))) selections.push_back(judge::selection_from_json(row));
  training::SftInputs in;
  for (const auto& row : read_jsonl(work("candidates.jsonl"))) {
    auto c = annotate::candidate_from_json(row);
    in.candidates.emplace(c.candidate_id, c);
  }
  in.units = units_by_id(corpus::load_units(work("kept_units.jsonl")));
  for (const auto& t : load_targets(work("targets.jsonl"))) in.ground_truth[{t.unit_id, t.vuln_type}] = t.label;
  const auto& exported = config_.paths.review_export;
  if (!exported.empty() && fs::exists(exported)) {
    for (const auto& row : read_jsonl(exported)) {
      if (row.value("type", "") != "override") continue;
      training::VerifiedOverride o;
      o.candidate_id = row.at("candidate_id").get<std::string>();
      o.explanation = row.at("explanation").get<std::string>();
      for (const auto& loc : row.value("locations", json::array())) o.locations.emplace_back(loc.at(0), loc.at(1));
      in.overrides.emplace(o.candidate_id, o);
    }
  }
  auto result = training::assemble_sft(selections, in);
  std::vector<json> rows;
  for (const auto& e : result.examples) rows.push_back(training::sft_to_json(e));
  write_jsonl(work("sft.jsonl"), rows);
  write_json(work("sft_counts.json"), training::sft_counts_report(result));
  log_ << "  " << rows.size() << " SFT examples, " << in.overrides.size() << " expert overrides\n";
}

void Pipeline::build_cpt() {
  auto units = corpus::load_units(work("kept_units.jsonl"));
  std::vector<training::CptRecord> general;
  std::size_t i = 0;
  for (const auto& line : split_lines(read_file(config_.paths.general_text))) {
    if (trim(line).empty()) continue;
    general.push_back(training::general_record("general-" + std::to_string(i++), line));
  }
  auto mix = training::assemble_cpt(units, general, config_.general_fraction, config_.cpt_seed);
  std::vector<json> rows;
  for (const auto& r : mix.records) rows.push_back(training::cpt_record_to_json(r));
  write_jsonl(work("cpt.jsonl"), rows);
  write_json(work("cpt_stats.json"), training::cpt_stats_to_json(mix.stats));
  log_ << "  " << mix.stats.contract_instances << " contract + " << mix.stats.general_instances
       << " general records\n";
}

void Pipeline::ngram() {
  std::vector<std::vector<std::string>> contracts, general, all;
  for (const auto& row : read_jsonl(work("cpt.jsonl"))) {
    auto r = training::cpt_record_from_json(row);
    if (r.origin == training::Origin::smart_contract) contracts.push_back(training::contract_tokens(r.text));
    else general.push_back(training::word_split(r.text));
    all.push_back(r.origin == training::Origin::smart_contract ? contracts.back() : general.back());
  }
  auto model = training::train_ngram(all, config_.ngram_order, config_.ngram_k);
  write_file_atomic(work("ngram_model.json"), training::ngram_to_json(model).dump() + "\n");
  json report{{"order", config_.ngram_order}, {"k", config_.ngram_k}, {"vocab_size", model.vocab.size()}};
  for (const auto& [label, corpus] : {std::pair{"contract", &contracts}, std::pair{"general", &general}}) {
    if (corpus->empty()) continue;
    auto loss = training::corpus_loss(model, *corpus);
    report[label] = {{"total", loss.total}, {"positions", loss.positions}, {"average", loss.average()}};
  }
  write_json(work("ngram_loss.json"), report);
  log_ << "  vocabulary " << model.vocab.size() << "\n";
}

void Pipeline::manifest() {
  for (auto s : {training::Stage::cpt, training::Stage::sft}) {
    const std::string name(training::to_string(s));
    auto m = training::emit_train_manifest(s, config_.manifest_overrides.value(name, json::object()));
    write_json(work("manifest_" + name + ".json"), training::manifest_to_json(m));
  }
}

void Pipeline::evaluate() {
  auto units = units_by_id(corpus::load_units(work("kept_units.jsonl")));
  std::vector<Target> gold;
  for (const auto& t : load_targets(work("targets.jsonl"))) {
    if (t.from_labels) gold.push_back(t);
  }
  if (gold.empty()) throw Error("MissingInput", "eval: no labelled targets (paths.labels)");
  if (config_.eval_systems.empty() && !config_.rule_baseline) throw Error("ConfigInvalid", "eval: no systems");

  std::vector<eval::EvalRecord> records;
  if (config_.rule_baseline) {
    for (const auto& t : gold) {
      records.push_back({t.unit_id, t.vuln_type, t.label, patterns::rule_label(units.at(t.unit_id), t.vuln_type),
                         "", "keyword-rule"});
    }
  }
  for (const auto& sys : config_.eval_systems) {
    auto c = client(sys);
    for (const auto& t : gold) {
      const auto& unit = units.at(t.unit_id);
      auto exchange = c->complete(annotate::build_prompt(annotate::template_for(t.vuln_type), unit, std::nullopt));
      eval::EvalRecord r{t.unit_id, t.vuln_type, t.label, 0, exchange.response_text, sys.model_name};
      try {
        r.predicted = eval::parse_prediction(exchange.response_text);
      } catch (const Error& e) {
        if (e.kind() != "NoLabelFound") throw;
        r.predicted = 0;  // unparseable answers count as SAFE
      }
      records.push_back(std::move(r));
    }
  }
  std::vector<json> rows;
  for (const auto& r : records) rows.push_back(eval::record_to_json(r));
  write_jsonl(work("predictions.jsonl"), rows);
  auto table = eval::metrics_table(records);
  write_json(work("metrics.json"), table.data);
  write_file_atomic(work("metrics.txt"), table.text);
  log_ << table.text;
}

std::vector<std::vector<std::string>> contract_sequences(const fs::path& dir) {
  std::vector<std::vector<std::string>> out;
  for (const auto& f : corpus::ingest_directory(dir).files) out.push_back(training::contract_tokens(f.content));
  return out;
}

std::vector<std::vector<std::string>> text_sequences(const fs::path& file) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : split_lines(read_file(file))) {
    auto words = training::word_split(line);
    if (!words.empty()) out.push_back(std::move(words));
  }
  return out;
}

}  // namespace forge::pipeline
