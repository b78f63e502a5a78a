#include "forge/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "forge/error.hpp"

namespace forge::training {

std::string_view to_string(Origin o) { return o == Origin::smart_contract ? "smart_contract" : "general"; }

Origin origin_from_string(std::string_view s) {
  if (s == "smart_contract") return Origin::smart_contract;
  if (s == "general") return Origin::general;
  throw Error("BadRecord", "origin " + std::string(s));
}

std::vector<std::string> word_split(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

CptRecord contract_record(const corpus::ContractUnit& unit) {
  return {unit.unit_id, unit.source, Origin::smart_contract, unit.tokens.size()};
}

CptRecord general_record(const std::string& record_id, const std::string& text) {
  return {record_id, text, Origin::general, word_split(text).size()};
}

double default_general_fraction() { return 100000.0 / 286397.0; }

std::uint64_t general_needed(std::uint64_t contracts, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw Error("ConfigInvalid", "general fraction must be in [0,1)");
  return static_cast<std::uint64_t>(std::llround(fraction * static_cast<double>(contracts) / (1.0 - fraction)));
}

CptMix assemble_cpt(const std::vector<CptRecord>& contracts, const std::vector<CptRecord>& general,
                    double target_general_fraction, std::uint64_t seed) {
  const std::uint64_t needed = general_needed(contracts.size(), target_general_fraction);
  if (needed > general.size()) {
    throw Error("InsufficientGeneralData",
                "needed " + std::to_string(needed) + ", available " + std::to_string(general.size()));
  }
  auto pool = general;
  seeded_shuffle(pool, mix64(seed ^ 0x67656e6572616cULL));
  pool.resize(needed);

  CptMix mix;
  mix.records = contracts;
  mix.records.insert(mix.records.end(), pool.begin(), pool.end());
  seeded_shuffle(mix.records, seed);

  auto& st = mix.stats;
  st.seed = seed;
  st.target_fraction = target_general_fraction;
  for (const auto& r : mix.records) {
    if (r.origin == Origin::smart_contract) {
      ++st.contract_instances;
      st.contract_tokens += r.token_count;
    } else {
      ++st.general_instances;
      st.general_tokens += r.token_count;
    }
  }
  const auto total = st.contract_instances + st.general_instances;
  st.general_fraction = total ? static_cast<double>(st.general_instances) / static_cast<double>(total) : 0.0;
  return mix;
}

CptMix assemble_cpt(const std::vector<corpus::ContractUnit>& contracts, const std::vector<CptRecord>& general,
                    double target_general_fraction, std::uint64_t seed) {
  std::vector<CptRecord> records;
  records.reserve(contracts.size());
  for (const auto& u : contracts) records.push_back(contract_record(u));
  return assemble_cpt(records, general, target_general_fraction, seed);
}

json cpt_record_to_json(const CptRecord& r) {
  return json{{"record_id", r.record_id},
              {"text", r.text},
              {"origin", std::string(to_string(r.origin))},
              {"token_count", r.token_count}};
}

CptRecord cpt_record_from_json(const json& j) {
  return {j.at("record_id").get<std::string>(), j.at("text").get<std::string>(),
          origin_from_string(j.at("origin").get<std::string>()), j.at("token_count").get<std::uint64_t>()};
}

json cpt_stats_to_json(const CptStats& s) {
  return json{{"contract_instances", s.contract_instances}, {"general_instances", s.general_instances},
              {"contract_tokens", s.contract_tokens},       {"general_tokens", s.general_tokens},
              {"target_fraction", s.target_fraction},       {"general_fraction", s.general_fraction},
              {"seed", s.seed}};
}

// ---- SFT ----

std::string_view to_string(Provenance p) { return p == Provenance::llm_selected ? "llm_selected" : "human_verified"; }

namespace {

Provenance provenance_from_string(std::string_view s) {
  if (s == "llm_selected") return Provenance::llm_selected;
  if (s == "human_verified") return Provenance::human_verified;
  throw Error("BadRecord", "provenance " + std::string(s));
}

std::vector<std::pair<int, int>> ranges_of(const std::vector<annotate::Location>& locs) {
  std::vector<std::pair<int, int>> out;
  for (const auto& l : locs) out.emplace_back(l.line_start, l.line_end);
  return out;
}

}  // namespace

SftResult assemble_sft(const std::vector<judge::SelectionRecord>& selections, const SftInputs& inputs) {
  auto ordered = selections;
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    return std::tie(a.vuln_type, a.unit_id) < std::tie(b.vuln_type, b.unit_id);
  });

  SftResult out;
  for (auto t : kAllVulnTypes) {
    out.counts[t] = 0;
    out.vulnerable_counts[t] = 0;
  }
  for (const auto& sel : ordered) {
    auto cit = inputs.candidates.find(sel.winner);
    if (cit == inputs.candidates.end()) throw Error("DanglingSelection", sel.winner);
    const auto& cand = cit->second;
    auto uit = inputs.units.find(cand.unit_id);
    if (uit == inputs.units.end()) throw Error("MissingInput", "unit " + cand.unit_id);

    SftExample ex;
    ex.example_id = sha256_hex("sft|" + cand.unit_id + "|" + std::string(to_string(cand.vuln_type))).substr(0, 24);
    ex.vuln_type = cand.vuln_type;
    ex.code = uit->second.source;
    ex.label = cand.label;
    if (auto g = inputs.ground_truth.find({cand.unit_id, cand.vuln_type}); g != inputs.ground_truth.end()) {
      if (g->second != cand.label) out.label_conflicts.push_back(ex.example_id);
      ex.label = g->second;
    }
    if (auto o = inputs.overrides.find(cand.candidate_id); o != inputs.overrides.end()) {
      if (trim(o->second.explanation).empty()) throw Error("EmptyExplanation", cand.candidate_id);
      ex.explanation = o->second.explanation;
      ex.locations = o->second.locations.empty() ? ranges_of(cand.locations) : o->second.locations;
      ex.provenance = Provenance::human_verified;
    } else {
      ex.explanation = cand.explanation;
      ex.locations = ranges_of(cand.locations);
      ex.provenance = Provenance::llm_selected;
    }
    ++out.counts[ex.vuln_type];
    if (ex.label == 1) ++out.vulnerable_counts[ex.vuln_type];
    out.examples.push_back(std::move(ex));
  }
  return out;
}

const std::map<VulnType, std::uint64_t>& paper_sft_counts() {
  static const std::map<VulnType, std::uint64_t> counts = {{VulnType::reentrancy, 3382},
                                                           {VulnType::timestamp_dependency, 1165},
                                                           {VulnType::integer_overflow_underflow, 1005},
                                                           {VulnType::delegatecall, 697}};
  return counts;
}

json sft_counts_report(const SftResult& r) {
  json counts = json::object(), vulnerable = json::object(), paper = json::object();
  for (auto t : kAllVulnTypes) {
    std::string code(short_code(t));
    counts[code] = r.counts.count(t) ? r.counts.at(t) : 0;
    vulnerable[code] = r.vulnerable_counts.count(t) ? r.vulnerable_counts.at(t) : 0;
    paper[code] = paper_sft_counts().at(t);
  }
  return json{{"counts", counts},
              {"vulnerable_counts", vulnerable},
              {"paper_reference_counts", paper},
              {"total", r.examples.size()},
              {"label_conflicts", r.label_conflicts}};
}

json sft_to_json(const SftExample& e) {
  json locs = json::array();
  for (const auto& [a, b] : e.locations) locs.push_back({{"line_start", a}, {"line_end", b}});
  return json{{"example_id", e.example_id},
              {"vuln_type", std::string(to_string(e.vuln_type))},
              {"code", e.code},
              {"label", e.label},
              {"explanation", e.explanation},
              {"locations", locs},
              {"provenance", std::string(to_string(e.provenance))}};
}

SftExample sft_from_json(const json& j) {
  SftExample e;
  e.example_id = j.at("example_id").get<std::string>();
  e.vuln_type = vuln_type_from_string(j.at("vuln_type").get<std::string>());
  e.code = j.at("code").get<std::string>();
  e.label = j.at("label").get<int>();
  e.explanation = j.at("explanation").get<std::string>();
  for (const auto& l : j.at("locations")) e.locations.emplace_back(l.at("line_start").get<int>(), l.at("line_end").get<int>());
  e.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  if (e.provenance == Provenance::human_verified && trim(e.explanation).empty()) {
    throw Error("EmptyExplanation", e.example_id);
  }
  return e;
}

// ---- losses ----

double loss_adapt(const ProbSequence& seq) {
  double total = 0.0;
  for (std::size_t i = 0; i < seq.probs.size(); ++i) {
    double p = seq.probs[i];
    if (std::isnan(p) || p > 1.0) throw Error("InvalidProbability", "index " + std::to_string(i));
    if (p <= 0.0) throw Error("NonPositiveProbability", "index " + std::to_string(i));
    total -= std::log(p);
  }
  return total;
}

double loss_sft(const ProbSequence& gen, const ProbSequence& det) { return (loss_adapt(gen) + loss_adapt(det)) / 2.0; }

// ---- n-gram ----

const std::string& NgramModel::map_token(const std::string& tok) const {
  return std::binary_search(vocab.begin(), vocab.end(), tok) ? tok : kUnk;
}

double NgramModel::prob(const Context& ctx, const std::string& token) const {
  const std::string& tok = map_token(token);
  if (auto o = overrides_.find(ctx); o != overrides_.end()) {
    auto it = o->second.find(tok);
    return it == o->second.end() ? 0.0 : it->second;
  }
  std::uint64_t c = 0, total = 0;
  if (auto t = context_totals.find(ctx); t != context_totals.end()) {
    total = t->second;
    const auto& succ = counts.at(ctx);
    if (auto s = succ.find(tok); s != succ.end()) c = s->second;
  }
  if (add_k == 0.0) return total == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(total);
  return (static_cast<double>(c) + add_k) / (static_cast<double>(total) + add_k * static_cast<double>(vocab.size()));
}

std::map<std::string, double> NgramModel::conditional(const Context& ctx) const {
  if (auto o = overrides_.find(ctx); o != overrides_.end()) return o->second;
  std::map<std::string, double> out;
  if (auto it = counts.find(ctx); it != counts.end()) {
    for (const auto& [tok, c] : it->second) out[tok] = prob(ctx, tok);
  }
  return out;
}

void NgramModel::set_conditional(const Context& ctx, std::map<std::string, double> dist) {
  overrides_[ctx] = std::move(dist);
}

NgramModel train_ngram(const std::vector<std::vector<std::string>>& corpus, int order, double add_k) {
  if (order < 1) throw Error("ConfigInvalid", "order must be >= 1");
  if (!(add_k >= 0.0)) throw Error("ConfigInvalid", "add_k must be >= 0");
  std::size_t n_tokens = 0;
  for (const auto& s : corpus) n_tokens += s.size();
  if (n_tokens == 0) throw Error("EmptyCorpus", "no tokens");

  NgramModel m;
  m.order = order;
  m.add_k = add_k;
  std::set<std::string> vocab{kUnk};
  const auto o = static_cast<std::size_t>(order);
  for (const auto& seq : corpus) {
    vocab.insert(seq.begin(), seq.end());
    for (std::size_t i = o - 1; i < seq.size(); ++i) {
      Context ctx(seq.begin() + static_cast<std::ptrdiff_t>(i + 1 - o), seq.begin() + static_cast<std::ptrdiff_t>(i));
      ++m.counts[ctx][seq[i]];
      ++m.context_totals[ctx];
    }
  }
  m.vocab.assign(vocab.begin(), vocab.end());
  return m;
}

std::size_t scored_positions(const NgramModel& m, const std::vector<std::string>& tokens) {
  const auto o = static_cast<std::size_t>(m.order);
  return tokens.size() >= o ? tokens.size() - o + 1 : 0;
}

double model_loss(const NgramModel& m, const std::vector<std::string>& tokens) {
  const auto o = static_cast<std::size_t>(m.order);
  if (tokens.size() < o) throw Error("SequenceTooShort", std::to_string(tokens.size()) + " tokens");
  std::vector<std::string> mapped;
  mapped.reserve(tokens.size());
  for (const auto& t : tokens) mapped.push_back(m.map_token(t));
  double total = 0.0;
  for (std::size_t i = o - 1; i < mapped.size(); ++i) {
    Context ctx(mapped.begin() + static_cast<std::ptrdiff_t>(i + 1 - o), mapped.begin() + static_cast<std::ptrdiff_t>(i));
    double p = m.prob(ctx, mapped[i]);
    if (p <= 0.0) throw Error("InfiniteLoss", "position " + std::to_string(i + 1));
    total -= std::log(p);
  }
  return total;
}

CorpusLoss corpus_loss(const NgramModel& m, const std::vector<std::vector<std::string>>& corpus) {
  CorpusLoss out;
  for (const auto& seq : corpus) {
    if (seq.size() < static_cast<std::size_t>(m.order)) continue;
    out.total += model_loss(m, seq);
    out.positions += scored_positions(m, seq);
  }
  return out;
}

std::vector<std::string> contract_tokens(const std::string& source) {
  std::vector<std::string> out;
  for (const auto& t : corpus::lex_solidity(source)) out.push_back(t.lexeme);
  return out;
}

namespace {

json table_to_json(const std::map<Context, std::map<std::string, std::uint64_t>>& t) {
  json rows = json::array();
  for (const auto& [ctx, succ] : t) rows.push_back({{"context", ctx}, {"successors", succ}});
  return rows;
}

}  // namespace

json ngram_to_json(const NgramModel& m) {
  json overrides = json::array();
  for (const auto& [ctx, dist] : m.overrides_) overrides.push_back({{"context", ctx}, {"distribution", dist}});
  return json{{"order", m.order},
              {"add_k", m.add_k},
              {"vocab", m.vocab},
              {"counts", table_to_json(m.counts)},
              {"overrides", overrides}};
}

NgramModel ngram_from_json(const json& j) {
  NgramModel m;
  m.order = j.at("order").get<int>();
  m.add_k = j.at("add_k").get<double>();
  m.vocab = j.at("vocab").get<std::vector<std::string>>();
  if (!std::is_sorted(m.vocab.begin(), m.vocab.end()) || !std::binary_search(m.vocab.begin(), m.vocab.end(), kUnk)) {
    throw Error("BadRecord", "model vocabulary must be sorted and contain " + kUnk);
  }
  for (const auto& row : j.at("counts")) {
    auto ctx = row.at("context").get<Context>();
    auto succ = row.at("successors").get<std::map<std::string, std::uint64_t>>();
    std::uint64_t total = 0;
    for (const auto& [tok, c] : succ) total += c;
    m.counts[ctx] = std::move(succ);
    m.context_totals[ctx] = total;
  }
  for (const auto& row : j.value("overrides", json::array())) {
    m.overrides_[row.at("context").get<Context>()] = row.at("distribution").get<std::map<std::string, double>>();
  }
  return m;
}

// ---- manifests ----

std::string_view to_string(Stage s) { return s == Stage::cpt ? "cpt" : "sft"; }

Stage stage_from_string(std::string_view s) {
  if (s == "cpt") return Stage::cpt;
  if (s == "sft") return Stage::sft;
  throw Error("ConfigInvalid", "stage " + std::string(s));
}

TrainManifest emit_train_manifest(Stage stage, const json& overrides) {
  TrainManifest m;
  m.stage = stage;
  m.learning_rate = 1e-5;
  m.schedule = "cosine";
  m.warmup_steps = 0;
  m.cutoff_len = 2048;
  m.optimizer = "adamw";
  m.adam_beta1 = 0.9;
  m.adam_beta2 = 0.99;
  m.adam_epsilon = 1e-8;
  m.theta_note = "Model parameters are trained by an external trainer; this manifest records hyperparameters only.";
  if (stage == Stage::cpt) {
    m.per_device_batch = 64;
    m.grad_accum = 16;
    m.epochs = 2;
    m.save_steps = 500;
  } else {
    m.per_device_batch = 8;
    m.grad_accum = 8;
    m.epochs = 3;
    m.save_steps = 50;
  }

  if (!overrides.is_object()) throw Error("ConfigInvalid", "manifest overrides must be an object");
  auto as_int = [](const std::string& key, const json& v, int& dst) {
    if (!v.is_number_integer()) throw Error("ConfigInvalid", key + " must be an integer");
    dst = v.get<int>();
  };
  auto as_num = [](const std::string& key, const json& v, double& dst) {
    if (!v.is_number()) throw Error("ConfigInvalid", key + " must be a number");
    dst = v.get<double>();
  };
  auto as_str = [](const std::string& key, const json& v, std::string& dst) {
    if (!v.is_string()) throw Error("ConfigInvalid", key + " must be a string");
    dst = v.get<std::string>();
  };
  const std::map<std::string, std::function<void(const json&)>> setters = {
      {"per_device_batch", [&](const json& v) { as_int("per_device_batch", v, m.per_device_batch); }},
      {"grad_accum", [&](const json& v) { as_int("grad_accum", v, m.grad_accum); }},
      {"epochs", [&](const json& v) { as_int("epochs", v, m.epochs); }},
      {"learning_rate", [&](const json& v) { as_num("learning_rate", v, m.learning_rate); }},
      {"schedule", [&](const json& v) { as_str("schedule", v, m.schedule); }},
      {"warmup_steps", [&](const json& v) { as_int("warmup_steps", v, m.warmup_steps); }},
      {"cutoff_len", [&](const json& v) { as_int("cutoff_len", v, m.cutoff_len); }},
      {"save_steps", [&](const json& v) { as_int("save_steps", v, m.save_steps); }},
      {"optimizer", [&](const json& v) { as_str("optimizer", v, m.optimizer); }},
      {"adam_beta1", [&](const json& v) { as_num("adam_beta1", v, m.adam_beta1); }},
      {"adam_beta2", [&](const json& v) { as_num("adam_beta2", v, m.adam_beta2); }},
      {"adam_epsilon", [&](const json& v) { as_num("adam_epsilon", v, m.adam_epsilon); }},
      {"theta_note", [&](const json& v) { as_str("theta_note", v, m.theta_note); }},
  };
  for (const auto& [key, value] : overrides.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error("ConfigInvalid", "unknown manifest field " + key);
    it->second(value);
  }
  return m;
}

json manifest_to_json(const TrainManifest& m) {
  return json{{"stage", std::string(to_string(m.stage))},
              {"per_device_batch", m.per_device_batch},
              {"grad_accum", m.grad_accum},
              {"epochs", m.epochs},
              {"learning_rate", m.learning_rate},
              {"schedule", m.schedule},
              {"warmup_steps", m.warmup_steps},
              {"cutoff_len", m.cutoff_len},
              {"save_steps", m.save_steps},
              {"optimizer", m.optimizer},
              {"adam_beta1", m.adam_beta1},
              {"adam_beta2", m.adam_beta2},
              {"adam_epsilon", m.adam_epsilon},
              {"theta_note", m.theta_note}};
}

}  // namespace forge::training
