#include "forge/dedup.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "forge/error.hpp"

namespace forge::dedup {

void SimilarityConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error("ConfigInvalid", "threshold must be in [0,1]");
  if (minhash_hashes < 16) throw Error("ConfigInvalid", "minhash_hashes must be >= 16");
}

Mode mode_from_string(const std::string& s) {
  if (s == "exact") return Mode::exact;
  if (s == "minhash" || s == "minhash_prefilter") return Mode::minhash_prefilter;
  throw Error("ConfigInvalid", "mode " + s);
}

double jaccard_index(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Signature minhash_signature(const std::set<std::string>& s, const SimilarityConfig& cfg) {
  if (s.empty()) throw Error("EmptySet", "minhash of empty set");
  std::vector<std::uint64_t> base;
  base.reserve(s.size());
  for (const auto& x : s) base.push_back(fnv1a64(x));

  Signature sig(static_cast<std::size_t>(cfg.minhash_hashes), std::numeric_limits<std::uint64_t>::max());
  for (int i = 0; i < cfg.minhash_hashes; ++i) {
    std::uint64_t salt = mix64(cfg.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(i));
    auto& slot = sig[static_cast<std::size_t>(i)];
    for (auto h : base) slot = std::min(slot, mix64(h ^ salt));
  }
  return sig;
}

double estimate_from_signatures(const Signature& a, const Signature& b) {
  if (a.size() != b.size() || a.empty()) throw Error("SignatureMismatch", "signature lengths differ");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

DedupReport dedup_group(const std::vector<corpus::ContractUnit>& units, const SimilarityConfig& cfg) {
  cfg.validate();
  DedupReport report;
  report.groups_processed = 1;
  if (units.empty()) return report;
  report.filename = units.front().filename;
  for (const auto& u : units) {
    if (u.filename != report.filename) throw Error("MixedFilenames", report.filename + " vs " + u.filename);
  }

  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return units[a].unit_id < units[b].unit_id; });

  const bool prefilter = cfg.mode == Mode::minhash_prefilter;
  std::vector<Signature> sigs(units.size());
  if (prefilter) {
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (!units[i].token_set.empty()) sigs[i] = minhash_signature(units[i].token_set, cfg);
    }
  }

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const auto& u = units[idx];
    bool discarded = false;
    for (std::size_t k : kept) {
      // Empty token sets have no signature; fall through to the exact check.
      if (prefilter && !sigs[idx].empty() && !sigs[k].empty() &&
          estimate_from_signatures(sigs[idx], sigs[k]) < cfg.threshold - cfg.prefilter_margin) {
        continue;
      }
      double sim = jaccard_index(u.token_set, units[k].token_set);
      if (sim > cfg.threshold) {
        report.discarded.push_back({u.unit_id, u.origin_path, units[k].unit_id, sim});
        discarded = true;
        break;
      }
    }
    if (!discarded) {
      kept.push_back(idx);
      report.kept.push_back(u.unit_id);
    }
  }
  return report;
}

DedupResult dedup_all(const std::vector<corpus::ContractUnit>& units, const SimilarityConfig& cfg) {
  DedupResult result;
  std::set<std::pair<std::string, std::string>> dropped;  // (unit_id, origin_path)
  for (const auto& [name, group] : corpus::group_by_filename(units)) {
    auto report = dedup_group(group, cfg);
    for (const auto& d : report.discarded) dropped.insert({d.unit_id, d.origin_path});
    result.groups.push_back(std::move(report));
  }
  // Byte-identical units share a unit_id; drop exactly as many copies as
  // were reported by keying on (unit_id, origin_path).
  for (const auto& u : units) {
    auto it = dropped.find({u.unit_id, u.origin_path});
    if (it != dropped.end()) {
      dropped.erase(it);
      continue;
    }
    result.kept_units.push_back(u);
  }
  return result;
}

json report_to_json(const DedupReport& r) {
  json discarded = json::array();
  for (const auto& d : r.discarded) {
    discarded.push_back({{"unit_id", d.unit_id},
                         {"origin_path", d.origin_path},
                         {"duplicate_of", d.duplicate_of},
                         {"similarity", d.similarity}});
  }
  return json{{"filename", r.filename},
              {"kept", r.kept},
              {"discarded", discarded},
              {"groups_processed", r.groups_processed}};
}

json result_report_json(const DedupResult& r, const SimilarityConfig& cfg) {
  json groups = json::array();
  std::size_t kept = 0, discarded = 0;
  for (const auto& g : r.groups) {
    groups.push_back(report_to_json(g));
    kept += g.kept.size();
    discarded += g.discarded.size();
  }
  return json{{"threshold", cfg.threshold},
              {"groups_processed", r.groups.size()},
              {"kept_total", kept},
              {"discarded_total", discarded},
              {"groups", groups}};
}

}  // namespace forge::dedup
