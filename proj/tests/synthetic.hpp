#pragma once

#include <algorithm>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/util.hpp"

namespace forge::testing {

// Independent of forge::dedup: plain std::set algebra.
inline double brute_jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::string> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline std::string synthetic_contract(const std::string& name, const std::vector<std::string>& idents) {
  std::string src = "contract " + name + " {\n";
  for (std::size_t i = 0; i + 1 < idents.size(); i += 2) {
    src += "  function " + idents[i] + "(uint256 " + idents[i + 1] + ") public returns (uint256) {\n";
    src += "    return " + idents[i + 1] + " + 1;\n  }\n";
  }
  return src + "}";
}

struct PlantedCorpus {
  std::vector<corpus::ContractUnit> units;
  int planted = 0;
};

// base_count distinct contracts with private vocabularies, plus dup_count
// copies of random bases that rename a single identifier. With 60
// identifiers per contract a rename gives Jaccard (S-1)/(S+1) > 0.9.
inline PlantedCorpus planted_corpus(int base_count, int dup_count, std::uint64_t seed) {
  SplitMix64 rng(seed);
  PlantedCorpus out;
  std::vector<std::vector<std::string>> vocab;
  for (int b = 0; b < base_count; ++b) {
    std::vector<std::string> ids;
    for (int k = 0; k < 60; ++k) ids.push_back("v" + std::to_string(b) + "_" + std::to_string(k));
    out.units.push_back(corpus::make_unit("base/" + std::to_string(b) + "/Token.sol", "Token.sol",
                                          corpus::UnitKind::contract,
                                          synthetic_contract("C" + std::to_string(b), ids)));
    vocab.push_back(std::move(ids));
  }
  for (int d = 0; d < dup_count; ++d) {
    auto b = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(base_count)));
    auto ids = vocab[b];
    ids[rng.below(ids.size())] = "renamed" + std::to_string(d);
    out.units.push_back(corpus::make_unit("dup/" + std::to_string(d) + "/Token.sol", "Token.sol",
                                          corpus::UnitKind::contract,
                                          synthetic_contract("C" + std::to_string(b), ids)));
  }
  out.planted = dup_count;
  return out;
}

}  // namespace forge::testing
