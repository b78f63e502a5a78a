#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace forge {

using json = nlohmann::json;

std::string sha256_hex(std::string_view data);

bool is_valid_utf8(std::string_view s);

// Half-up rounding at a fixed number of decimals. A small epsilon absorbs
// binary representation error so that 89.445 rounds to 89.45.
double round_half_up(double value, int decimals);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

std::vector<json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<json>& rows);

std::vector<std::string> split_lines(std::string_view text);
std::string collapse_whitespace(std::string_view text);
std::string trim(std::string_view s);

// splitmix64: small, seedable and identical across standard libraries, which
// std::uniform_int_distribution is not.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

template <class T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace forge
