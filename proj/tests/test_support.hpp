#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "forge/error.hpp"

// Asserts that expr throws forge::Error with the given kind.
#define CHECK_ERROR_KIND(expr, expected_kind)                          \
  do {                                                                 \
    bool thrown_ = false;                                              \
    try {                                                              \
      (void)(expr);                                                    \
    } catch (const forge::Error& e_) {                                 \
      thrown_ = true;                                                  \
      CHECK_MESSAGE(e_.kind() == (expected_kind), e_.what());          \
    }                                                                  \
    CHECK_MESSAGE(thrown_, "expected forge::Error " << (expected_kind)); \
  } while (0)

namespace forge::testing {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("forge-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path fixture_dir() { return FORGE_FIXTURE_DIR; }

}  // namespace forge::testing
