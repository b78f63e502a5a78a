#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace forge {

// Every failure raised by the toolkit carries a stable kind string
// ("UnterminatedString", "RetriesExhausted", ...) so callers and tests can
// branch on it without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& detail)
      : std::runtime_error(kind + ": " + detail), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

}  // namespace forge
