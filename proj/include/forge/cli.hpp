#pragma once

#include <ostream>

namespace forge::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kStageError = 1;
inline constexpr int kConfigError = 2;

// forge <subcommand> [--config forge.json] [--work-dir DIR] [--dry-run] [flags]
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace forge::cli
