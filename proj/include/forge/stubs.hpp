#pragma once

#include <memory>
#include <optional>
#include <string>

#include "forge/llmclient.hpp"
#include "forge/patterns.hpp"

namespace forge::stubs {

// Offline responder behind "stub://<persona>" endpoints. Annotation prompts
// get a ```result block whose label is the ground truth when given (else the
// keyword rule, flipped on some units for personas containing "noisy") and
// whose locations come from pattern hits. Judge prompts get a ```score block
// derived from label agreement and explanation length. Explanation style
// follows "terse", "thorough" or "verbose" in the persona, else a hash. Output depends only on
// the persona and the messages.
std::string respond(const std::string& persona, const llm::Messages& messages);

// StubTransport for stub:// URLs, the HTTP transport otherwise.
std::shared_ptr<llm::Transport> make_transport(const std::string& base_url);

// Source text recovered from a "   N | line" block following header.
std::optional<std::string> recover_code(const std::string& prompt);

// "Vulnerability type: ..." line, in display or identifier form.
std::optional<VulnType> prompt_vuln_type(const std::string& prompt);

}  // namespace forge::stubs
