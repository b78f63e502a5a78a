#include "forge/stubs.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "forge/annotate.hpp"
#include "forge/corpus.hpp"
#include "forge/error.hpp"

namespace forge::stubs {

namespace {

constexpr std::string_view kCodeHeader = "Contract (line numbers on the left):";

std::uint64_t hash64(std::string_view s) { return std::stoull(sha256_hex(s).substr(0, 16), nullptr, 16); }

std::optional<std::string> line_value(const std::string& text, std::string_view key) {
  for (const auto& line : split_lines(text)) {
    if (line.rfind(key, 0) == 0) return trim(line.substr(key.size()));
  }
  return std::nullopt;
}

std::optional<int> label_word(const std::string& s) {
  if (s.rfind("VULNERABLE", 0) == 0) return 1;
  if (s.rfind("SAFE", 0) == 0) return 0;
  return std::nullopt;
}

std::size_t word_count(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

const llm::Message* first_user(const llm::Messages& messages) {
  for (const auto& m : messages) {
    if (m.role == llm::Role::user) return &m;
  }
  return nullptr;
}

std::string ranges(const std::vector<int>& lines) {
  std::vector<int> sorted = lines;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::string out;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[j] + 1) ++j;
    if (!out.empty()) out += ", ";
    out += "L" + std::to_string(sorted[i]) + "-L" + std::to_string(sorted[j]);
    i = j + 1;
  }
  return out;
}

std::vector<std::string> checklist_items(const std::string& prompt) {
  std::vector<std::string> out;
  bool in_list = false;
  for (const auto& line : split_lines(prompt)) {
    if (line.rfind("Work through this checklist:", 0) == 0) {
      in_list = true;
      continue;
    }
    if (!in_list) continue;
    if (line.rfind("- ", 0) != 0) break;
    out.push_back(line.substr(2));
  }
  return out;
}

std::string annotation_response(const std::string& persona, const std::string& prompt) {
  auto type = prompt_vuln_type(prompt);
  auto code = recover_code(prompt);
  if (!type || !code) return "I could not find the contract in the request.";
  auto unit = corpus::make_unit("stub", "Stub.sol", corpus::UnitKind::contract, *code);

  std::vector<int> hit_lines;
  for (const auto& hit : patterns::extract_candidates(unit, *type)) {
    hit_lines.insert(hit_lines.end(), hit.lines.begin(), hit.lines.end());
  }
  int label = 0;
  if (auto gt = line_value(prompt, "Ground-truth label:")) {
    label = label_word(*gt).value_or(0);
  } else {
    label = hit_lines.empty() ? 0 : 1;
    if (persona.find("noisy") != std::string::npos && hash64(persona + "|" + *code) % 5 == 0) label = 1 - label;
  }
  if (label == 1 && hit_lines.empty()) {
    const auto lines = split_lines(*code);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].find("function") != std::string::npos) {
        hit_lines.push_back(static_cast<int>(i) + 1);
        break;
      }
    }
    if (hit_lines.empty()) hit_lines.push_back(1);
  }

  const std::string name(to_string(*type));
  const std::string where = hit_lines.empty() ? "" : ranges(hit_lines);
  std::string explanation;
  if (label == 1) {
    explanation = "The " + name + " pattern at " + where + " is reachable by an untrusted caller.";
  } else {
    explanation = "No exploitable " + name + " pattern: " +
                  (hit_lines.empty() ? std::string("the relevant constructs are absent.")
                                     : "the constructs at " + where + " are guarded.");
  }
  std::uint64_t style = hash64(persona) % 3;
  if (persona.find("terse") != std::string::npos) style = 0;
  if (persona.find("thorough") != std::string::npos) style = 1;
  if (persona.find("verbose") != std::string::npos) style = 2;
  if (style >= 1) {
    for (const auto& item : checklist_items(prompt)) {
      explanation += " Checked " + item + (label == 1 ? ": contributes to the issue." : ": no issue.");
    }
  }
  if (style == 2) {
    explanation += " In summary, the assessment above follows from reading every function of " + unit.name +
                   " and tracing each state change around the external interactions one by one.";
  }
  return "Analysis of " + unit.name + ".\n\n```result\nlabel: " + std::string(label ? "VULNERABLE" : "SAFE") +
         "\nexplanation: " + explanation + "\nlocations: " + (label ? where : std::string("none")) + "\n```";
}

std::string judge_response(const std::string& persona, const std::string& prompt) {
  int hi = 10;
  if (auto scale = line_value(prompt, "Scale: 1-")) hi = std::stoi(*scale);
  auto gt = line_value(prompt, "Ground-truth label:");
  std::optional<int> claimed;
  std::string explanation;
  auto pos = prompt.find("Explanation under review (claimed label: ");
  if (pos != std::string::npos) {
    auto rest = prompt.substr(pos + 41);
    claimed = label_word(rest);
    auto start = rest.find("):\n");
    auto end = rest.find("\nClaimed locations:");
    if (end == std::string::npos) end = rest.find("\n\nExample of the expected answer:");
    if (start != std::string::npos && end != std::string::npos && end > start) {
      explanation = rest.substr(start + 3, end - start - 3);
    }
  }
  const auto words = word_count(explanation);
  auto clamp = [hi](int v) { return std::clamp(v, 1, hi); };
  int correctness = hi * 3 / 4;
  if (gt && claimed) correctness = label_word(*gt) == claimed ? hi : std::max(1, hi / 3);
  int completeness = words < 15 ? hi / 2 : words < 40 ? hi - 1 : hi;
  int conciseness = words <= 40 ? hi : words <= 70 ? hi - 1 : hi / 2;
  const auto jitter = hash64(persona + "|" + explanation);
  if (jitter % 4 == 0) completeness -= 1;
  if (jitter % 7 == 0) conciseness -= 1;
  correctness = clamp(correctness);
  completeness = clamp(completeness);
  conciseness = clamp(conciseness);
  return "```score\ncorrectness: " + std::to_string(correctness) + "\ncompleteness: " + std::to_string(completeness) +
         "\nconciseness: " + std::to_string(conciseness) + "\nrationale: Correctness reflects the claimed label" +
         (gt ? " against the ground truth" : "") + ". Completeness reflects coverage (" + std::to_string(words) +
         " words). Conciseness penalizes padding.\n```";
}

}  // namespace

std::optional<std::string> recover_code(const std::string& prompt) {
  auto pos = prompt.find(kCodeHeader);
  if (pos == std::string::npos) return std::nullopt;
  auto lines = split_lines(std::string_view(prompt).substr(pos + kCodeHeader.size() + 1));
  std::string out;
  std::size_t n = 0;
  for (const auto& line : lines) {
    auto bar = line.find(" | ");
    if (bar == std::string::npos) break;
    auto number = trim(line.substr(0, bar));
    if (number.empty() || !std::all_of(number.begin(), number.end(), [](unsigned char c) { return std::isdigit(c); })) {
      break;
    }
    if (n++) out.push_back('\n');
    out += line.substr(bar + 3);
  }
  if (n == 0) return std::nullopt;
  return out;
}

std::optional<VulnType> prompt_vuln_type(const std::string& prompt) {
  auto value = line_value(prompt, "Vulnerability type:");
  if (!value) return std::nullopt;
  std::string id = *value;
  std::replace(id.begin(), id.end(), ' ', '_');
  std::replace(id.begin(), id.end(), '/', '_');
  try {
    return vuln_type_from_string(id);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string respond(const std::string& persona, const llm::Messages& messages) {
  const auto* user = first_user(messages);
  if (!user) return "No request.";
  if (user->content.rfind("Scale: 1-", 0) == 0) return judge_response(persona, user->content);
  return annotation_response(persona, user->content);
}

std::shared_ptr<llm::Transport> make_transport(const std::string& base_url) {
  constexpr std::string_view scheme = "stub://";
  if (base_url.rfind(scheme, 0) != 0) return llm::make_http_transport();
  std::string persona = base_url.substr(scheme.size());
  return std::make_shared<llm::StubTransport>(
      [persona](const llm::Messages& messages) { return respond(persona, messages); });
}

}  // namespace forge::stubs
