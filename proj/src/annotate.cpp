#include "forge/annotate.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>

#include "forge/error.hpp"

namespace forge::annotate {

namespace {

const char* kSystem =
    "You are a smart contract security auditor. You analyze Solidity code for one vulnerability "
    "type at a time, explain your reasoning step by step, and cite exact line numbers.";

const char* kUserTemplate =
    "Vulnerability type: {vuln_name}\n"
    "\n"
    "{label_hint}\n"
    "\n"
    "Work through this checklist:\n"
    "{checklist}\n"
    "\n"
    "Contract (line numbers on the left):\n"
    "{code}\n"
    "\n"
    "Answer with exactly one fenced block in this format:\n"
    "```result\n"
    "label: VULNERABLE or SAFE\n"
    "explanation: <reasoning that covers the checklist>\n"
    "locations: <comma-separated line ranges such as L12-L14; empty when SAFE>\n"
    "```";

std::map<VulnType, PromptTemplate> build_templates() {
  std::map<VulnType, PromptTemplate> m;
  m[VulnType::reentrancy] = {VulnType::reentrancy, kSystem, kUserTemplate,
                             {"call.value usage", "operation order", "external calls", "access control",
                              "internal function implementation"}};
  m[VulnType::timestamp_dependency] = {VulnType::timestamp_dependency, kSystem, kUserTemplate,
                                       {"block.timestamp or now usage", "time constraints in critical operations",
                                        "miner manipulation", "time precision"}};
  m[VulnType::delegatecall] = {VulnType::delegatecall, kSystem, kUserTemplate,
                               {"delegatecall usage", "context preservation", "state variable manipulation",
                                "access control", "internal function implementation"}};
  m[VulnType::integer_overflow_underflow] = {
      VulnType::integer_overflow_underflow, kSystem, kUserTemplate,
      {"arithmetic on uint variables", "SafeMath or 0.8.x checks", "unchecked keyword",
       "critical-operation arithmetic", "type conversion and large numbers"}};
  return m;
}

std::string vuln_display_name(VulnType t) {
  switch (t) {
    case VulnType::reentrancy: return "reentrancy";
    case VulnType::timestamp_dependency: return "timestamp dependency";
    case VulnType::integer_overflow_underflow: return "integer overflow/underflow";
    case VulnType::delegatecall: return "delegatecall";
  }
  return "?";
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Lines of the first ```result fence, without the fence lines.
std::optional<std::vector<std::string>> result_block(const std::string& raw) {
  auto lines = split_lines(raw);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lower(trim(lines[i])) != "```result") continue;
    std::vector<std::string> body;
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      if (trim(lines[j]) == "```") return body;
      body.push_back(lines[j]);
    }
    return std::nullopt;  // unterminated fence
  }
  return std::nullopt;
}

int parse_line_ref(std::string s, int max_line) {
  s = trim(s);
  if (!s.empty() && (s[0] == 'L' || s[0] == 'l')) s.erase(0, 1);
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw Error("BadLocation", s);
  }
  int v = std::stoi(s);
  if (v < 1 || v > max_line) throw Error("LocationOutOfRange", "line " + std::to_string(v));
  return v;
}

}  // namespace

const PromptTemplate& template_for(VulnType type) {
  static const auto templates = build_templates();
  return templates.at(type);
}

std::string number_lines(const std::string& source) {
  std::string out;
  auto lines = split_lines(source);
  char buf[16];
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%4zu | ", i + 1);
    out += buf;
    out += lines[i];
    if (i + 1 < lines.size()) out.push_back('\n');
  }
  return out;
}

llm::Messages build_prompt(const PromptTemplate& tmpl, const corpus::ContractUnit& unit,
                           std::optional<int> known_label) {
  std::string name = vuln_display_name(tmpl.vuln_type);
  std::string hint;
  if (known_label) {
    hint = std::string("Ground-truth label: ") + (*known_label ? "VULNERABLE" : "SAFE") + "\n" +
           (*known_label ? "This contract is labeled vulnerable to " + name +
                               ". Explain why and pinpoint the vulnerable lines."
                         : "This contract is labeled safe with respect to " + name +
                               ". Explain why the risky patterns, if any, are not exploitable.");
  } else {
    hint = "Decide whether this contract is vulnerable to " + name +
           ". Give your label decision, then explain it and pinpoint the relevant lines.";
  }
  std::string checklist;
  for (const auto& item : tmpl.checklist) checklist += "- " + item + "\n";
  if (!checklist.empty()) checklist.pop_back();

  std::string user = tmpl.user_template;
  replace_all(user, "{vuln_name}", name);
  replace_all(user, "{label_hint}", hint);
  replace_all(user, "{checklist}", checklist);
  replace_all(user, "{code}", number_lines(unit.source));
  return {{llm::Role::system, tmpl.system_text}, {llm::Role::user, user}};
}

std::string reformat_request() {
  return "Your previous answer did not contain a valid result block. Reply again with only the fenced "
         "```result block containing label, explanation and locations.";
}

std::string snippet_for(const corpus::ContractUnit& unit, int line_start, int line_end) {
  auto lines = split_lines(unit.source);
  std::string joined;
  for (int l = line_start; l <= line_end && l <= static_cast<int>(lines.size()); ++l) {
    joined += lines[static_cast<std::size_t>(l - 1)];
    joined.push_back('\n');
  }
  return collapse_whitespace(joined);
}

ParsedAnnotation parse_annotation(const std::string& raw, const corpus::ContractUnit& unit) {
  auto block = result_block(raw);
  if (!block) throw Error("MissingBlock", "no ```result block");

  std::map<std::string, std::string> fields;
  std::string current;
  for (const auto& line : *block) {
    auto colon = line.find(':');
    std::string key = colon == std::string::npos ? "" : lower(trim(line.substr(0, colon)));
    if (key == "label" || key == "explanation" || key == "locations") {
      current = key;
      fields[current] = trim(line.substr(colon + 1));
    } else if (!current.empty()) {
      fields[current] += "\n" + line;
    }
  }
  if (!fields.contains("label")) throw Error("MissingBlock", "label missing");
  if (!fields.contains("explanation")) throw Error("MissingBlock", "explanation missing");

  ParsedAnnotation out;
  std::string label = lower(trim(fields["label"]));
  if (label == "vulnerable" || label == "1") out.label = 1;
  else if (label == "safe" || label == "0") out.label = 0;
  else throw Error("BadLabelValue", fields["label"]);
  out.explanation = trim(fields["explanation"]);

  const int max_line = unit.line_count();
  std::string locs = trim(fields["locations"]);
  if (!locs.empty() && lower(locs) != "none") {
    std::size_t start = 0;
    while (start <= locs.size()) {
      auto comma = locs.find(',', start);
      std::string item = trim(locs.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (!item.empty()) {
        auto dash = item.find('-');
        int a = parse_line_ref(item.substr(0, dash), max_line);
        int b = dash == std::string::npos ? a : parse_line_ref(item.substr(dash + 1), max_line);
        if (a > b) throw Error("BadLocation", item);
        out.locations.push_back({a, b, snippet_for(unit, a, b)});
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (out.label == 1 && out.locations.empty()) throw Error("MissingLocations", "VULNERABLE without locations");
  return out;
}

std::string make_candidate_id(const std::string& unit_id, VulnType type, const std::string& generator_id) {
  return sha256_hex(unit_id + "|" + std::string(to_string(type)) + "|" + generator_id).substr(0, 24);
}

std::vector<AnnotationCandidate> generate_candidates(const corpus::ContractUnit& unit, VulnType type,
                                                     const std::vector<Generator>& generators,
                                                     std::optional<int> known_label,
                                                     std::vector<GenerationFailure>* failures) {
  if (generators.empty()) throw Error("ConfigInvalid", "no generators");
  auto messages = build_prompt(template_for(type), unit, known_label);

  std::vector<AnnotationCandidate> out;
  for (const auto& gen : generators) {
    auto fail = [&](const std::string& why) {
      if (failures) failures->push_back({unit.unit_id, gen.id, why});
    };
    try {
      auto first = gen.client->complete(messages);
      AnnotationCandidate c;
      c.unit_id = unit.unit_id;
      c.vuln_type = type;
      c.generator_id = gen.id;
      c.candidate_id = make_candidate_id(unit.unit_id, type, gen.id);
      ParsedAnnotation parsed;
      try {
        parsed = parse_annotation(first.response_text, unit);
        c.raw_response = first.response_text;
      } catch (const Error&) {
        auto retry = messages;
        retry.push_back({llm::Role::assistant, first.response_text});
        retry.push_back({llm::Role::user, reformat_request()});
        auto second = gen.client->complete(retry);
        parsed = parse_annotation(second.response_text, unit);
        c.raw_response = second.response_text;
        c.attempts = 2;
      }
      c.label = parsed.label;
      c.explanation = parsed.explanation;
      c.locations = parsed.locations;
      out.push_back(std::move(c));
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  if (out.empty()) throw Error("AllGeneratorsFailed", unit.unit_id);
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.generator_id < b.generator_id; });
  return out;
}

json candidate_to_json(const AnnotationCandidate& c) {
  json locs = json::array();
  for (const auto& l : c.locations) {
    locs.push_back({{"line_start", l.line_start}, {"line_end", l.line_end}, {"snippet", l.snippet}});
  }
  return json{{"candidate_id", c.candidate_id},
              {"unit_id", c.unit_id},
              {"vuln_type", std::string(to_string(c.vuln_type))},
              {"generator_id", c.generator_id},
              {"label", c.label},
              {"explanation", c.explanation},
              {"locations", locs},
              {"raw_response", c.raw_response},
              {"attempts", c.attempts}};
}

AnnotationCandidate candidate_from_json(const json& j) {
  AnnotationCandidate c;
  c.candidate_id = j.at("candidate_id").get<std::string>();
  c.unit_id = j.at("unit_id").get<std::string>();
  c.vuln_type = vuln_type_from_string(j.at("vuln_type").get<std::string>());
  c.generator_id = j.at("generator_id").get<std::string>();
  c.label = j.at("label").get<int>();
  c.explanation = j.at("explanation").get<std::string>();
  for (const auto& l : j.at("locations")) {
    c.locations.push_back(
        {l.at("line_start").get<int>(), l.at("line_end").get<int>(), l.at("snippet").get<std::string>()});
  }
  c.raw_response = j.value("raw_response", "");
  c.attempts = j.value("attempts", 1);
  return c;
}

}  // namespace forge::annotate
