#include "forge/judge.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <map>

#include "forge/error.hpp"

namespace forge::judge {

std::string_view to_string(Scale s) {
  return s == Scale::curation_1_to_10 ? "curation_1_to_10" : "likert_1_to_4";
}

Scale scale_from_string(std::string_view s) {
  if (s == "curation" || s == "curation_1_to_10") return Scale::curation_1_to_10;
  if (s == "likert" || s == "likert_1_to_4") return Scale::likert_1_to_4;
  throw Error("ConfigInvalid", "scale " + std::string(s));
}

int scale_max(Scale s) { return s == Scale::curation_1_to_10 ? 10 : 4; }

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::correctness: return "correctness";
    case Dimension::completeness: return "completeness";
    case Dimension::conciseness: return "conciseness";
  }
  return "?";
}

const std::array<std::string, 4>& likert_anchors(Dimension d) {
  static const std::array<std::string, 4> correctness = {
      "1 - Disagree: Major errors in logic and localization.",
      "2 - Somewhat disagree: Some errors, misses major vulnerabilities.",
      "3 - Somewhat agree: Minor omissions, locates major vulnerabilities.",
      "4 - Agree: Correct logic, accurate identification and localization."};
  static const std::array<std::string, 4> completeness = {
      "1 - Disagree: Omits multiple key vulnerabilities, superficial explanations.",
      "2 - Somewhat disagree: Identifies some, misses major issues, lacks depth.",
      "3 - Somewhat agree: Covers major vulnerabilities, may miss minor ones.",
      "4 - Agree: Comprehensive identification, detailed explanations for all."};
  static const std::array<std::string, 4> conciseness = {
      "1 - Disagree: Verbose, key points obscured, difficult to apply.",
      "2 - Somewhat disagree: Somewhat verbose, key info present but unclear.",
      "3 - Somewhat agree: Generally concise, some parts slightly verbose.",
      "4 - Agree: Precise, clear, directly applicable, no redundancy."};
  switch (d) {
    case Dimension::correctness: return correctness;
    case Dimension::completeness: return completeness;
    case Dimension::conciseness: return conciseness;
  }
  return correctness;
}

std::string_view dimension_description(Dimension d) {
  switch (d) {
    case Dimension::correctness: return "Accuracy of the reasoning logic and of the vulnerability localization.";
    case Dimension::completeness: return "Whether all potential vulnerability points are covered.";
    case Dimension::conciseness: return "Whether the explanation is concise, easy to understand and quick to apply.";
  }
  return "";
}

namespace {

std::string rubric_text(Scale scale) {
  std::string out;
  for (auto d : kDimensions) {
    std::string name(to_string(d));
    name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    out += name + ": " + std::string(dimension_description(d)) + "\n";
    if (scale == Scale::likert_1_to_4) {
      for (const auto& a : likert_anchors(d)) out += "  " + a + "\n";
    } else {
      out += "  Score from 1 (unusable) to 10 (flawless).\n";
    }
  }
  return out;
}

std::string example_block(Scale scale) {
  if (scale == Scale::likert_1_to_4) {
    return "```score\ncorrectness: 3\ncompleteness: 3\nconciseness: 4\n"
           "rationale: Correctness 3: the reentrant call is located but one path is missed. Completeness 3: "
           "major issue covered, a minor one omitted. Conciseness 4: short and directly applicable.\n```";
  }
  return "```score\ncorrectness: 8\ncompleteness: 7\nconciseness: 9\n"
         "rationale: Correctness 8: logic is right, one line range is off by one. Completeness 7: the "
         "access-control angle is not discussed. Conciseness 9: no redundancy.\n```";
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

llm::Messages build_judge_prompt(const annotate::AnnotationCandidate& candidate, const corpus::ContractUnit& unit,
                                 Scale scale, std::optional<int> ground_truth) {
  const int hi = scale_max(scale);
  std::string system =
      "You are an expert reviewer of smart contract vulnerability explanations. You grade explanations "
      "strictly against the rubric and justify every score.";

  std::string user;
  user += "Scale: 1-" + std::to_string(hi) + " for each dimension (integers only).\n\n";
  user += "Rubric:\n" + rubric_text(scale) + "\n";
  user += "Vulnerability type: " + std::string(to_string(candidate.vuln_type)) + "\n";
  if (scale == Scale::curation_1_to_10 && ground_truth) {
    user += std::string("Ground-truth label: ") + (*ground_truth ? "VULNERABLE" : "SAFE") + "\n";
  }
  user += "\nContract (line numbers on the left):\n" + annotate::number_lines(unit.source) + "\n\n";
  user += "Explanation under review (claimed label: ";
  user += candidate.label ? "VULNERABLE" : "SAFE";
  user += "):\n" + candidate.explanation + "\n";
  if (!candidate.locations.empty()) {
    user += "Claimed locations:";
    for (const auto& l : candidate.locations) {
      user += " L" + std::to_string(l.line_start) + "-L" + std::to_string(l.line_end);
    }
    user += "\n";
  }
  user += "\nExample of the expected answer:\n" + example_block(scale) + "\n\n";
  user += "Answer with exactly one fenced ```score block with the keys correctness, completeness, "
          "conciseness and rationale. The rationale must justify each dimension's score.";
  return {{llm::Role::system, system}, {llm::Role::user, user}};
}

ParsedScores parse_judge_scores(const std::string& raw, Scale scale) {
  auto lines = split_lines(raw);
  std::optional<std::vector<std::string>> block;
  for (std::size_t i = 0; i < lines.size() && !block; ++i) {
    if (lower(trim(lines[i])) != "```score") continue;
    std::vector<std::string> body;
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      if (trim(lines[j]) == "```") {
        block = body;
        break;
      }
      body.push_back(lines[j]);
    }
  }
  if (!block) throw Error("MissingBlock", "no ```score block");

  std::map<std::string, std::string> fields;
  std::string current;
  for (const auto& line : *block) {
    auto colon = line.find(':');
    std::string key = colon == std::string::npos ? "" : lower(trim(line.substr(0, colon)));
    if (key == "correctness" || key == "completeness" || key == "conciseness" || key == "rationale") {
      current = key;
      fields[key] = trim(line.substr(colon + 1));
    } else if (current == "rationale") {
      fields[current] += "\n" + line;
    }
  }

  const int hi = scale_max(scale);
  auto score = [&](Dimension d) {
    std::string key(to_string(d));
    if (!fields.contains(key)) throw Error("MissingBlock", key + " missing");
    const std::string& v = fields[key];
    if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c) || c == '-'; }) ||
        v.find('-', 1) != std::string::npos || v == "-") {
      throw Error("NonIntegerScore", key + "=" + v);
    }
    int n = std::stoi(v);
    if (n < 1 || n > hi) throw Error("ScoreOutOfRange", key + "=" + v);
    return n;
  };
  ParsedScores out;
  out.correctness = score(Dimension::correctness);
  out.completeness = score(Dimension::completeness);
  out.conciseness = score(Dimension::conciseness);
  out.rationale = trim(fields["rationale"]);
  if (out.rationale.empty()) throw Error("MissingBlock", "rationale missing");
  return out;
}

JudgeScore score_candidate(llm::ChatClient& judge, const annotate::AnnotationCandidate& candidate,
                           const corpus::ContractUnit& unit, Scale scale, std::optional<int> ground_truth) {
  auto messages = build_judge_prompt(candidate, unit, scale, ground_truth);
  auto first = judge.complete(messages);
  ParsedScores parsed;
  try {
    parsed = parse_judge_scores(first.response_text, scale);
  } catch (const Error&) {
    messages.push_back({llm::Role::assistant, first.response_text});
    messages.push_back({llm::Role::user,
                        "Your previous answer did not contain a valid score block. Reply again with only the "
                        "fenced ```score block."});
    parsed = parse_judge_scores(judge.complete(messages).response_text, scale);
  }
  return {candidate.candidate_id, scale,           parsed.correctness, parsed.completeness,
          parsed.conciseness,     parsed.rationale, judge.config().model_name};
}

std::vector<JudgeScore> score_batch(llm::ChatClient& judge, const std::vector<JudgeItem>& items, Scale scale) {
  std::vector<std::future<JudgeScore>> futures;
  futures.reserve(items.size());
  for (const auto& item : items) {
    if (!item.unit) throw Error("BadRequest", "judge item without unit");
    futures.push_back(std::async(std::launch::async, [&judge, &item, scale] {
      return score_candidate(judge, item.candidate, *item.unit, scale, item.ground_truth);
    }));
  }
  std::vector<JudgeScore> out;
  out.reserve(items.size());
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

namespace {

int weighted(const JudgeScore& s, const SelectionWeights& w) {
  return w.correctness * s.correctness + w.completeness * s.completeness + w.conciseness * s.conciseness;
}

}  // namespace

SelectionRecord select_best(const std::vector<ScoredCandidate>& scored, const SelectionWeights& w) {
  if (scored.empty()) throw Error("NoScoredCandidates", "empty group");
  for (const auto& s : scored) {
    if (s.score.scale != Scale::curation_1_to_10) throw Error("ScaleMismatch", s.score.candidate_id);
    if (s.unit_id != scored.front().unit_id || s.vuln_type != scored.front().vuln_type) {
      throw Error("MixedUnits", s.unit_id);
    }
  }
  auto better = [&w](const ScoredCandidate& a, const ScoredCandidate& b) {
    int ta = weighted(a.score, w), tb = weighted(b.score, w);
    if (ta != tb) return ta > tb;
    if (a.score.correctness != b.score.correctness) return a.score.correctness > b.score.correctness;
    if (a.generator_id != b.generator_id) return a.generator_id < b.generator_id;
    return a.score.candidate_id < b.score.candidate_id;
  };
  auto sorted = scored;
  std::sort(sorted.begin(), sorted.end(), better);
  SelectionRecord r;
  r.unit_id = sorted.front().unit_id;
  r.vuln_type = sorted.front().vuln_type;
  r.winner = sorted.front().score.candidate_id;
  r.total_score = sorted.front().score.total();
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    r.runner_up_scores.emplace_back(sorted[i].score.candidate_id, sorted[i].score.total());
  }
  return r;
}

std::vector<SelectionRecord> select_all(const std::vector<ScoredCandidate>& scored, const SelectionWeights& w) {
  std::map<std::pair<std::string, int>, std::vector<ScoredCandidate>> groups;
  for (const auto& s : scored) groups[{s.unit_id, static_cast<int>(s.vuln_type)}].push_back(s);
  std::vector<SelectionRecord> out;
  for (const auto& [key, group] : groups) out.push_back(select_best(group, w));
  return out;
}

json score_to_json(const JudgeScore& s) {
  return json{{"candidate_id", s.candidate_id}, {"scale", std::string(to_string(s.scale))},
              {"correctness", s.correctness},   {"completeness", s.completeness},
              {"conciseness", s.conciseness},   {"rationale", s.rationale},
              {"judge_model", s.judge_model}};
}

JudgeScore score_from_json(const json& j) {
  JudgeScore s{j.at("candidate_id").get<std::string>(), scale_from_string(j.at("scale").get<std::string>()),
               j.at("correctness").get<int>(),          j.at("completeness").get<int>(),
               j.at("conciseness").get<int>(),          j.at("rationale").get<std::string>(),
               j.value("judge_model", "")};
  int hi = scale_max(s.scale);
  for (int v : {s.correctness, s.completeness, s.conciseness}) {
    if (v < 1 || v > hi) throw Error("ScoreOutOfRange", s.candidate_id + " " + std::to_string(v));
  }
  return s;
}

json scored_to_json(const ScoredCandidate& s) {
  auto j = score_to_json(s.score);
  j["unit_id"] = s.unit_id;
  j["vuln_type"] = std::string(to_string(s.vuln_type));
  j["generator_id"] = s.generator_id;
  return j;
}

ScoredCandidate scored_from_json(const json& j) {
  return {score_from_json(j), j.at("unit_id").get<std::string>(),
          vuln_type_from_string(j.at("vuln_type").get<std::string>()), j.at("generator_id").get<std::string>()};
}

json selection_to_json(const SelectionRecord& r) {
  json runners = json::array();
  for (const auto& [id, total] : r.runner_up_scores) runners.push_back({{"candidate_id", id}, {"total", total}});
  return json{{"unit_id", r.unit_id},
              {"vuln_type", std::string(to_string(r.vuln_type))},
              {"winner", r.winner},
              {"total_score", r.total_score},
              {"runner_up_scores", runners}};
}

SelectionRecord selection_from_json(const json& j) {
  SelectionRecord r;
  r.unit_id = j.at("unit_id").get<std::string>();
  r.vuln_type = vuln_type_from_string(j.at("vuln_type").get<std::string>());
  r.winner = j.at("winner").get<std::string>();
  r.total_score = j.at("total_score").get<int>();
  for (const auto& x : j.at("runner_up_scores")) {
    r.runner_up_scores.emplace_back(x.at("candidate_id").get<std::string>(), x.at("total").get<int>());
  }
  return r;
}

}  // namespace forge::judge
