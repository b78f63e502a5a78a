#include <algorithm>
#include <atomic>

#include "forge/judge.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::judge;

namespace {

corpus::ContractUnit bank_unit() {
  return corpus::make_unit("p/Bank.sol", "Bank.sol", corpus::UnitKind::contract,
                           "contract Bank {\n  mapping(address => uint) b;\n  function w() public {\n"
                           "    msg.sender.call.value(b[msg.sender])();\n    b[msg.sender] = 0;\n  }\n}");
}

annotate::AnnotationCandidate candidate(const std::string& gen) {
  auto unit = bank_unit();
  annotate::AnnotationCandidate c;
  c.unit_id = unit.unit_id;
  c.vuln_type = VulnType::reentrancy;
  c.generator_id = gen;
  c.candidate_id = annotate::make_candidate_id(unit.unit_id, c.vuln_type, gen);
  c.label = 1;
  c.explanation = "The balance is zeroed after the external call.";
  c.locations = {{4, 5, annotate::snippet_for(unit, 4, 5)}};
  return c;
}

std::string block(const std::string& c, const std::string& comp, const std::string& conc,
                  const std::string& rationale = "Correctness fine. Completeness fine. Conciseness fine.") {
  return "```score\ncorrectness: " + c + "\ncompleteness: " + comp + "\nconciseness: " + conc +
         "\nrationale: " + rationale + "\n```";
}

ScoredCandidate scored(const std::string& gen, int c, int comp, int conc) {
  ScoredCandidate s;
  s.unit_id = "u1";
  s.vuln_type = VulnType::reentrancy;
  s.generator_id = gen;
  s.score = {"cand-" + gen, Scale::curation_1_to_10, c, comp, conc, "r", "judge"};
  return s;
}

std::shared_ptr<llm::ChatClient> client(std::shared_ptr<llm::StubTransport> stub, int max_in_flight = 4) {
  llm::EndpointConfig cfg;
  cfg.base_url = "stub://judge";
  cfg.model_name = "judge-model";
  cfg.retry_limit = 0;
  cfg.max_in_flight = max_in_flight;
  return std::make_shared<llm::ChatClient>(cfg, stub);
}

}  // namespace

TEST_CASE("likert prompt reproduces the rubric anchors verbatim") {
  auto msgs = build_judge_prompt(candidate("qwen"), bank_unit(), Scale::likert_1_to_4);
  REQUIRE(msgs.size() == 2);
  const auto& user = msgs[1].content;
  for (auto d : kDimensions) {
    for (const auto& anchor : likert_anchors(d)) CHECK_MESSAGE(user.find(anchor) != std::string::npos, anchor);
  }
  CHECK(user.find("4 - Agree: Correct logic, accurate identification and localization.") != std::string::npos);
  CHECK(user.find("Scale: 1-4") != std::string::npos);
  CHECK(user.find("Ground-truth") == std::string::npos);
}

TEST_CASE("curation prompt states the 1-10 range and includes the label") {
  auto user = build_judge_prompt(candidate("qwen"), bank_unit(), Scale::curation_1_to_10, 1)[1].content;
  CHECK(user.find("Scale: 1-10") != std::string::npos);
  CHECK(user.find("Ground-truth label: VULNERABLE") != std::string::npos);
  CHECK(user.find("   4 |     msg.sender.call.value") != std::string::npos);
  CHECK(user.find("The balance is zeroed after the external call.") != std::string::npos);
  CHECK(user.find("L4-L5") != std::string::npos);
}

TEST_CASE("every prompt requests the score block keys") {
  for (auto s : {Scale::curation_1_to_10, Scale::likert_1_to_4}) {
    auto user = build_judge_prompt(candidate("qwen"), bank_unit(), s)[1].content;
    CHECK(user.find("```score") != std::string::npos);
    for (auto key : {"correctness", "completeness", "conciseness", "rationale"}) {
      CHECK(user.find(key) != std::string::npos);
    }
  }
}

TEST_CASE("parse_judge_scores extracts integers and rationale") {
  auto p = parse_judge_scores("Here you go.\n" + block("9", "8", "10"), Scale::curation_1_to_10);
  CHECK(p.correctness == 9);
  CHECK(p.completeness == 8);
  CHECK(p.conciseness == 10);
  CHECK(p.rationale == "Correctness fine. Completeness fine. Conciseness fine.");
  auto multi = parse_judge_scores(block("2", "3", "4", "line one\nline two"), Scale::likert_1_to_4);
  CHECK(multi.rationale == "line one\nline two");
}

TEST_CASE("parse_judge_scores errors are strict") {
  CHECK_ERROR_KIND(parse_judge_scores(block("4", "5", "3"), Scale::likert_1_to_4), "ScoreOutOfRange");
  CHECK_ERROR_KIND(parse_judge_scores(block("0", "5", "3"), Scale::curation_1_to_10), "ScoreOutOfRange");
  CHECK_ERROR_KIND(parse_judge_scores(block("11", "5", "3"), Scale::curation_1_to_10), "ScoreOutOfRange");
  CHECK_ERROR_KIND(parse_judge_scores(block("-1", "5", "3"), Scale::curation_1_to_10), "ScoreOutOfRange");
  CHECK_ERROR_KIND(parse_judge_scores(block("8.5", "5", "3"), Scale::curation_1_to_10), "NonIntegerScore");
  CHECK_ERROR_KIND(parse_judge_scores(block("high", "5", "3"), Scale::curation_1_to_10), "NonIntegerScore");
  CHECK_ERROR_KIND(parse_judge_scores("```score\ncorrectness: 9\ncompleteness: 8\nrationale: x\n```",
                                      Scale::curation_1_to_10),
                   "MissingBlock");
  CHECK_ERROR_KIND(parse_judge_scores(block("9", "8", "7", ""), Scale::curation_1_to_10), "MissingBlock");
  CHECK_ERROR_KIND(parse_judge_scores("correctness: 9", Scale::curation_1_to_10), "MissingBlock");
}

TEST_CASE("select_best examples") {
  auto a = select_best({scored("genA", 9, 9, 9), scored("genB", 9, 9, 8)});
  CHECK(a.winner == "cand-genA");
  CHECK(a.total_score == 27);
  REQUIRE(a.runner_up_scores.size() == 1);
  CHECK(a.runner_up_scores[0] == std::pair<std::string, int>{"cand-genB", 26});

  auto tie = select_best({scored("genA", 8, 10, 9), scored("genB", 9, 9, 9)});
  CHECK(tie.winner == "cand-genB");

  auto lex = select_best({scored("zeta", 9, 9, 9), scored("alpha", 9, 9, 9)});
  CHECK(lex.winner == "cand-alpha");
}

TEST_CASE("select_best errors") {
  CHECK_ERROR_KIND(select_best({}), "NoScoredCandidates");
  auto likert = scored("a", 3, 3, 3);
  likert.score.scale = Scale::likert_1_to_4;
  CHECK_ERROR_KIND(select_best({likert}), "ScaleMismatch");
  auto other = scored("b", 3, 3, 3);
  other.unit_id = "u2";
  CHECK_ERROR_KIND(select_best({scored("a", 3, 3, 3), other}), "MixedUnits");
}

TEST_CASE("select_best is permutation invariant and argmax stable") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredCandidate> group;
    int n = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n; ++i) {
      group.push_back(scored("g" + std::to_string(rng.below(4)) + "_" + std::to_string(i),
                             1 + static_cast<int>(rng.below(10)), 1 + static_cast<int>(rng.below(10)),
                             1 + static_cast<int>(rng.below(10))));
    }
    auto base = select_best(group);
    for (const auto& r : base.runner_up_scores) CHECK(base.total_score >= r.second);

    auto shuffled = group;
    seeded_shuffle(shuffled, rng.next());
    CHECK(select_best(shuffled) == base);

    if (base.total_score > 3) {
      auto extended = group;
      extended.push_back(scored("aaa_low", 1, 1, 1));
      CHECK(select_best(extended).winner == base.winner);
    }
  }
}

TEST_CASE("weights change ranking but not total_score") {
  SelectionWeights w{1, 1, 5};
  auto r = select_best({scored("genA", 10, 10, 2), scored("genB", 5, 5, 8)}, w);
  CHECK(r.winner == "cand-genB");
  CHECK(r.total_score == 18);
}

TEST_CASE("select_all groups by unit and type") {
  auto x = scored("a", 5, 5, 5);
  auto y = scored("b", 6, 6, 6);
  auto z = scored("c", 2, 2, 2);
  z.unit_id = "u0";
  auto recs = select_all({x, y, z});
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].unit_id == "u0");
  CHECK(recs[1].winner == "cand-b");
}

TEST_CASE("score_candidate uses one reformat retry") {
  auto stub = std::make_shared<llm::StubTransport>([](const llm::Messages& m) {
    return m.size() > 2 ? block("7", "6", "9") : std::string("Looks good, 9/10.");
  });
  auto c = client(stub);
  auto s = score_candidate(*c, candidate("qwen"), bank_unit(), Scale::curation_1_to_10, 1);
  CHECK(s.correctness == 7);
  CHECK(s.judge_model == "judge-model");
  CHECK(s.candidate_id == candidate("qwen").candidate_id);
  CHECK(stub->calls() == 2);

  auto bad = std::make_shared<llm::StubTransport>([](const llm::Messages&) { return block("12", "1", "1"); });
  auto bc = client(bad);
  CHECK_ERROR_KIND(score_candidate(*bc, candidate("qwen"), bank_unit(), Scale::curation_1_to_10),
                   "ScoreOutOfRange");
  CHECK(bad->calls() == 2);
}

TEST_CASE("score_batch preserves order and bounds in-flight calls") {
  auto stub = std::make_shared<llm::StubTransport>([](const llm::Messages&) { return block("3", "3", "3"); });
  stub->set_delay(std::chrono::milliseconds(20));
  auto c = client(stub, 2);
  auto unit = bank_unit();
  std::vector<JudgeItem> items;
  for (int i = 0; i < 8; ++i) {
    auto cand = candidate("gen" + std::to_string(i));
    items.push_back({cand, &unit, std::nullopt});
  }
  auto scores = score_batch(*c, items, Scale::likert_1_to_4);
  REQUIRE(scores.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(scores[static_cast<std::size_t>(i)].candidate_id == items[i].candidate.candidate_id);
  CHECK(stub->max_concurrent() <= 2);
  CHECK(stub->max_concurrent() >= 1);
}

TEST_CASE("score and selection json round trips") {
  auto s = scored("genA", 9, 8, 10);
  auto back = scored_from_json(json::parse(scored_to_json(s).dump()));
  CHECK(back.score == s.score);
  CHECK(back.generator_id == "genA");
  auto bad = score_to_json(s.score);
  bad["correctness"] = 11;
  CHECK_ERROR_KIND(score_from_json(bad), "ScoreOutOfRange");

  auto rec = select_best({scored("genA", 9, 9, 9), scored("genB", 1, 2, 3)});
  CHECK(selection_from_json(json::parse(selection_to_json(rec).dump())) == rec);
}
