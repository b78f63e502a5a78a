#include "forge/annotate.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::annotate;

namespace {

corpus::ContractUnit thirty_line_unit() {
  std::string src = "contract Vault {\n";
  for (int i = 2; i < 30; ++i) src += "  uint256 v" + std::to_string(i) + ";\n";
  src += "}";
  return corpus::make_unit("p/Vault.sol", "Vault.sol", corpus::UnitKind::contract, src);
}

std::shared_ptr<llm::ChatClient> client_for(std::shared_ptr<llm::StubTransport> stub, const std::string& model) {
  llm::EndpointConfig cfg;
  cfg.base_url = "stub://" + model;
  cfg.model_name = model;
  cfg.retry_limit = 0;
  return std::make_shared<llm::ChatClient>(cfg, stub);
}

const std::string kVulnerable =
    "Analysis follows.\n```result\nlabel: VULNERABLE\nexplanation: The external call happens before the\n"
    "balance update.\nlocations: L12-L14\n```\n";

}  // namespace

TEST_CASE("templates carry the per-type checklists") {
  auto has = [](VulnType t, std::initializer_list<const char*> items) {
    const auto& c = template_for(t).checklist;
    for (auto* it : items) CHECK_MESSAGE(std::find(c.begin(), c.end(), it) != c.end(), it);
  };
  has(VulnType::reentrancy, {"call.value usage", "operation order", "external calls", "access control",
                             "internal function implementation"});
  has(VulnType::timestamp_dependency, {"block.timestamp or now usage", "time constraints in critical operations",
                                       "miner manipulation", "time precision"});
  has(VulnType::delegatecall, {"delegatecall usage", "context preservation", "state variable manipulation",
                               "access control", "internal function implementation"});
  has(VulnType::integer_overflow_underflow,
      {"arithmetic on uint variables", "SafeMath or 0.8.x checks", "unchecked keyword",
       "critical-operation arithmetic", "type conversion and large numbers"});
}

TEST_CASE("build_prompt embeds checklist and numbered code for every type") {
  auto unit = thirty_line_unit();
  for (auto t : kAllVulnTypes) {
    auto msgs = build_prompt(template_for(t), unit, std::nullopt);
    REQUIRE(msgs.size() == 2);
    CHECK(msgs[0].role == llm::Role::system);
    CHECK(msgs[1].role == llm::Role::user);
    for (const auto& item : template_for(t).checklist) CHECK(msgs[1].content.find(item) != std::string::npos);
    CHECK(msgs[1].content.find("   1 | contract Vault {") != std::string::npos);
    CHECK(msgs[1].content.find("  30 | }") != std::string::npos);
    CHECK(msgs[1].content.find("```result") != std::string::npos);
  }
  auto re = build_prompt(template_for(VulnType::reentrancy), unit, std::nullopt);
  CHECK(re[1].content.find("operation order") != std::string::npos);
}

TEST_CASE("label-guided and detection prompts differ") {
  auto unit = thirty_line_unit();
  auto guided = build_prompt(template_for(VulnType::reentrancy), unit, 1)[1].content;
  CHECK(guided.find("Ground-truth label: VULNERABLE") != std::string::npos);
  CHECK(guided.find("labeled vulnerable") != std::string::npos);
  auto safe = build_prompt(template_for(VulnType::reentrancy), unit, 0)[1].content;
  CHECK(safe.find("Ground-truth label: SAFE") != std::string::npos);
  auto detect = build_prompt(template_for(VulnType::reentrancy), unit, std::nullopt)[1].content;
  CHECK(detect.find("Ground-truth") == std::string::npos);
  CHECK(detect.find("Decide whether") != std::string::npos);
}

TEST_CASE("parse_annotation extracts label, explanation and locations") {
  auto unit = thirty_line_unit();
  auto p = parse_annotation(kVulnerable, unit);
  CHECK(p.label == 1);
  CHECK(p.explanation == "The external call happens before the\nbalance update.");
  REQUIRE(p.locations.size() == 1);
  CHECK(p.locations[0].line_start == 12);
  CHECK(p.locations[0].line_end == 14);
  CHECK(p.locations[0].snippet == "uint256 v12; uint256 v13; uint256 v14;");

  auto safe = parse_annotation("```result\nlabel: SAFE\nexplanation: fine\nlocations:\n```", unit);
  CHECK(safe.label == 0);
  CHECK(safe.locations.empty());

  auto numeric = parse_annotation("```result\nlabel: 1\nexplanation: x\nlocations: 3-4, L7\n```", unit);
  CHECK(numeric.label == 1);
  REQUIRE(numeric.locations.size() == 2);
  CHECK(numeric.locations[1].line_start == 7);
  CHECK(numeric.locations[1].line_end == 7);
}

TEST_CASE("parse_annotation errors") {
  auto unit = thirty_line_unit();
  CHECK_ERROR_KIND(parse_annotation("The contract is vulnerable.", unit), "MissingBlock");
  CHECK_ERROR_KIND(parse_annotation("```result\nlabel: SAFE\n", unit), "MissingBlock");
  CHECK_ERROR_KIND(parse_annotation("```result\nexplanation: x\n```", unit), "MissingBlock");
  CHECK_ERROR_KIND(parse_annotation("```result\nlabel: MAYBE\nexplanation: x\n```", unit), "BadLabelValue");
  CHECK_ERROR_KIND(parse_annotation("```result\nlabel: VULNERABLE\nexplanation: x\nlocations: 99-100\n```", unit),
                   "LocationOutOfRange");
  CHECK_ERROR_KIND(parse_annotation("```result\nlabel: VULNERABLE\nexplanation: x\nlocations: 9-3\n```", unit),
                   "BadLocation");
  CHECK_ERROR_KIND(parse_annotation("```result\nlabel: VULNERABLE\nexplanation: x\nlocations:\n```", unit),
                   "MissingLocations");
}

TEST_CASE("generate_candidates with two parseable generators") {
  auto unit = thirty_line_unit();
  auto stub = std::make_shared<llm::StubTransport>([](const llm::Messages&) { return kVulnerable; });
  std::vector<Generator> gens = {{"qwen", client_for(stub, "qwen")}, {"mistral", client_for(stub, "mistral")}};
  auto cands = generate_candidates(unit, VulnType::reentrancy, gens, 1);
  REQUIRE(cands.size() == 2);
  CHECK(cands[0].generator_id == "mistral");
  CHECK(cands[1].generator_id == "qwen");
  CHECK(cands[0].candidate_id != cands[1].candidate_id);
  CHECK(cands[0].attempts == 1);
  CHECK(cands[0].raw_response == kVulnerable);
}

TEST_CASE("generate_candidates performs exactly one reformat retry") {
  auto unit = thirty_line_unit();
  int calls = 0;
  auto stub = std::make_shared<llm::StubTransport>([&](const llm::Messages& m) {
    ++calls;
    return m.size() > 2 ? kVulnerable : std::string("It is vulnerable, trust me.");
  });
  std::vector<Generator> gens = {{"qwen", client_for(stub, "qwen")}};
  auto cands = generate_candidates(unit, VulnType::reentrancy, gens, 1);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].attempts == 2);
  CHECK(calls == 2);
  auto req = stub->bodies().back()["messages"];
  REQUIRE(req.size() == 4);
  CHECK(req[2]["role"] == "assistant");
  CHECK(req[3]["content"] == reformat_request());
}

TEST_CASE("generate_candidates fails when every generator stays malformed") {
  auto unit = thirty_line_unit();
  auto stub = std::make_shared<llm::StubTransport>([](const llm::Messages&) { return std::string("prose"); });
  std::vector<Generator> gens = {{"a", client_for(stub, "a")}, {"b", client_for(stub, "b")}};
  std::vector<GenerationFailure> failures;
  CHECK_ERROR_KIND(generate_candidates(unit, VulnType::reentrancy, gens, 1, &failures), "AllGeneratorsFailed");
  CHECK(failures.size() == 2);
  CHECK(stub->calls() == 4);
}

TEST_CASE("one failing generator does not sink the others") {
  auto unit = thirty_line_unit();
  auto good = std::make_shared<llm::StubTransport>([](const llm::Messages&) { return kVulnerable; });
  auto bad = std::make_shared<llm::StubTransport>();  // no responses: HTTP 500
  std::vector<Generator> gens = {{"good", client_for(good, "good")}, {"bad", client_for(bad, "bad")}};
  std::vector<GenerationFailure> failures;
  auto cands = generate_candidates(unit, VulnType::reentrancy, gens, 1, &failures);
  CHECK(cands.size() == 1);
  REQUIRE(failures.size() == 1);
  CHECK(failures[0].generator_id == "bad");
}

TEST_CASE("candidate json round trip and location validity") {
  auto unit = thirty_line_unit();
  auto stub = std::make_shared<llm::StubTransport>([](const llm::Messages&) { return kVulnerable; });
  auto c = generate_candidates(unit, VulnType::reentrancy, {{"qwen", client_for(stub, "qwen")}}, 1)[0];
  auto back = candidate_from_json(json::parse(candidate_to_json(c).dump()));
  CHECK(back == c);
  for (const auto& l : back.locations) {
    CHECK(l.line_start <= l.line_end);
    CHECK(l.snippet == snippet_for(unit, l.line_start, l.line_end));
  }
}
