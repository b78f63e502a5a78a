#include <fstream>

#include "forge/corpus.hpp"
#include "forge/util.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::corpus;
using forge::testing::TempDir;

namespace {

void write(const std::filesystem::path& p, const std::string& s) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

SourceFile file_of(std::string content, std::string name = "F.sol") {
  return SourceFile{"/tmp/" + name, name, content, content.size()};
}

}  // namespace

TEST_CASE("lexer categorizes a declaration") {
  auto toks = lex_solidity("uint256 a = 1;");
  REQUIRE(toks.size() == 5);
  CHECK(toks[0].is(TokenCategory::keyword, "uint256"));
  CHECK(toks[1].is(TokenCategory::identifier, "a"));
  CHECK(toks[2].is(TokenCategory::op, "="));
  CHECK(toks[3].is(TokenCategory::number, "1"));
  CHECK(toks[4].is(TokenCategory::punctuation, ";"));
  CHECK(toks[1].line == 1);
  CHECK(toks[1].col == 9);
}

TEST_CASE("lexer strips comments") {
  auto toks = lex_solidity("// c\nx");
  REQUIRE(toks.size() == 1);
  CHECK(toks[0].is(TokenCategory::identifier, "x"));
  CHECK(toks[0].line == 2);

  toks = lex_solidity("a /* multi\nline */ b");
  REQUIRE(toks.size() == 2);
  CHECK(toks[1].line == 2);
}

TEST_CASE("lexer errors report the opening line") {
  CHECK_ERROR_KIND(lex_solidity("\"ab"), "UnterminatedString");
  CHECK_ERROR_KIND(lex_solidity("x\n/* never closed"), "UnterminatedComment");
  try {
    lex_solidity("a\nb\n'open\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("lexer keeps strings, member access and units intact") {
  auto toks = lex_solidity(R"(msg.sender.call.value(amount)(); s = "a // b"; x = hex"00ff"; t = 1 ether;)");
  std::vector<std::string> lex;
  for (auto& t : toks) lex.push_back(t.lexeme);
  CHECK(lex[0] == "msg");
  CHECK(lex[1] == ".");
  CHECK(toks[1].category == TokenCategory::op);
  CHECK(std::find(lex.begin(), lex.end(), "\"a // b\"") != lex.end());
  CHECK(std::find(lex.begin(), lex.end(), "hex\"00ff\"") != lex.end());
  auto ether = std::find_if(toks.begin(), toks.end(), [](auto& t) { return t.lexeme == "ether"; });
  REQUIRE(ether != toks.end());
  CHECK(ether->category == TokenCategory::keyword);

  auto dc = lex_solidity("target.delegatecall(data); require(now > start);");
  CHECK(dc[2].is(TokenCategory::identifier, "delegatecall"));
  CHECK(dc[7].is(TokenCategory::keyword, "require"));
  CHECK(dc[9].is(TokenCategory::identifier, "now"));
}

TEST_CASE("lexer multi-char operators and numbers") {
  auto toks = lex_solidity("a >>= 0x1F; b **= 2; c => 1e18; d != 3.5;");
  std::vector<std::string> lex;
  for (auto& t : toks) lex.push_back(t.lexeme);
  CHECK(lex[1] == ">>=");
  CHECK(lex[2] == "0x1F");
  CHECK(lex[5] == "**");
  CHECK(lex[6] == "=");
  CHECK(lex[10] == "=>");
  CHECK(lex[11] == "1e18");
  CHECK(lex[14] == "!=");
  CHECK(lex[15] == "3.5");
}

TEST_CASE("lexer coverage and determinism over generated sources") {
  const std::vector<std::string> code = {"contract", "foo", "_bar$", "42",      "0xAB", "\"s t r\"", "'q'",
                                         "+=",       "(",   ")",     "{",       "}",    ";",        ".",
                                         "uint8",    "=>",  "!",     "1.5e3",   "**",   "@",        "hex\"ab\""};
  const std::vector<std::string> gaps = {" ", "\n", "\t", " // note\n", " /* x\n y */ ", "\r\n"};
  SplitMix64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    std::string src, expected;
    int n = 1 + static_cast<int>(rng.below(40));
    for (int i = 0; i < n; ++i) {
      const auto& frag = code[rng.below(code.size())];
      src += frag;
      expected += frag;
      src += gaps[rng.below(gaps.size())];
    }
    auto a = lex_solidity(src);
    auto b = lex_solidity(src);
    CHECK(a == b);
    std::string joined;
    for (auto& t : a) {
      CHECK(!t.lexeme.empty());
      CHECK(src.substr(t.offset, t.lexeme.size()) == t.lexeme);
      joined += t.lexeme;
    }
    CHECK(joined == expected);
  }
}

TEST_CASE("decompose_units splits libraries and contracts") {
  auto r = decompose_units(file_of(
      "pragma solidity ^0.4.24;\nimport \"./X.sol\";\n"
      "library SafeMath {\n  function add(uint a, uint b) internal pure returns (uint) { return a + b; }\n}\n"
      "contract Token {\n  mapping(address => uint) balances;\n}\n"));
  REQUIRE(r.units.size() == 2);
  CHECK(r.units[0].kind == UnitKind::library);
  CHECK(r.units[0].name == "SafeMath");
  CHECK(r.units[1].kind == UnitKind::contract);
  CHECK(r.units[1].source == "contract Token {\n  mapping(address => uint) balances;\n}");
  CHECK(r.units[1].filename == "F.sol");
  CHECK(r.report.empty());
}

TEST_CASE("decompose_units single contract, abstract and interface kinds") {
  std::string body = "contract A is B {\n  function f() public {}\n}";
  auto r = decompose_units(file_of("pragma solidity 0.8.0;\n" + body + "\n"));
  REQUIRE(r.units.size() == 1);
  CHECK(r.units[0].source == body);

  r = decompose_units(file_of("abstract contract Base { }\ninterface IERC20 { function t() external; }"));
  REQUIRE(r.units.size() == 2);
  CHECK(r.units[0].kind == UnitKind::abstract_contract);
  CHECK(r.units[0].source == "abstract contract Base { }");
  CHECK(r.units[1].kind == UnitKind::interface);
}

TEST_CASE("decompose_units reports files without units and unbalanced braces") {
  auto r = decompose_units(file_of("pragma solidity ^0.8.0;"));
  CHECK(r.units.empty());
  REQUIRE(r.report.size() == 1);
  CHECK(r.report[0].kind == "NoUnitsFound");

  CHECK_ERROR_KIND(decompose_units(file_of("contract A {\n function f() {\n")), "UnbalancedBraces");
  CHECK_ERROR_KIND(decompose_units(file_of("}\ncontract A {}")), "UnbalancedBraces");
}

TEST_CASE("decomposition is lossless and non-overlapping") {
  std::string content =
      "pragma solidity ^0.5.0;\ncontract A { function f() { if (x) { y(); } } }\n// contract Fake {}\n"
      "library L { }\ncontract C { string s = \"contract D {\"; }\n";
  auto r = decompose_units(file_of(content));
  REQUIRE(r.units.size() == 3);
  std::size_t last_end = 0;
  for (auto& u : r.units) {
    auto pos = content.find(u.source, last_end);
    REQUIRE(pos != std::string::npos);
    CHECK(pos >= last_end);
    last_end = pos + u.source.size();
  }
  CHECK(r.units[2].name == "C");
}

TEST_CASE("unit ids are content hashes and survive a JSONL round trip") {
  auto a = make_unit("x/A.sol", "A.sol", UnitKind::contract, "contract A {}");
  auto b = make_unit("y/A.sol", "A.sol", UnitKind::contract, "contract A {}");
  CHECK(a.unit_id == b.unit_id);
  CHECK(a.unit_id.size() == 64);

  TempDir tmp;
  auto r = decompose_units(file_of("library L { }\ncontract C { uint x; }"));
  save_units(tmp / "units.jsonl", r.units);
  auto reloaded = load_units(tmp / "units.jsonl");
  REQUIRE(reloaded.size() == r.units.size());
  for (std::size_t i = 0; i < reloaded.size(); ++i) {
    CHECK(reloaded[i].unit_id == r.units[i].unit_id);
    CHECK(reloaded[i].tokens == r.units[i].tokens);
    CHECK(reloaded[i].token_set == r.units[i].token_set);
  }
  auto j = unit_to_json(r.units[0]);
  CHECK(!j.contains("tokens"));
}

TEST_CASE("token_set excludes comments") {
  auto a = make_unit("p", "A.sol", UnitKind::contract, "contract A { uint x; } // trailing note");
  auto b = make_unit("p", "A.sol", UnitKind::contract, "/* header */ contract A { uint x; }");
  CHECK(a.token_set == b.token_set);
  CHECK(!a.token_set.contains("note"));
}

TEST_CASE("group_by_filename partitions preserving order") {
  auto u1 = make_unit("1", "A", UnitKind::contract, "contract X1 {}");
  auto u2 = make_unit("2", "B", UnitKind::contract, "contract X2 {}");
  auto u3 = make_unit("3", "A", UnitKind::contract, "contract X3 {}");
  auto g = group_by_filename({u1, u2, u3});
  REQUIRE(g.size() == 2);
  REQUIRE(g["A"].size() == 2);
  CHECK(g["A"][0].origin_path == "1");
  CHECK(g["A"][1].origin_path == "3");
  CHECK(g["B"].size() == 1);
  CHECK(group_by_filename({}).empty());
  auto same = group_by_filename({u1, u3, u1});
  CHECK(same.size() == 1);
  CHECK(same["A"].size() == 3);
}

TEST_CASE("ingest_directory sorts, filters and reports decode errors") {
  TempDir tmp;
  write(tmp / "B.sol", "contract B {}");
  write(tmp / "A.sol", "contract A {}");
  write(tmp / "notes.txt", "ignore me");
  auto r = ingest_directory(tmp.path(), "*.sol");
  REQUIRE(r.files.size() == 2);
  CHECK(r.files[0].filename == "A.sol");
  CHECK(r.files[1].filename == "B.sol");
  CHECK(r.files[0].byte_len == 13);
  CHECK(r.errors.empty());

  TempDir empty;
  CHECK(ingest_directory(empty.path()).files.empty());

  TempDir mixed;
  write(mixed / "Bad.sol", std::string("contract \xff\xfe {}"));
  write(mixed / "sub/Good.sol", "contract G {}");
  r = ingest_directory(mixed.path());
  REQUIRE(r.files.size() == 1);
  CHECK(r.files[0].filename == "Good.sol");
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].kind == "DecodeError");

  CHECK_ERROR_KIND(ingest_directory(tmp / "missing"), "RootNotFound");
}

TEST_CASE("utf8 validation") {
  CHECK(is_valid_utf8("plain"));
  CHECK(is_valid_utf8("caf\xc3\xa9"));
  CHECK_FALSE(is_valid_utf8("\xc3"));
  CHECK_FALSE(is_valid_utf8("\xc0\xaf"));
  CHECK_FALSE(is_valid_utf8("\xed\xa0\x80"));
}
