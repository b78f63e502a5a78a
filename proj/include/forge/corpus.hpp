#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "forge/util.hpp"

namespace forge::corpus {

struct SourceFile {
  std::string path;
  std::string filename;
  std::string content;
  std::size_t byte_len = 0;
};

enum class TokenCategory { keyword, identifier, number, string_literal, op, punctuation };

std::string_view to_string(TokenCategory c);

struct Token {
  std::string lexeme;
  TokenCategory category;
  int line = 1;
  int col = 1;
  std::size_t offset = 0;  // byte offset into the lexed source

  bool is(TokenCategory c, std::string_view text) const { return category == c && lexeme == text; }
  bool operator==(const Token&) const = default;
};

enum class UnitKind { contract, library, interface, abstract_contract };

std::string_view to_string(UnitKind k);
UnitKind unit_kind_from_string(std::string_view s);

struct ContractUnit {
  std::string unit_id;
  std::string origin_path;
  std::string filename;
  UnitKind kind = UnitKind::contract;
  std::string name;
  std::string source;
  std::vector<Token> tokens;
  std::set<std::string> token_set;

  int line_count() const;
};

struct ReportEntry {
  std::string path;
  std::string kind;  // DecodeError, NoUnitsFound, UnbalancedBraces, ...
  std::string detail;
};

struct IngestResult {
  std::vector<SourceFile> files;
  std::vector<ReportEntry> errors;
};

// Recursively collects files under root whose basename matches glob
// (fnmatch syntax), sorted by path. Invalid UTF-8 files go to errors.
IngestResult ingest_directory(const std::filesystem::path& root, const std::string& glob = "*.sol");

// Throws Error{UnterminatedString|UnterminatedComment} with the 1-based line
// where the literal or comment opened.
std::vector<Token> lex_solidity(std::string_view source);

bool is_reserved_word(std::string_view word);

struct DecomposeResult {
  std::vector<ContractUnit> units;
  std::vector<ReportEntry> report;
};

// Splits a file into its top-level contract/library/interface/abstract
// contract definitions. Prologue lines (pragma, import) are dropped.
DecomposeResult decompose_units(const SourceFile& file);

// Rebuilds a unit (id, tokens, token set, name) from persisted fields.
ContractUnit make_unit(std::string origin_path, std::string filename, UnitKind kind, std::string source);

std::map<std::string, std::vector<ContractUnit>> group_by_filename(const std::vector<ContractUnit>& units);

json unit_to_json(const ContractUnit& u);
ContractUnit unit_from_json(const json& j);

std::vector<ContractUnit> load_units(const std::filesystem::path& path);
void save_units(const std::filesystem::path& path, const std::vector<ContractUnit>& units);

}  // namespace forge::corpus
