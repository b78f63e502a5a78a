#include "forge/corpus.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <array>
#include <unordered_set>

#include "forge/error.hpp"

namespace forge::corpus {

namespace fs = std::filesystem;

std::string_view to_string(TokenCategory c) {
  switch (c) {
    case TokenCategory::keyword: return "keyword";
    case TokenCategory::identifier: return "identifier";
    case TokenCategory::number: return "number";
    case TokenCategory::string_literal: return "string_literal";
    case TokenCategory::op: return "operator";
    case TokenCategory::punctuation: return "punctuation";
  }
  return "?";
}

std::string_view to_string(UnitKind k) {
  switch (k) {
    case UnitKind::contract: return "contract";
    case UnitKind::library: return "library";
    case UnitKind::interface: return "interface";
    case UnitKind::abstract_contract: return "abstract_contract";
  }
  return "?";
}

UnitKind unit_kind_from_string(std::string_view s) {
  if (s == "contract") return UnitKind::contract;
  if (s == "library") return UnitKind::library;
  if (s == "interface") return UnitKind::interface;
  if (s == "abstract_contract") return UnitKind::abstract_contract;
  throw Error("BadUnitKind", std::string(s));
}

int ContractUnit::line_count() const { return static_cast<int>(split_lines(source).size()); }

// ---------------------------------------------------------------------------
// Lexer

namespace {

const std::unordered_set<std::string_view>& reserved_words() {
  static const std::unordered_set<std::string_view> words = [] {
    std::unordered_set<std::string_view> w = {
        "abstract", "address", "anonymous", "as", "assembly", "assert", "bool", "break",
        "byte", "bytes", "calldata", "catch", "constant", "constructor", "continue",
        "contract", "delete", "do", "else", "emit", "enum", "error", "ether", "event",
        "external", "fallback", "false", "finney", "fixed", "for", "function", "gwei",
        "hours", "if", "immutable", "import", "indexed", "interface", "internal", "is",
        "library", "mapping", "memory", "minutes", "modifier", "new", "override",
        "payable", "pragma", "private", "public", "pure", "receive", "require", "return",
        "returns", "revert", "seconds", "storage", "string", "struct", "szabo", "throw",
        "true", "try", "type", "ufixed", "unchecked", "using", "var", "view", "virtual",
        "weeks", "wei", "while", "days", "years", "int", "uint", "selfdestruct",
        "suicide"};
    return w;
  }();
  return words;
}

bool is_sized_type(std::string_view w) {
  auto digits_ok = [](std::string_view d, int step, int lo, int hi) {
    if (d.empty() || d.size() > 3) return false;
    for (char c : d)
      if (c < '0' || c > '9') return false;
    if (d[0] == '0') return false;
    int n = std::stoi(std::string(d));
    return n >= lo && n <= hi && n % step == 0;
  };
  if (w.starts_with("uint")) return digits_ok(w.substr(4), 8, 8, 256);
  if (w.starts_with("int")) return digits_ok(w.substr(3), 8, 8, 256);
  if (w.starts_with("bytes")) return digits_ok(w.substr(5), 1, 1, 32);
  return false;
}

bool ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == '$';
}
bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Longest match first.
constexpr std::array<std::string_view, 31> kOperators = {
    ">>>=", ">>>", ">>=", "<<=", "**", "==", "!=", "<=", ">=", "&&", "||",
    "++", "--", "+=", "-=", "*=", "/=", "%=", "|=", "&=", "^=", "<<",
    ">>", "=>", "->", ":=", "+", "-", "*", "/", "%"};
constexpr std::string_view kSingleOps = "=<>!&|^~?.:";
constexpr std::string_view kPunct = "(){}[];,";

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') {
        advance(1);
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
        advance(1);
      } else if (c == '/' && peek(1) == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance(1);
      } else if (c == '/' && peek(1) == '*') {
        block_comment();
      } else if (c == '"' || c == '\'') {
        string_literal(pos_, line_, col_);
      } else if (ident_start(c)) {
        identifier();
      } else if (is_digit(c) || (c == '.' && is_digit(peek(1)))) {
        number();
      } else {
        symbol();
      }
    }
    return std::move(out_);
  }

 private:
  char peek(std::size_t k) const { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; }

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos_ < src_.size(); ++i) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  void emit(TokenCategory cat, std::size_t start, int line, int col) {
    out_.push_back(Token{std::string(src_.substr(start, pos_ - start)), cat, line, col, start});
  }

  void block_comment() {
    int open_line = line_;
    advance(2);
    while (pos_ < src_.size()) {
      if (src_[pos_] == '*' && peek(1) == '/') {
        advance(2);
        return;
      }
      advance(1);
    }
    throw Error("UnterminatedComment", "line " + std::to_string(open_line));
  }

  // Consumes a quoted literal starting at pos_; start/line/col mark the
  // token start (which precedes the quote for hex"..." and unicode"...").
  void string_literal(std::size_t start, int line, int col) {
    char quote = src_[pos_];
    advance(1);
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') {
        throw Error("UnterminatedString", "line " + std::to_string(line));
      }
      char c = src_[pos_];
      if (c == '\\') {
        if (pos_ + 1 >= src_.size()) throw Error("UnterminatedString", "line " + std::to_string(line));
        advance(2);
        continue;
      }
      advance(1);
      if (c == quote) break;
    }
    emit(TokenCategory::string_literal, start, line, col);
  }

  void identifier() {
    std::size_t start = pos_;
    int line = line_, col = col_;
    while (pos_ < src_.size() && ident_char(src_[pos_])) advance(1);
    std::string_view word = src_.substr(start, pos_ - start);
    if ((word == "hex" || word == "unicode") && pos_ < src_.size() &&
        (src_[pos_] == '"' || src_[pos_] == '\'')) {
      string_literal(start, line, col);
      return;
    }
    emit(is_reserved_word(word) ? TokenCategory::keyword : TokenCategory::identifier, start, line, col);
  }

  void number() {
    std::size_t start = pos_;
    int line = line_, col = col_;
    if (src_[pos_] == '0' && (peek(1) == 'x' || peek(1) == 'X')) {
      advance(2);
      while (pos_ < src_.size() && (std::isxdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        advance(1);
    } else {
      while (pos_ < src_.size() && (is_digit(src_[pos_]) || src_[pos_] == '_')) advance(1);
      if (pos_ < src_.size() && src_[pos_] == '.' && is_digit(peek(1))) {
        advance(1);
        while (pos_ < src_.size() && (is_digit(src_[pos_]) || src_[pos_] == '_')) advance(1);
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        std::size_t k = 1;
        if (peek(1) == '-') k = 2;
        if (is_digit(peek(k))) {
          advance(k);
          while (pos_ < src_.size() && is_digit(src_[pos_])) advance(1);
        }
      }
    }
    emit(TokenCategory::number, start, line, col);
  }

  void symbol() {
    std::size_t start = pos_;
    int line = line_, col = col_;
    for (auto op : kOperators) {
      if (src_.substr(pos_, op.size()) == op) {
        advance(op.size());
        emit(TokenCategory::op, start, line, col);
        return;
      }
    }
    char c = src_[pos_];
    if (kSingleOps.find(c) != std::string_view::npos) {
      advance(1);
      emit(TokenCategory::op, start, line, col);
      return;
    }
    // Brackets and separators, plus any stray character (including a whole
    // multi-byte UTF-8 sequence) so that every non-blank byte is covered.
    std::size_t len = 1;
    auto uc = static_cast<unsigned char>(c);
    if (kPunct.find(c) == std::string_view::npos && uc >= 0x80) {
      if ((uc & 0xe0) == 0xc0) len = 2;
      else if ((uc & 0xf0) == 0xe0) len = 3;
      else if ((uc & 0xf8) == 0xf0) len = 4;
      len = std::min(len, src_.size() - pos_);
    }
    pos_ += len;
    col_ += 1;
    emit(TokenCategory::punctuation, start, line, col);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::vector<Token> out_;
};

}  // namespace

bool is_reserved_word(std::string_view word) {
  return reserved_words().contains(word) || is_sized_type(word);
}

std::vector<Token> lex_solidity(std::string_view source) { return Lexer(source).run(); }

// ---------------------------------------------------------------------------
// Units

ContractUnit make_unit(std::string origin_path, std::string filename, UnitKind kind, std::string source) {
  ContractUnit u;
  u.unit_id = sha256_hex(source);
  u.origin_path = std::move(origin_path);
  u.filename = std::move(filename);
  u.kind = kind;
  u.source = std::move(source);
  u.tokens = lex_solidity(u.source);
  for (const auto& t : u.tokens) u.token_set.insert(t.lexeme);
  for (std::size_t i = 0; i + 1 < u.tokens.size(); ++i) {
    const auto& t = u.tokens[i];
    if (t.category == TokenCategory::keyword &&
        (t.lexeme == "contract" || t.lexeme == "library" || t.lexeme == "interface") &&
        u.tokens[i + 1].category == TokenCategory::identifier) {
      u.name = u.tokens[i + 1].lexeme;
      break;
    }
  }
  return u;
}

DecomposeResult decompose_units(const SourceFile& file) {
  DecomposeResult result;
  const auto tokens = lex_solidity(file.content);
  int depth = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t.is(TokenCategory::punctuation, "{")) {
      ++depth;
      continue;
    }
    if (t.is(TokenCategory::punctuation, "}")) {
      if (--depth < 0) throw Error("UnbalancedBraces", "line " + std::to_string(t.line));
      continue;
    }
    if (depth != 0 || t.category != TokenCategory::keyword) continue;

    UnitKind kind;
    std::size_t start_tok = i;
    if (t.lexeme == "abstract" && i + 1 < tokens.size() && tokens[i + 1].is(TokenCategory::keyword, "contract")) {
      kind = UnitKind::abstract_contract;
      ++i;
    } else if (t.lexeme == "contract") {
      kind = UnitKind::contract;
    } else if (t.lexeme == "library") {
      kind = UnitKind::library;
    } else if (t.lexeme == "interface") {
      kind = UnitKind::interface;
    } else {
      continue;
    }

    std::size_t j = i + 1;
    while (j < tokens.size() && !tokens[j].is(TokenCategory::punctuation, "{")) ++j;
    if (j == tokens.size()) throw Error("UnbalancedBraces", "line " + std::to_string(t.line));
    int unit_depth = 0;
    for (; j < tokens.size(); ++j) {
      if (tokens[j].is(TokenCategory::punctuation, "{")) ++unit_depth;
      else if (tokens[j].is(TokenCategory::punctuation, "}") && --unit_depth == 0) break;
    }
    if (j == tokens.size()) throw Error("UnbalancedBraces", "line " + std::to_string(t.line));

    std::size_t begin = tokens[start_tok].offset;
    std::size_t end = tokens[j].offset + 1;
    result.units.push_back(make_unit(file.path, file.filename, kind, file.content.substr(begin, end - begin)));
    i = j;
  }
  if (depth != 0) throw Error("UnbalancedBraces", "line " + std::to_string(tokens.back().line));
  if (result.units.empty()) result.report.push_back({file.path, "NoUnitsFound", "no top-level definitions"});
  return result;
}

// ---------------------------------------------------------------------------
// Ingestion

IngestResult ingest_directory(const fs::path& root, const std::string& glob) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error("RootNotFound", root.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    auto name = entry.path().filename().string();
    if (::fnmatch(glob.c_str(), name.c_str(), 0) == 0) paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());

  IngestResult result;
  for (const auto& p : paths) {
    std::string content = read_file(p);
    if (!is_valid_utf8(content)) {
      result.errors.push_back({p.string(), "DecodeError", "invalid UTF-8"});
      continue;
    }
    SourceFile f;
    f.path = p.string();
    f.filename = p.filename().string();
    f.byte_len = content.size();
    f.content = std::move(content);
    result.files.push_back(std::move(f));
  }
  return result;
}

std::map<std::string, std::vector<ContractUnit>> group_by_filename(const std::vector<ContractUnit>& units) {
  std::map<std::string, std::vector<ContractUnit>> groups;
  for (const auto& u : units) groups[u.filename].push_back(u);
  return groups;
}

json unit_to_json(const ContractUnit& u) {
  return json{{"unit_id", u.unit_id},
              {"origin_path", u.origin_path},
              {"filename", u.filename},
              {"kind", std::string(to_string(u.kind))},
              {"source", u.source}};
}

ContractUnit unit_from_json(const json& j) {
  auto u = make_unit(j.at("origin_path").get<std::string>(), j.at("filename").get<std::string>(),
                     unit_kind_from_string(j.at("kind").get<std::string>()), j.at("source").get<std::string>());
  if (j.contains("unit_id") && j["unit_id"].get<std::string>() != u.unit_id) {
    throw Error("UnitIdMismatch", j["unit_id"].get<std::string>());
  }
  return u;
}

std::vector<ContractUnit> load_units(const fs::path& path) {
  std::vector<ContractUnit> units;
  for (const auto& row : read_jsonl(path)) units.push_back(unit_from_json(row));
  return units;
}

void save_units(const fs::path& path, const std::vector<ContractUnit>& units) {
  std::vector<json> rows;
  rows.reserve(units.size());
  for (const auto& u : units) rows.push_back(unit_to_json(u));
  write_file_atomic(path, to_jsonl(rows));
}

}  // namespace forge::corpus
