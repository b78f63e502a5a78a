#include "forge/patterns.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "forge/error.hpp"

namespace forge {

std::string_view to_string(VulnType t) {
  switch (t) {
    case VulnType::reentrancy: return "reentrancy";
    case VulnType::timestamp_dependency: return "timestamp_dependency";
    case VulnType::integer_overflow_underflow: return "integer_overflow_underflow";
    case VulnType::delegatecall: return "delegatecall";
  }
  return "?";
}

std::string_view short_code(VulnType t) {
  switch (t) {
    case VulnType::reentrancy: return "RE";
    case VulnType::timestamp_dependency: return "TD";
    case VulnType::integer_overflow_underflow: return "IO";
    case VulnType::delegatecall: return "DE";
  }
  return "?";
}

VulnType vuln_type_from_string(std::string_view s) {
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (auto t : kAllVulnTypes) {
    std::string code(short_code(t));
    std::transform(code.begin(), code.end(), code.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == to_string(t) || lower == code) return t;
  }
  if (lower == "timestamp") return VulnType::timestamp_dependency;
  if (lower == "overflow" || lower == "integer_overflow") return VulnType::integer_overflow_underflow;
  throw Error("BadVulnType", std::string(s));
}

}  // namespace forge

namespace forge::patterns {

using corpus::Token;
using corpus::TokenCategory;

std::vector<std::string_view> features_for(VulnType t) {
  switch (t) {
    case VulnType::reentrancy: return {kCallValue, kCallBraceValue};
    case VulnType::timestamp_dependency: return {kBlockTimestamp, kNow};
    case VulnType::delegatecall: return {kDelegatecall};
    case VulnType::integer_overflow_underflow: return {kArithmetic, kSafeMathAbsent};
  }
  return {};
}

namespace {

bool is_ident(const Token& t, std::string_view s) { return t.is(TokenCategory::identifier, s); }
bool is_op(const Token& t, std::string_view s) { return t.is(TokenCategory::op, s); }

bool is_int_type(const Token& t) {
  if (t.category != TokenCategory::keyword) return false;
  std::string_view w = t.lexeme;
  return w == "uint" || w == "int" || ((w.starts_with("uint") || w.starts_with("int")) && w.size() > 3 &&
                                       std::isdigit(static_cast<unsigned char>(w.back())));
}

bool is_arith(const Token& t) {
  static const std::set<std::string_view> ops = {"+", "-", "*", "+=", "-=", "*=", "++", "--", "**"};
  return t.category == TokenCategory::op && ops.contains(t.lexeme);
}

bool is_statement_break(const Token& t) {
  return t.category == TokenCategory::punctuation && (t.lexeme == ";" || t.lexeme == "{" || t.lexeme == "}");
}

struct Statement {
  std::size_t begin, end;  // [begin, end) into tokens
};

std::vector<Statement> statements(const std::vector<Token>& toks) {
  std::vector<Statement> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (is_statement_break(toks[i])) {
      if (i > start) out.push_back({start, i});
      start = i + 1;
    }
  }
  if (start < toks.size()) out.push_back({start, toks.size()});
  return out;
}

// Names declared with an integer type anywhere in the unit: the identifier
// that closes a declarator (followed by ; = , ) or a statement break) in a
// statement that mentions an integer type.
std::set<std::string> integer_names(const std::vector<Token>& toks, const std::vector<Statement>& stmts) {
  std::set<std::string> names;
  for (const auto& s : stmts) {
    bool has_int = false;
    for (std::size_t i = s.begin; i < s.end; ++i) has_int |= is_int_type(toks[i]);
    if (!has_int) continue;
    for (std::size_t i = s.begin; i < s.end; ++i) {
      if (toks[i].category != TokenCategory::identifier) continue;
      if (i > 0 && is_op(toks[i - 1], ".")) continue;
      bool closes = i + 1 >= s.end;
      if (!closes) {
        const auto& n = toks[i + 1];
        closes = n.lexeme == "=" || n.lexeme == "," || n.lexeme == ")" || n.lexeme == ";";
      }
      if (closes) names.insert(toks[i].lexeme);
    }
  }
  return names;
}

void add_hit(std::vector<CandidateHit>& hits, const corpus::ContractUnit& unit, VulnType type,
             std::string_view feature, std::vector<int> lines) {
  std::sort(lines.begin(), lines.end());
  lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
  hits.push_back({unit.unit_id, type, std::string(feature), std::move(lines)});
}

}  // namespace

std::vector<CandidateHit> extract_candidates(const corpus::ContractUnit& unit, VulnType type) {
  const auto& t = unit.tokens;
  const std::size_t n = t.size();
  std::vector<CandidateHit> hits;
  auto at = [&](std::size_t i) -> const Token* { return i < n ? &t[i] : nullptr; };

  switch (type) {
    case VulnType::reentrancy:
      for (std::size_t i = 0; i < n; ++i) {
        if (is_ident(t[i], "call") && at(i + 2) && is_op(t[i + 1], ".") && is_ident(t[i + 2], "value")) {
          add_hit(hits, unit, type, kCallValue, {t[i].line});
        } else if (is_ident(t[i], "call") && i > 0 && is_op(t[i - 1], ".") && at(i + 3) &&
                   t[i + 1].is(TokenCategory::punctuation, "{") && is_ident(t[i + 2], "value") &&
                   is_op(t[i + 3], ":")) {
          add_hit(hits, unit, type, kCallBraceValue, {t[i].line});
        }
      }
      break;

    case VulnType::timestamp_dependency:
      for (std::size_t i = 0; i < n; ++i) {
        if (is_ident(t[i], "block") && at(i + 2) && is_op(t[i + 1], ".") && is_ident(t[i + 2], "timestamp")) {
          add_hit(hits, unit, type, kBlockTimestamp, {t[i].line});
        } else if (is_ident(t[i], "now") && !(i > 0 && is_op(t[i - 1], "."))) {
          add_hit(hits, unit, type, kNow, {t[i].line});
        }
      }
      break;

    case VulnType::delegatecall:
      for (std::size_t i = 1; i < n; ++i) {
        if (is_ident(t[i], "delegatecall") && is_op(t[i - 1], ".")) {
          add_hit(hits, unit, type, kDelegatecall, {t[i].line});
        }
      }
      break;

    case VulnType::integer_overflow_underflow: {
      auto stmts = statements(t);
      auto ints = integer_names(t, stmts);
      std::vector<int> arith_lines;
      for (const auto& s : stmts) {
        bool involves_int = false;
        std::vector<int> lines;
        for (std::size_t i = s.begin; i < s.end; ++i) {
          involves_int |= is_int_type(t[i]) ||
                          (t[i].category == TokenCategory::identifier && ints.contains(t[i].lexeme));
          if (is_arith(t[i])) lines.push_back(t[i].line);
        }
        if (involves_int && !lines.empty()) {
          arith_lines.insert(arith_lines.end(), lines.begin(), lines.end());
          add_hit(hits, unit, type, kArithmetic, std::move(lines));
        }
      }
      bool uses_safemath = std::any_of(t.begin(), t.end(), [](const Token& tok) { return is_ident(tok, "SafeMath"); });
      if (!arith_lines.empty() && !uses_safemath) add_hit(hits, unit, type, kSafeMathAbsent, arith_lines);
      break;
    }
  }
  return hits;
}

int rule_label(const corpus::ContractUnit& unit, VulnType type) {
  return extract_candidates(unit, type).empty() ? 0 : 1;
}

json hit_to_json(const CandidateHit& h) {
  return json{{"unit_id", h.unit_id},
              {"vuln_type", std::string(to_string(h.vuln_type))},
              {"matched_feature", h.matched_feature},
              {"lines", h.lines}};
}

CandidateHit hit_from_json(const json& j) {
  return {j.at("unit_id").get<std::string>(), vuln_type_from_string(j.at("vuln_type").get<std::string>()),
          j.at("matched_feature").get<std::string>(), j.at("lines").get<std::vector<int>>()};
}

}  // namespace forge::patterns
