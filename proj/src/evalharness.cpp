#include "forge/evalharness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "forge/error.hpp"

namespace forge::eval {

json record_to_json(const EvalRecord& r) {
  return json{{"unit_id", r.unit_id},     {"vuln_type", std::string(to_string(r.vuln_type))},
              {"gold", r.gold},           {"predicted", r.predicted},
              {"explanation", r.explanation}, {"system_id", r.system_id}};
}

EvalRecord record_from_json(const json& j) {
  EvalRecord r;
  r.unit_id = j.at("unit_id").get<std::string>();
  r.vuln_type = vuln_type_from_string(j.at("vuln_type").get<std::string>());
  r.gold = j.at("gold").get<int>();
  r.predicted = j.at("predicted").get<int>();
  r.explanation = j.value("explanation", "");
  r.system_id = j.at("system_id").get<std::string>();
  if ((r.gold != 0 && r.gold != 1) || (r.predicted != 0 && r.predicted != 1)) {
    throw Error("BadRecord", "gold/predicted must be 0 or 1 for " + r.unit_id);
  }
  return r;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::optional<int> keyword_value(const std::string& word) {
  if (word == "vulnerable") return 1;
  if (word == "safe") return 0;
  return std::nullopt;
}

std::optional<int> structured_label(const std::string& text) {
  for (const auto& raw_line : split_lines(text)) {
    std::string line = lower(trim(raw_line));
    std::size_t i = 0;
    while (i < line.size() && (line[i] == '*' || line[i] == '#' || line[i] == '>' || line[i] == '-' || line[i] == ' ')) ++i;
    line = line.substr(i);
    if (line.rfind("label", 0) != 0) continue;
    auto colon = line.find(':');
    if (colon == std::string::npos || trim(line.substr(5, colon - 5)).find_first_not_of("* ") != std::string::npos) {
      continue;
    }
    std::string value = line.substr(colon + 1);
    value.erase(std::remove(value.begin(), value.end(), '*'), value.end());
    value = trim(value);
    std::string word;
    for (char c : value) {
      if (!std::isalnum(static_cast<unsigned char>(c))) break;
      word.push_back(c);
    }
    if (word == "1") return 1;
    if (word == "0") return 0;
    if (auto v = keyword_value(word)) return v;
  }
  return std::nullopt;
}

}  // namespace

std::string truncate_repetition(const std::string& raw) {
  std::set<std::string> seen;
  std::size_t pos = 0;
  std::size_t para_start = std::string::npos;
  std::string para;
  auto close = [&]() -> bool {
    if (para_start == std::string::npos) return false;
    bool repeated = !seen.insert(para).second;
    para.clear();
    return repeated;
  };
  while (pos <= raw.size()) {
    auto nl = raw.find('\n', pos);
    std::size_t end = nl == std::string::npos ? raw.size() : nl;
    std::string_view line(raw.data() + pos, end - pos);
    if (blank(line)) {
      if (close()) return raw.substr(0, para_start);
      para_start = std::string::npos;
    } else {
      if (para_start == std::string::npos) para_start = pos;
      else para.push_back('\n');
      para.append(line);
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  if (close()) return raw.substr(0, para_start);
  return raw;
}

int parse_prediction(const std::string& raw) {
  std::string kept = truncate_repetition(raw);
  if (auto v = structured_label(kept)) return *v;
  std::string word;
  for (std::size_t i = 0; i <= kept.size(); ++i) {
    char c = i < kept.size() ? kept[i] : ' ';
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      if (auto v = keyword_value(word)) return *v;
      word.clear();
    }
  }
  throw Error("NoLabelFound", "no label in prediction");
}

ConfusionMatrix confusion(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw Error("EmptyInput", "no records");
  ConfusionMatrix cm;
  for (const auto& r : records) {
    if (r.gold == 1 && r.predicted == 1) ++cm.tp;
    else if (r.gold == 0 && r.predicted == 1) ++cm.fp;
    else if (r.gold == 1 && r.predicted == 0) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error("EmptyMatrix", "total is 0");
  auto d = [](std::uint64_t x) { return static_cast<double>(x); };
  Metrics m;
  m.accuracy.value = round_half_up(100.0 * d(cm.tp + cm.tn) / d(cm.total()), 2);
  double p = 0, r = 0;
  if (cm.tp + cm.fp == 0) {
    m.precision.undefined = true;
  } else {
    p = d(cm.tp) / d(cm.tp + cm.fp);
    m.precision.value = round_half_up(100.0 * p, 2);
  }
  if (cm.tp + cm.fn == 0) {
    m.recall.undefined = true;
  } else {
    r = d(cm.tp) / d(cm.tp + cm.fn);
    m.recall.value = round_half_up(100.0 * r, 2);
  }
  if (m.precision.undefined || m.recall.undefined || p + r == 0.0) {
    m.f1.undefined = true;
  } else {
    m.f1.value = round_half_up(100.0 * 2.0 * p * r / (p + r), 2);
  }
  return m;
}

double f1_raw(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double f1_from_percentages(double precision, double recall) { return round_half_up(f1_raw(precision, recall), 2); }

namespace {

std::string cell(const Metric& m) {
  if (m.undefined) return "--";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", m.value);
  return buf;
}

json metric_json(const Metric& m) { return m.undefined ? json(nullptr) : json(m.value); }

}  // namespace

MetricsTable metrics_table(const std::vector<EvalRecord>& records) {
  std::map<std::string, std::map<VulnType, std::vector<EvalRecord>>> groups;
  for (const auto& r : records) groups[r.system_id][r.vuln_type].push_back(r);

  MetricsTable out;
  json systems = json::array();
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"System"};
  for (auto t : kAllVulnTypes) {
    for (const char* k : {"A", "P", "R", "F1"}) header.push_back(std::string(short_code(t)) + " " + k);
  }
  rows.push_back(header);
  for (const auto& [system, by_type] : groups) {
    json cells = json::object();
    std::vector<std::string> row = {system};
    for (auto t : kAllVulnTypes) {
      std::string code(short_code(t));
      auto it = by_type.find(t);
      if (it == by_type.end()) {
        cells[code] = nullptr;
        for (int i = 0; i < 4; ++i) row.push_back("--");
        continue;
      }
      auto cm = confusion(it->second);
      auto m = metrics(cm);
      cells[code] = {{"accuracy", metric_json(m.accuracy)},
                     {"precision", metric_json(m.precision)},
                     {"recall", metric_json(m.recall)},
                     {"f1", metric_json(m.f1)},
                     {"confusion", {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}}}};
      for (const auto* metric : {&m.accuracy, &m.precision, &m.recall, &m.f1}) row.push_back(cell(*metric));
    }
    systems.push_back({{"system", system}, {"cells", cells}});
    rows.push_back(row);
  }
  json types = json::array();
  for (auto t : kAllVulnTypes) types.push_back(std::string(short_code(t)));
  out.data = {{"vuln_types", types}, {"systems", systems}};

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line += "  ";
      if (i == 0) line += row[i] + std::string(width[i] - row[i].size(), ' ');
      else line += std::string(width[i] - row[i].size(), ' ') + row[i];
    }
    out.text += line + "\n";
  }
  return out;
}

std::vector<PublishedRow> published_rows_from_json(const json& j) {
  std::vector<PublishedRow> out;
  auto opt = [](const json& row, const char* key) -> std::optional<double> {
    if (!row.contains(key) || row[key].is_null()) return std::nullopt;
    return row[key].get<double>();
  };
  for (const auto& row : j.at("rows")) {
    out.push_back({row.at("system").get<std::string>(), vuln_type_from_string(row.at("vuln_type").get<std::string>()),
                   opt(row, "accuracy"), opt(row, "precision"), opt(row, "recall"), opt(row, "f1")});
  }
  return out;
}

std::vector<F1Check> check_published_f1(const std::vector<PublishedRow>& rows, int tolerance_hundredths) {
  std::vector<F1Check> out;
  for (const auto& r : rows) {
    if (!r.precision || !r.recall || !r.f1) continue;
    F1Check c;
    c.system = r.system;
    c.vuln_type = r.vuln_type;
    c.precision = *r.precision;
    c.recall = *r.recall;
    c.published_f1 = *r.f1;
    c.raw_f1 = f1_raw(c.precision, c.recall);
    c.recomputed_f1 = f1_from_percentages(c.precision, c.recall);
    long long diff = std::llabs(std::llround(c.recomputed_f1 * 100.0) - std::llround(c.published_f1 * 100.0));
    c.pass = diff <= tolerance_hundredths;
    out.push_back(c);
  }
  return out;
}

std::string_view to_string(Evaluator e) { return e == Evaluator::llm ? "llm" : "human"; }

Evaluator evaluator_from_string(std::string_view s) {
  if (s == "llm") return Evaluator::llm;
  if (s == "human") return Evaluator::human;
  throw Error("BadRecord", "evaluator " + std::string(s));
}

std::array<double, 4> LikertDistribution::shares() const {
  const auto n = total();
  if (n == 0) throw Error("EmptyInput", "no ratings");
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = round_half_up(100.0 * static_cast<double>(counts[i]) / static_cast<double>(n), 1);
  }
  return out;
}

LikertDistribution distribution_from_counts(const std::array<std::uint64_t, 4>& counts, judge::Dimension dimension,
                                            const std::string& system_id, Evaluator evaluator) {
  LikertDistribution d;
  d.dimension = dimension;
  d.counts = counts;
  d.system_id = system_id;
  d.evaluator = evaluator;
  return d;
}

LikertDistribution likert_distribution(const std::vector<std::pair<std::string, int>>& ratings,
                                       judge::Dimension dimension, const std::string& system_id,
                                       Evaluator evaluator) {
  if (ratings.empty()) throw Error("EmptyInput", "no ratings");
  std::array<std::uint64_t, 4> counts{};
  for (const auto& [item, score] : ratings) {
    if (score < 1 || score > 4) throw Error("ScoreOutOfRange", item + "=" + std::to_string(score));
    ++counts[static_cast<std::size_t>(score - 1)];
  }
  return distribution_from_counts(counts, dimension, system_id, evaluator);
}

json distribution_to_json(const LikertDistribution& d) {
  json j{{"dimension", std::string(judge::to_string(d.dimension))},
         {"system_id", d.system_id},
         {"evaluator", std::string(to_string(d.evaluator))},
         {"counts", d.counts},
         {"total", d.total()}};
  if (d.total() > 0) j["shares"] = d.shares();
  return j;
}

std::map<std::pair<std::string, std::string>, review::RatingEvent> latest_ratings(
    const std::vector<review::RatingEvent>& events) {
  std::map<std::pair<std::string, std::string>, review::RatingEvent> out;
  for (const auto& e : events) out[{e.item_id, e.rater_id}] = e;
  return out;
}

AgreementReport agreement_report(const std::vector<review::RatingEvent>& events,
                                 const std::set<std::string>& overlapped_items) {
  std::map<std::string, std::vector<std::pair<std::string, review::LikertScores>>> by_item;
  for (const auto& [key, e] : latest_ratings(events)) {
    if (e.scores && overlapped_items.count(key.first)) by_item[key.first].emplace_back(key.second, *e.scores);
  }
  AgreementReport rep;
  std::array<std::size_t, 3> exact{};
  for (const auto& item : overlapped_items) {
    auto it = by_item.find(item);
    if (it == by_item.end() || it->second.size() < 2) throw Error("MissingSecondRating", item);
    ItemAgreement ia;
    ia.item_id = item;
    std::array<int, 3> lo{5, 5, 5}, hi{0, 0, 0};
    for (const auto& [rater, s] : it->second) {
      ia.raters.push_back(rater);
      const std::array<int, 3> v{s.correctness, s.completeness, s.conciseness};
      for (std::size_t d = 0; d < 3; ++d) {
        lo[d] = std::min(lo[d], v[d]);
        hi[d] = std::max(hi[d], v[d]);
      }
    }
    for (std::size_t d = 0; d < 3; ++d) {
      ia.differences[d] = hi[d] - lo[d];
      if (ia.differences[d] > 1) ia.needs_consensus = true;
      if (ia.differences[d] == 0) ++exact[d];
    }
    if (ia.needs_consensus) rep.flagged.push_back(item);
    rep.items.push_back(std::move(ia));
  }
  if (!rep.items.empty()) {
    for (std::size_t d = 0; d < 3; ++d) {
      rep.exact_agreement[d] = static_cast<double>(exact[d]) / static_cast<double>(rep.items.size());
    }
  }
  return rep;
}

json agreement_to_json(const AgreementReport& r) {
  json items = json::array();
  for (const auto& ia : r.items) {
    items.push_back({{"item_id", ia.item_id},
                     {"raters", ia.raters},
                     {"differences",
                      {{"correctness", ia.differences[0]},
                       {"completeness", ia.differences[1]},
                       {"conciseness", ia.differences[2]}}},
                     {"needs_consensus", ia.needs_consensus}});
  }
  return json{{"items", items},
              {"flagged", r.flagged},
              {"exact_agreement",
               {{"correctness", r.exact_agreement[0]},
                {"completeness", r.exact_agreement[1]},
                {"conciseness", r.exact_agreement[2]}}}};
}

}  // namespace forge::eval
