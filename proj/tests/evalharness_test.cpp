#include <cmath>
#include <numeric>

#include "forge/evalharness.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::eval;

namespace {

EvalRecord rec(const std::string& id, int gold, int pred, VulnType t = VulnType::reentrancy,
               const std::string& sys = "sys") {
  return {id, t, gold, pred, "", sys};
}

std::vector<EvalRecord> from_matrix(const ConfusionMatrix& cm, VulnType t = VulnType::reentrancy,
                                    const std::string& sys = "sys") {
  std::vector<EvalRecord> out;
  int n = 0;
  auto add = [&](std::uint64_t k, int g, int p) {
    for (std::uint64_t i = 0; i < k; ++i) out.push_back(rec("u" + std::to_string(n++), g, p, t, sys));
  };
  add(cm.tp, 1, 1);
  add(cm.fp, 0, 1);
  add(cm.fn, 1, 0);
  add(cm.tn, 0, 0);
  return out;
}

// Exact rational percent rounded half-up to 2 dp, computed in integers.
long long hundredths(std::uint64_t num, std::uint64_t den) {
  // round(10000 * num / den) half-up
  return static_cast<long long>((20000 * num + den) / (2 * den));
}

review::RatingEvent likert(const std::string& item, const std::string& rater, int c, int comp, int conc,
                           const std::string& id = "") {
  review::RatingEvent e;
  e.event_id = id.empty() ? item + "/" + rater : id;
  e.session_id = "s";
  e.item_id = item;
  e.rater_id = rater;
  e.scores = review::LikertScores{c, comp, conc};
  return e;
}

json load_fixture(const std::string& name) {
  return json::parse(read_file(std::filesystem::path(FORGE_FIXTURE_DIR) / name));
}

}  // namespace

TEST_CASE("metrics on a worked confusion matrix") {
  ConfusionMatrix cm{8, 2, 4, 6};
  auto m = metrics(cm);
  CHECK(m.accuracy.value == doctest::Approx(70.00));
  CHECK(m.precision.value == doctest::Approx(80.00));
  CHECK(m.recall.value == doctest::Approx(66.67));
  CHECK(m.f1.value == doctest::Approx(72.73));
  CHECK_FALSE(m.f1.undefined);
}

TEST_CASE("zero denominators yield 0 with the undefined flag") {
  auto none_predicted = metrics({0, 0, 5, 5});
  CHECK(none_predicted.precision.undefined);
  CHECK(none_predicted.precision.value == 0.0);
  CHECK(none_predicted.f1.undefined);
  CHECK(none_predicted.accuracy.value == doctest::Approx(50.0));

  auto no_positives = metrics({0, 3, 0, 7});
  CHECK(no_positives.recall.undefined);
  CHECK(no_positives.f1.undefined);

  auto all_wrong = metrics({0, 2, 2, 0});
  CHECK_FALSE(all_wrong.precision.undefined);
  CHECK_FALSE(all_wrong.recall.undefined);
  CHECK(all_wrong.f1.undefined);

  CHECK_ERROR_KIND(metrics({0, 0, 0, 0}), "EmptyMatrix");
  CHECK_ERROR_KIND(confusion({}), "EmptyInput");
}

TEST_CASE("metrics agree with an integer oracle on random matrices") {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    ConfusionMatrix cm{rng.below(50), rng.below(50), rng.below(50), rng.below(50)};
    if (cm.total() == 0) continue;
    auto got = confusion(from_matrix(cm));
    REQUIRE(got == cm);
    CHECK(got.total() == cm.total());
    auto m = metrics(cm);
    CHECK(std::llround(m.accuracy.value * 100) == hundredths(cm.tp + cm.tn, cm.total()));
    if (cm.tp + cm.fp > 0) CHECK(std::llround(m.precision.value * 100) == hundredths(cm.tp, cm.tp + cm.fp));
    if (cm.tp + cm.fn > 0) CHECK(std::llround(m.recall.value * 100) == hundredths(cm.tp, cm.tp + cm.fn));
    if (cm.tp > 0) {
      // F1 = 2tp / (2tp + fp + fn)
      CHECK(std::llround(m.f1.value * 100) == hundredths(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn));
      CHECK(m.f1.value <= (m.precision.value + m.recall.value) / 2 + 0.01);
      CHECK(m.f1.value >= std::min(m.precision.value, m.recall.value) - 0.01);
    }
  }
}

TEST_CASE("accuracy is invariant under swapping class labels") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    ConfusionMatrix cm{rng.below(30) + 1, rng.below(30), rng.below(30), rng.below(30)};
    auto records = from_matrix(cm);
    for (auto& r : records) {
      r.gold = 1 - r.gold;
      r.predicted = 1 - r.predicted;
    }
    auto flipped = confusion(records);
    CHECK(flipped == ConfusionMatrix{cm.tn, cm.fn, cm.fp, cm.tp});
    CHECK(metrics(flipped).accuracy.value == metrics(cm).accuracy.value);
  }
}

TEST_CASE("f1 from published percentages") {
  CHECK(f1_from_percentages(80.0, 80.0) == doctest::Approx(80.0));
  CHECK(f1_from_percentages(0.0, 0.0) == 0.0);
  CHECK(f1_from_percentages(100.0, 50.0) == doctest::Approx(66.67));
  CHECK(f1_raw(100.0, 50.0) == doctest::Approx(200.0 / 3.0));
}

TEST_CASE("published comparison table: three rows disagree with their own P and R") {
  auto rows = published_rows_from_json(load_fixture("table2.json"));
  CHECK(rows.size() == 68);
  auto checks = check_published_f1(rows);
  CHECK(checks.size() == 67);
  std::vector<std::string> failing;
  for (const auto& c : checks) {
    if (!c.pass) failing.push_back(c.system + " " + std::string(short_code(c.vuln_type)));
  }
  CHECK(failing == std::vector<std::string>{"Peculiar RE", "Peculiar TD", "PSCVFinder RE"});

  for (const auto& c : checks) {
    if (c.system == "Peculiar" && c.vuln_type == VulnType::reentrancy) {
      CHECK(c.recomputed_f1 == doctest::Approx(40.79));
      CHECK(c.published_f1 == doctest::Approx(40.84));
    }
  }
}

TEST_CASE("raw f1 comparison fails one more row than the rounded comparison") {
  auto checks = check_published_f1(published_rows_from_json(load_fixture("table2.json")));
  int raw_failures = 0;
  for (const auto& c : checks) {
    if (std::fabs(c.raw_f1 - c.published_f1) > 0.01 + 1e-9) ++raw_failures;
  }
  CHECK(raw_failures == 4);
}

TEST_CASE("parse_prediction prefers a structured label line") {
  CHECK(parse_prediction("```result\nlabel: SAFE\nexplanation: vulnerable looking but fine\n```") == 0);
  CHECK(parse_prediction("**Label:** VULNERABLE\nThe call is safe otherwise.") == 1);
  CHECK(parse_prediction("label: 1") == 1);
}

TEST_CASE("parse_prediction falls back to the first keyword") {
  CHECK(parse_prediction("The contract is Vulnerable to reentrancy.") == 1);
  CHECK(parse_prediction("This looks safe. Not vulnerable.") == 0);
  CHECK(parse_prediction("unsafe? no; it is SAFE") == 0);
  CHECK_ERROR_KIND(parse_prediction("I cannot tell."), "NoLabelFound");
  CHECK_ERROR_KIND(parse_prediction("vulnerabilities everywhere"), "NoLabelFound");
}

TEST_CASE("repeated paragraphs are cut before parsing") {
  std::string raw = "Analysis follows.\n\nThe code looks fine.\n\nThe code looks fine.\n\nVULNERABLE";
  CHECK(truncate_repetition(raw) == "Analysis follows.\n\nThe code looks fine.\n\n");
  CHECK_ERROR_KIND(parse_prediction(raw), "NoLabelFound");
  CHECK(truncate_repetition("a\n\nb\n") == "a\n\nb\n");
  CHECK(parse_prediction("Loop.\n\nSAFE\n\nLoop.\n\nVULNERABLE") == 0);
}

TEST_CASE("metrics table renders missing groups as dashes") {
  std::vector<EvalRecord> records = from_matrix({8, 2, 4, 6}, VulnType::reentrancy, "b-sys");
  auto extra = from_matrix({1, 0, 0, 1}, VulnType::delegatecall, "a-sys");
  records.insert(records.end(), extra.begin(), extra.end());
  auto table = metrics_table(records);
  REQUIRE(table.data["systems"].size() == 2);
  CHECK(table.data["systems"][0]["system"] == "a-sys");
  CHECK(table.data["systems"][0]["cells"]["RE"].is_null());
  CHECK(table.data["systems"][1]["cells"]["RE"]["f1"].get<double>() == doctest::Approx(72.73));
  CHECK(table.text.find("72.73") != std::string::npos);
  CHECK(table.text.find("--") != std::string::npos);
  auto lines = split_lines(table.text);
  CHECK(lines.size() == 3);
}

TEST_CASE("eval records round trip and reject non-binary labels") {
  EvalRecord r = rec("u1", 1, 0);
  r.explanation = "x";
  CHECK(record_from_json(record_to_json(r)) == r);
  auto j = record_to_json(r);
  j["predicted"] = 2;
  CHECK_ERROR_KIND(record_from_json(j), "BadRecord");
}

TEST_CASE("likert distribution shares match the published evaluation table") {
  auto fx = load_fixture("table4.json");
  std::map<std::tuple<std::string, std::string, std::string>, LikertDistribution> dists;
  for (const auto& row : fx["rows"]) {
    for (auto d : judge::kDimensions) {
      std::string dim(judge::to_string(d));
      auto counts = row[dim].get<std::array<std::uint64_t, 4>>();
      auto dist = distribution_from_counts(counts, d, row["system"], evaluator_from_string(row["evaluator"].get<std::string>()));
      CHECK(dist.total() == 881);
      auto shares = dist.shares();
      CHECK(std::accumulate(shares.begin(), shares.end(), 0.0) == doctest::Approx(100.0).epsilon(0.002));
      dists.emplace(std::make_tuple(row["evaluator"].get<std::string>(), row["system"].get<std::string>(), dim), dist);
    }
  }
  REQUIRE(fx["stated_shares"].size() == 24);
  for (const auto& s : fx["stated_shares"]) {
    const auto& dist = dists.at({s["evaluator"], s["system"], s["dimension"]});
    double got = dist.shares()[s["score"].get<std::size_t>() - 1];
    CHECK_MESSAGE(got == doctest::Approx(s["percent"].get<double>()), s.dump());
  }
}

TEST_CASE("likert distribution from item ratings") {
  std::vector<std::pair<std::string, int>> ratings{{"a", 4}, {"b", 4}, {"c", 3}, {"d", 1}};
  auto d = likert_distribution(ratings, judge::Dimension::conciseness, "ours", Evaluator::human);
  CHECK(d.counts == std::array<std::uint64_t, 4>{1, 0, 1, 2});
  CHECK(d.shares() == std::array<double, 4>{25.0, 0.0, 25.0, 50.0});
  CHECK(distribution_to_json(d)["evaluator"] == "human");
  CHECK_ERROR_KIND(likert_distribution({}, judge::Dimension::correctness), "EmptyInput");
  CHECK_ERROR_KIND(likert_distribution({{"a", 5}}, judge::Dimension::correctness), "ScoreOutOfRange");
  CHECK_ERROR_KIND(LikertDistribution{}.shares(), "EmptyInput");
}

TEST_CASE("agreement flags differences greater than one") {
  std::vector<review::RatingEvent> events{
      likert("i1", "r1", 4, 3, 3), likert("i1", "r2", 3, 3, 4),  // within 1
      likert("i2", "r1", 4, 4, 4), likert("i2", "r2", 2, 4, 4),  // correctness differs by 2
      likert("i3", "r1", 1, 1, 1),                                // not overlapped
  };
  auto rep = agreement_report(events, {"i1", "i2"});
  REQUIRE(rep.items.size() == 2);
  CHECK(rep.flagged == std::vector<std::string>{"i2"});
  CHECK(rep.items[1].differences == std::array<int, 3>{2, 0, 0});
  CHECK(rep.items[0].raters == std::vector<std::string>{"r1", "r2"});
  CHECK(rep.exact_agreement[0] == doctest::Approx(0.0));
  CHECK(rep.exact_agreement[1] == doctest::Approx(1.0));
  CHECK(rep.exact_agreement[2] == doctest::Approx(0.5));
  CHECK(agreement_to_json(rep)["flagged"][0] == "i2");
}

TEST_CASE("revisions replace earlier ratings and missing partners are errors") {
  std::vector<review::RatingEvent> events{likert("i1", "r1", 4, 4, 4, "e1"), likert("i1", "r2", 1, 4, 4, "e2")};
  CHECK(agreement_report(events, {"i1"}).flagged.size() == 1);
  auto rev = likert("i1", "r2", 4, 4, 4, "e3");
  rev.supersedes = "e2";
  events.push_back(rev);
  CHECK(agreement_report(events, {"i1"}).flagged.empty());
  CHECK(latest_ratings(events).at({"i1", "r2"}).event_id == "e3");
  CHECK_ERROR_KIND(agreement_report(events, {"i1", "i9"}), "MissingSecondRating");
}
