#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fairmargin/data.hpp"
#include "fairmargin/error.hpp"
#include "fairmargin/eval.hpp"
#include "fairmargin/parallel.hpp"

namespace fairmargin {
namespace {

// min over thresholds of max(FAR, FRR), all scores plus +inf as thresholds.
double brute_force_eer(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  std::vector<double> ts(genuine);
  ts.insert(ts.end(), impostor.begin(), impostor.end());
  ts.push_back(std::numeric_limits<double>::infinity());
  double best = 1.0;
  for (double t : ts) {
    const double far =
        static_cast<double>(std::count_if(impostor.begin(), impostor.end(),
                                          [&](double s) { return s >= t; })) /
        static_cast<double>(impostor.size());
    const double frr =
        static_cast<double>(std::count_if(genuine.begin(), genuine.end(),
                                          [&](double s) { return s < t; })) /
        static_cast<double>(genuine.size());
    best = std::min(best, std::max(far, frr));
  }
  return best;
}

double brute_force_auc(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  double wins = 0.0;
  for (double g : genuine) {
    for (double i : impostor) wins += g > i ? 1.0 : (g == i ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(genuine.size() * impostor.size());
}

double brute_force_gini(const std::vector<double>& e) {
  double num = 0.0, mean = 0.0;
  for (double a : e) {
    mean += a;
    for (double b : e) num += std::abs(a - b);
  }
  mean /= static_cast<double>(e.size());
  if (mean == 0.0) return 0.0;
  return num / (2.0 * static_cast<double>(e.size() * e.size()) * mean);
}

// Pairs whose cosine score is exactly the requested value, one fresh id pair
// each, so groups can be composed freely.
struct PairBuilder {
  EmbeddingTable table;
  std::vector<VerificationPair> pairs;
  int next = 0;

  void add(double score, bool genuine, std::set<std::string, std::less<>>* group = nullptr,
           std::set<std::string, std::less<>>* group2 = nullptr) {
    const std::string a = "p" + std::to_string(next++);
    const std::string b = "p" + std::to_string(next++);
    table[a] = {1.0, 0.0};
    table[b] = {score, std::sqrt(1.0 - score * score)};
    pairs.push_back({a, b, genuine});
    for (auto* g : {group, group2}) {
      if (g) {
        g->insert(a);
        g->insert(b);
      }
    }
  }
};

TEST(Eer, PerfectSeparation) {
  const EerResult r = compute_eer(std::vector<double>{0.9, 0.8}, std::vector<double>{0.1, 0.2});
  EXPECT_EQ(r.eer, 0.0);
}

TEST(Eer, HandSweepExample) {
  EXPECT_EQ(compute_eer(std::vector<double>{0.2, 0.6}, std::vector<double>{0.4, 0.8}).eer, 0.5);
}

TEST(Eer, OneSided) {
  try {
    compute_eer(std::vector<double>{0.2}, std::vector<double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOneSidedInput);
  }
  EXPECT_THROW(compute_auc(std::vector<double>{}, std::vector<double>{0.1}), Error);
}

TEST(Eer, RandomProperties) {
  Rng rng(1);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t ng = 1 + rng.below(6);
    const std::size_t ni = 1 + rng.below(6);
    std::vector<double> g(ng), im(ni);
    // Half the trials use a coarse grid so ties are common.
    const bool coarse = trial % 2 == 0;
    const auto draw = [&] {
      return coarse ? static_cast<double>(rng.below(9)) / 8.0 - 0.5 : rng.uniform(-1.0, 1.0);
    };
    for (double& s : g) s = draw();
    for (double& s : im) s = draw();
    const double eer = compute_eer(g, im).eer;
    ASSERT_GE(eer, 0.0);
    ASSERT_LE(eer, 1.0);
    const double bf = brute_force_eer(g, im);
    if (coarse) {
      // A tied genuine/impostor score moves FAR and FRR together, so the
      // interpolated point can sit anywhere inside that jump, never above it.
      EXPECT_LE(eer, bf + 1e-12) << "trial " << trial;
    } else {
      EXPECT_LE(std::abs(eer - bf), 1.0 / (2.0 * static_cast<double>(std::min(ng, ni))) + 1e-12)
          << "trial " << trial;
    }

    std::vector<double> neg_g(im), neg_i(g);
    for (double& s : neg_g) s = -s;
    for (double& s : neg_i) s = -s;
    EXPECT_NEAR(compute_eer(neg_g, neg_i).eer, eer, 1e-12) << "trial " << trial;

    std::vector<double> g2(g), i2(im);
    g2.insert(g2.end(), g.begin(), g.end());
    i2.insert(i2.end(), im.begin(), im.end());
    EXPECT_NEAR(compute_eer(g2, i2).eer, eer, 1e-12);

    const double auc = compute_auc(g, im);
    EXPECT_NEAR(auc, brute_force_auc(g, im), 1e-12);
    EXPECT_NEAR(compute_auc(g2, i2), auc, 1e-12);
    EXPECT_GE(auc, 0.0);
    EXPECT_LE(auc, 1.0);
  }
}

TEST(Eer, PerfectIsZeroWithUnitAuc) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> g(1 + rng.below(10)), im(1 + rng.below(10));
    for (double& s : g) s = rng.uniform(0.1, 1.0);
    for (double& s : im) s = rng.uniform(-1.0, 0.0);
    EXPECT_EQ(compute_eer(g, im).eer, 0.0);
    EXPECT_EQ(compute_auc(g, im), 1.0);
  }
}

TEST(Auc, Examples) {
  EXPECT_EQ(compute_auc(std::vector<double>{0.9, 0.8}, std::vector<double>{0.1, 0.2}), 1.0);
  EXPECT_EQ(compute_auc(std::vector<double>{0.3, 0.3}, std::vector<double>{0.3, 0.3}), 0.5);
  EXPECT_EQ(compute_auc(std::vector<double>{0.6}, std::vector<double>{0.4, 0.8}), 0.5);
}

TEST(Gini, Examples) {
  EXPECT_EQ(gini(std::vector<double>{0.2, 0.2, 0.2}), 0.0);
  EXPECT_NEAR(gini(std::vector<double>{0.1, 0.3}), 0.25, 1e-12);
  EXPECT_EQ(gini(std::vector<double>{0.0, 0.0}), 0.0);
}

TEST(Gini, PropertiesAgainstBruteForce) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> e(1 + rng.below(8));
    for (double& v : e) v = rng.uniform(0.0, 0.5);
    const double g = gini(e);
    EXPECT_NEAR(g, brute_force_gini(e), 1e-12);
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, 1.0 - 1.0 / static_cast<double>(e.size()) + 1e-12);
    std::vector<double> scaled(e);
    const double k = rng.uniform(0.1, 10.0);
    for (double& v : scaled) v *= k;
    EXPECT_NEAR(gini(scaled), g, 1e-12);
  }
}

TEST(Ser, Examples) {
  EXPECT_EQ(ser(std::vector<double>{0.2, 0.2}).value, 1.0);
  const SerResult r = ser(std::vector<double>{0.1, 0.3});
  EXPECT_NEAR(r.value, 3.0, 1e-12);
  EXPECT_FALSE(r.floored);
  const SerResult z = ser(std::vector<double>{0.0, 0.2});
  EXPECT_TRUE(z.floored);
  EXPECT_NEAR(z.value, 0.2 / kSerFloor, 1.0);
}

TEST(Std, Population) {
  EXPECT_NEAR(population_std(std::vector<double>{0.1, 0.3}), 0.1, 1e-12);
  EXPECT_EQ(population_std(std::vector<double>{0.4}), 0.0);
}

TEST(MakePairs, ExhaustiveSmallCase) {
  const std::vector<std::string> ids{"a0", "a1", "b0", "b1"};
  const std::vector<ClassId> cls{0, 0, 1, 1};
  Rng rng(3);
  const auto pairs = make_pairs(ids, cls, 1, 2, rng);
  ASSERT_EQ(pairs.size(), 4u);
  EXPECT_EQ(std::count_if(pairs.begin(), pairs.end(), [](auto& p) { return p.genuine; }), 2);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : pairs) {
    EXPECT_NE(p.id_a, p.id_b);
    EXPECT_EQ(p.id_a[0] == p.id_b[0], p.genuine);
    EXPECT_TRUE(seen.insert({p.id_a, p.id_b}).second);
  }
}

TEST(MakePairs, SeededAndSingletonClass) {
  const std::vector<std::string> ids{"a0", "a1", "a2", "b0", "c0", "c1"};
  const std::vector<ClassId> cls{0, 0, 0, 1, 2, 2};
  Rng r1(4), r2(4);
  const auto p1 = make_pairs(ids, cls, 2, 5, r1);
  EXPECT_EQ(p1, make_pairs(ids, cls, 2, 5, r2));
  for (const auto& p : p1) {
    if (p.genuine) EXPECT_NE(p.id_a, "b0");
  }
  EXPECT_EQ(std::count_if(p1.begin(), p1.end(), [](auto& p) { return p.genuine; }), 3);
}

TEST(MakePairs, NotEnoughSamples) {
  const std::vector<std::string> ids{"a", "b"};
  const std::vector<ClassId> cls{0, 1};
  Rng rng(5);
  try {
    make_pairs(ids, cls, 1, 1, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotEnoughSamples);
  }
}

TEST(PairsText, RoundTrip) {
  const std::vector<VerificationPair> pairs{{"a", "b", true}, {"a", "c", false}};
  EXPECT_EQ(pairs_from_text(pairs_to_text(pairs)), pairs);
  EXPECT_THROW(pairs_from_text("id_a,id_b,genuine\na,b,2\n"), Error);
}

TEST(ScorePairs, IdentityOrthogonalAntipodal) {
  EmbeddingTable t{{"x", {1.0, 0.0}}, {"y", {0.0, 1.0}}, {"z", {-1.0, 0.0}}, {"w", {1.0, 0.0}}};
  const std::vector<VerificationPair> pairs{{"x", "w", true}, {"x", "y", false}, {"x", "z", false}};
  const auto s = score_pairs(pairs, t);
  EXPECT_EQ(s[0].score, 1.0 - kCosineEpsilon);
  EXPECT_EQ(s[1].score, 0.0);
  EXPECT_EQ(s[2].score, -1.0 + kCosineEpsilon);
  try {
    score_pairs({{"x", "nobody", true}}, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownId);
  }
}

TEST(ScorePairs, ParallelMatchesSerial) {
  Rng rng(6);
  EmbeddingTable t;
  for (int i = 0; i < 40; ++i) {
    Vector v(5);
    for (double& x : v) x = rng.normal();
    t["s" + std::to_string(i)] = l2_normalize(v);
  }
  std::vector<VerificationPair> pairs;
  for (int i = 0; i < 300; ++i) {
    pairs.push_back({"s" + std::to_string(rng.below(40)), "s" + std::to_string(rng.below(40)),
                     rng.below(2) == 0});
  }
  const int saved = worker_count();
  set_worker_count(3);
  const auto par = score_pairs(pairs, t);
  set_worker_count(saved);
  const auto ser_ = score_pairs_serial(pairs, t);
  for (std::size_t i = 0; i < pairs.size(); ++i) EXPECT_EQ(par[i].score, ser_[i].score);
}

TEST(Binarize, MinMaxThreshold) {
  const std::vector<LabeledSample> s{{"a", 0, {{"age", 0.0}, {"flag", -1.0}, {"k", 2.0}}, {1}},
                                     {"b", 0, {{"age", 10.0}, {"flag", 1.0}, {"k", 2.0}}, {1}},
                                     {"c", 1, {{"age", 7.0}, {"flag", 1.0}, {"k", 2.0}}, {1}}};
  const GroupingResult g = binarize_attributes(s, {"age", "flag", "k"});
  EXPECT_EQ(g.groups.at("age"), (std::set<std::string, std::less<>>{"b"}));
  EXPECT_EQ(g.groups.at("flag"), (std::set<std::string, std::less<>>{"b", "c"}));
  EXPECT_TRUE(g.groups.at("k").empty());
  EXPECT_NE(std::find(g.flags.begin(), g.flags.end(), "constant_attribute:k"), g.flags.end());
  try {
    binarize_attributes(s, {"height"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownAttribute);
  }
}

TEST(Evaluate, IdenticalGroupsAreFair) {
  PairBuilder b;
  Grouping grouping;
  auto& x = grouping["x"];
  auto& y = grouping["y"];
  for (double s : {0.9, 0.7, 0.35}) b.add(s, true, &x, &y);
  for (double s : {0.5, 0.1, -0.2}) b.add(s, false, &x, &y);
  const EvalReport r = evaluate(b.table, b.pairs, grouping);
  ASSERT_TRUE(r.fairness.has_value());
  EXPECT_EQ(r.fairness->std, 0.0);
  EXPECT_EQ(r.fairness->gini, 0.0);
  EXPECT_EQ(r.fairness->ser, 1.0);
  EXPECT_EQ(r.per_group.at("x").eer, r.overall.eer);
}

TEST(Evaluate, FairnessMatchesMetricFunctionsAndHeatmapSumsToZero) {
  PairBuilder b;
  Grouping grouping;
  auto& easy = grouping["easy"];
  auto& hard = grouping["hard"];
  for (double s : {0.9, 0.8, 0.7, 0.6}) b.add(s, true, &easy);
  for (double s : {0.1, 0.2, 0.65, -0.3}) b.add(s, false, &easy);
  for (double s : {0.9, 0.3, 0.5, 0.2}) b.add(s, true, &hard);
  for (double s : {0.4, 0.6, 0.0, 0.1}) b.add(s, false, &hard);
  const EvalReport r = evaluate(b.table, b.pairs, grouping);
  ASSERT_TRUE(r.fairness.has_value());
  const std::vector<double> eers{r.per_group.at("easy").eer, r.per_group.at("hard").eer};
  EXPECT_LT(eers[0], eers[1]);
  EXPECT_EQ(r.fairness->std, population_std(eers));
  EXPECT_EQ(r.fairness->gini, gini(eers));
  EXPECT_EQ(r.fairness->ser, ser(eers).value);
  EXPECT_NEAR(r.heatmap.at("easy") + r.heatmap.at("hard"), 0.0, 1e-9);
  EXPECT_EQ(r.per_group.at("easy").genuine_pairs, 4u);
  EXPECT_EQ(r.overall.genuine_pairs, 8u);

  Grouping renamed{{"a_hard", hard}, {"z_easy", easy}};
  const EvalReport p = evaluate(b.table, b.pairs, renamed);
  EXPECT_EQ(p.fairness->std, r.fairness->std);
  EXPECT_EQ(p.fairness->gini, r.fairness->gini);
  EXPECT_EQ(p.fairness->ser, r.fairness->ser);
}

TEST(Evaluate, PairNeedsBothMembers) {
  PairBuilder b;
  Grouping grouping;
  auto& g = grouping["g"];
  b.add(0.9, true, &g);
  b.add(0.1, false, &g);
  b.add(0.8, true);
  g.insert(b.pairs.back().id_a);
  const EvalReport r = evaluate(b.table, b.pairs, grouping);
  EXPECT_EQ(r.per_group.at("g").genuine_pairs, 1u);
  EXPECT_FALSE(r.fairness.has_value());
  EXPECT_NE(std::find(r.flags.begin(), r.flags.end(), "too_few_groups"), r.flags.end());
}

TEST(Evaluate, UnscorableGroupFlagged) {
  PairBuilder b;
  Grouping grouping;
  auto& g = grouping["g"];
  auto& only_genuine = grouping["h"];
  b.add(0.9, true, &g);
  b.add(0.1, false, &g);
  b.add(0.8, true, &only_genuine);
  const EvalReport r = evaluate(b.table, b.pairs, grouping);
  EXPECT_EQ(r.per_group.count("h"), 0u);
  EXPECT_NE(std::find(r.flags.begin(), r.flags.end(), "unscored_group:h"), r.flags.end());
}

TEST(Report, JsonAndCsvShape) {
  PairBuilder b;
  Grouping grouping;
  auto& x = grouping["x"];
  auto& y = grouping["y"];
  b.add(0.9, true, &x);
  b.add(0.1, false, &x);
  b.add(0.4, true, &y);
  b.add(0.6, false, &y);
  b.add(0.7, true, &y);
  const EvalReport r = evaluate(b.table, b.pairs, grouping);
  const auto json = nlohmann::json::parse(report_to_json(r));
  EXPECT_EQ(json.at("format"), "fairmargin-eval-report v1");
  EXPECT_TRUE(json.contains("fairness"));
  EXPECT_TRUE(json.at("per_group").contains("x"));
  const std::string csv = report_to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "group,eer,auc,genuine_pairs,impostor_pairs,std,gini,ser");
  EXPECT_NE(csv.find("\noverall,"), std::string::npos);
  EXPECT_EQ(heatmap_to_csv(r).substr(0, 19), "group,eer_deviation");
  EXPECT_EQ(report_to_json(r), report_to_json(evaluate(b.table, b.pairs, grouping)));
}

}  // namespace
}  // namespace fairmargin
