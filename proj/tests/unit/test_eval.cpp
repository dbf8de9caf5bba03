#include <gtest/gtest.h>

#include <algorithm>

#include "../support/brute_force.hpp"
#include "builders.hpp"
#include "wtriage/eval.hpp"

using namespace wtriage;
using namespace wtriage::testing;

namespace {

const Label A = Label::Actionable;
const Label F = Label::FalseAlarm;

ConfusionCounts all_actionable(std::size_t act, std::size_t total) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < total; ++i) c.add(i < act ? A : F, A);
  return c;
}

EvalReport report(const std::string& project, double act, double f1, double base, double a) {
  EvalReport r;
  r.project = project;
  r.model = "linear";
  r.mode = "leak-free";
  r.actionability = act;
  r.metrics.f1 = f1;
  r.baseline_f1 = base;
  r.auc.value = a;
  return r;
}

}  // namespace

// --- precision / recall / F1 ----------------------------------------------------

TEST(Prf1, ConstantActionableExamples) {
  auto ant = prf1(all_actionable(24, 100));
  EXPECT_EQ(ant.recall, 1.0);
  EXPECT_DOUBLE_EQ(ant.precision, 0.24);
  EXPECT_NEAR(ant.f1, 0.387, 5e-4);
  auto derby = prf1(all_actionable(10, 100));
  EXPECT_NEAR(derby.f1, 0.18, 5e-3);
  EXPECT_EQ(derby.f1, constant_actionable_f1(0.1));
}

TEST(Prf1, UndefinedCases) {
  ConfusionCounts none;
  none.tn = 5;
  auto r = prf1(none);
  EXPECT_TRUE(r.precision_undefined);
  EXPECT_TRUE(r.recall_undefined);
  EXPECT_EQ(r.f1, 0.0);
  ConfusionCounts missed;
  missed.fn = 3;
  missed.tn = 2;
  r = prf1(missed);
  EXPECT_TRUE(r.precision_undefined);
  EXPECT_FALSE(r.recall_undefined);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(constant_actionable_f1(0), 0.0);
  EXPECT_THROW(none.add(Label::Unknown, A), UsageError);
}

TEST(Prf1, HandCounts) {
  ConfusionCounts c{6, 2, 3, 9};
  auto r = prf1(c);
  EXPECT_DOUBLE_EQ(r.precision, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, 6.0 / 9.0);
  EXPECT_DOUBLE_EQ(r.f1, 2 * 6.0 / (2 * 6 + 2 + 3));
}

// --- AUC -------------------------------------------------------------------------

TEST(Auc, ConstantScoreIsHalf) {
  std::vector<std::pair<double, Label>> v;
  for (int i = 0; i < 10; ++i) v.emplace_back(1.0, i % 3 ? F : A);
  EXPECT_EQ(auc(v).value, 0.5);
}

TEST(Auc, PerfectSeparation) {
  std::vector<std::pair<double, Label>> v;
  for (int i = 0; i < 10; ++i) v.emplace_back(i, i >= 6 ? A : F);
  EXPECT_EQ(auc(v).value, 1.0);
  for (auto& [s, l] : v) s = -s;
  EXPECT_EQ(auc(v).value, 0.0);
}

TEST(Auc, FourInstanceFixture) {
  std::vector<std::pair<double, Label>> v = {{0.9, A}, {0.8, F}, {0.7, A}, {0.1, F}};
  EXPECT_EQ(auc(v).value, 0.75);
  v[2].first = 0.8;
  EXPECT_EQ(auc(v).value, 0.875);
}

TEST(Auc, MatchesPairwiseCount) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::pair<double, Label>> v;
    const std::size_t n = 2 + rng.below(60);
    const bool coarse = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = coarse ? static_cast<double>(rng.below(5)) : rng.uniform(-3, 3);
      v.emplace_back(s, rng.bernoulli(0.4) ? A : F);
    }
    auto r = auc(v);
    EXPECT_NEAR(r.value, bf::auc(v), 1e-12);
    if (!r.undefined && !coarse) {
      auto neg = v;
      for (auto& [s, l] : neg) s = -s;
      EXPECT_NEAR(r.value + auc(neg).value, 1.0, 1e-12);
    }
  }
}

TEST(Auc, PermutationInvariant) {
  Rng rng(2);
  std::vector<std::pair<double, Label>> v;
  for (int i = 0; i < 80; ++i) v.emplace_back(static_cast<double>(rng.below(10)), rng.bernoulli(0.5) ? A : F);
  const double ref = auc(v).value;
  for (int k = 0; k < 10; ++k) {
    rng.shuffle(v);
    EXPECT_EQ(auc(v).value, ref);
  }
}

TEST(Auc, OneClassIsUndefined) {
  auto r = auc({{0.3, A}, {0.9, A}});
  EXPECT_TRUE(r.undefined);
  EXPECT_EQ(r.value, 0.5);
  EXPECT_THROW(auc({{0.1, Label::Unknown}}), UsageError);
}

// --- Wilcoxon --------------------------------------------------------------------

TEST(Wilcoxon, ActionabilityShiftPairs) {
  // Two-year versus three-year actionability, in percent.
  std::vector<std::pair<double, double>> pairs = {{24, 43}, {41, 43}, {50, 50}, {10, 66},
                                                  {17, 91}, {44, 67}, {17, 16}, {42, 52}};
  auto r = wilcoxon_exact(pairs);
  EXPECT_EQ(r.n, 7u);
  EXPECT_EQ(r.w_minus, 1.0);
  EXPECT_EQ(r.w_plus, 27.0);
  EXPECT_EQ(r.p, 0.03125);
}

TEST(Wilcoxon, AllPositiveEightPairs) {
  std::vector<std::pair<double, double>> pairs;
  for (int i = 0; i < 8; ++i) pairs.emplace_back(0, i + 1);
  EXPECT_EQ(wilcoxon_exact(pairs).p, 0.0078125);
}

TEST(Wilcoxon, DegenerateInputs) {
  EXPECT_EQ(wilcoxon_exact({{0, 1}, {1, 0}}).p, 1.0);
  EXPECT_EQ(wilcoxon_exact({{0, 3}}).p, 1.0);
  EXPECT_THROW(wilcoxon_exact({{1, 1}, {2, 2}}), StatisticsError);
  EXPECT_THROW(wilcoxon_exact({}), StatisticsError);
  std::vector<std::pair<double, double>> many;
  for (int i = 0; i < 26; ++i) many.emplace_back(0, i + 1);
  EXPECT_THROW(wilcoxon_exact(many), StatisticsError);
  many.back().second = 0;
  EXPECT_NO_THROW(wilcoxon_exact(many));
}

TEST(Wilcoxon, MatchesEnumeration) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<double, double>> pairs;
    const std::size_t n = 1 + rng.below(12);
    for (std::size_t i = 0; i < n; ++i)
      pairs.emplace_back(static_cast<double>(rng.between(-4, 4)), static_cast<double>(rng.between(-4, 4)));
    pairs.emplace_back(0, 1);
    auto r = wilcoxon_exact(pairs);
    auto b = bf::wilcoxon(pairs);
    EXPECT_EQ(r.n, b.n);
    EXPECT_EQ(r.w_plus, b.w_plus);
    EXPECT_NEAR(r.p, b.p, 1e-12);
  }
}

TEST(Wilcoxon, OrderAndSwapInvariance) {
  Rng rng(4);
  std::vector<std::pair<double, double>> pairs;
  for (int i = 0; i < 10; ++i) pairs.emplace_back(rng.uniform(), rng.uniform());
  auto ref = wilcoxon_exact(pairs);
  rng.shuffle(pairs);
  EXPECT_EQ(wilcoxon_exact(pairs).p, ref.p);
  for (auto& [a, b] : pairs) std::swap(a, b);
  auto swapped = wilcoxon_exact(pairs);
  EXPECT_EQ(swapped.p, ref.p);
  EXPECT_EQ(swapped.w_plus, ref.w_minus);
}

// --- reports ---------------------------------------------------------------------

TEST(Reports, JsonRoundTrip) {
  auto r = report("ant", 0.24, 0.85, 0.387, 0.9);
  r.counts = {5, 1, 2, 12};
  r.metrics.precision = 5.0 / 6.0;
  r.metrics.recall = 5.0 / 7.0;
  r.stat = StatBlock{"wilcoxon-exact", 3, 0.25, 4, "note"};
  auto back = report_from_json(nlohmann::json::parse(report_to_json(r).dump()));
  EXPECT_EQ(back.project, r.project);
  EXPECT_EQ(back.counts, r.counts);
  EXPECT_EQ(back.metrics.recall, r.metrics.recall);
  EXPECT_EQ(back.baseline_f1, r.baseline_f1);
  ASSERT_TRUE(back.stat);
  EXPECT_EQ(back.stat->p, 0.25);
  EXPECT_EQ(report_to_json(back).dump(), report_to_json(r).dump());
  EXPECT_THROW(report_from_json(nlohmann::json::parse("{\"format_version\": 1}")), ParseError);
}

TEST(Reports, TableRows) {
  auto t = report_table({report("ant", 0.24, 0.85, 0.387, 0.9)});
  EXPECT_EQ(t, "project\tmodel\tAct.%\tF1 (baseline)\tAUC\nant\tlinear\t24%\t0.85 (0.39)\t0.90\n");
}

TEST(Reports, MergeAddsAverageAndTest) {
  std::vector<EvalReport> rows;
  for (int i = 0; i < 8; ++i) rows.push_back(report("p" + std::to_string(i), 0.5, 0.7 + 0.02 * i, 0.6, 0.8));
  auto m = merge_reports(rows);
  ASSERT_TRUE(m.stat);
  EXPECT_EQ(m.stat->p, 0.0078125);
  const auto t = merged_table(m);
  EXPECT_NE(t.find("Average\t-\t50%\t0.77 (0.60)\t0.80"), std::string::npos);
  EXPECT_NE(t.find("# merged: wilcoxon-exact W+=36 p=0.0078125 n=8"), std::string::npos);
  EXPECT_EQ(merged_json(m)["projects"].size(), 8u);

  auto flat = merge_reports({report("a", 0.5, 0.6, 0.6, 0.5)});
  EXPECT_FALSE(flat.stat);
  EXPECT_EQ(merged_table(flat).find("# merged"), std::string::npos);
  EXPECT_THROW(merge_reports({}), UsageError);
}
