#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "builders.hpp"
#include "wtriage/eval.hpp"
#include "wtriage/models.hpp"
#include "wtriage/synth.hpp"

using namespace wtriage;
using namespace wtriage::testing;

namespace {

FeatureVector vec(std::initializer_list<std::pair<Feature, double>> nums = {},
                  std::initializer_list<std::pair<Feature, const char*>> cats = {}) {
  FeatureVector v;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (kFeatures[i].kind == FeatureKind::Numeric)
      v.values[i] = 0.0;
    else
      v.values[i] = std::string("x");
  }
  for (auto [f, x] : nums) v[f] = x;
  for (auto [f, s] : cats) v[f] = std::string(s);
  return v;
}

LabeledInstance li(int id, FeatureVector v, Label l, const std::string& cls = "p.C", const std::string& pattern = "P") {
  return LabeledInstance{key(pattern, "F" + std::to_string(id) + ".java", cls), std::move(v), l, "r"};
}

// Raw matrix with a single numeric "x" column per dimension.
EncodedMatrix matrix(const std::vector<std::vector<double>>& rows, const std::vector<Label>& labels) {
  EncodedMatrix m;
  for (std::size_t j = 0; j < rows.at(0).size(); ++j) m.columns.push_back("x" + std::to_string(j));
  m.rows = rows;
  m.labels = labels;
  for (std::size_t i = 0; i < rows.size(); ++i) m.keys.push_back(key("P", "F" + std::to_string(i) + ".java", "p.C"));
  return m;
}

const Label A = Label::Actionable;
const Label F = Label::FalseAlarm;

double train_accuracy(const Model& m, const EncodedMatrix& x) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < x.size(); ++i) ok += predict(m, x, i) == x.labels[i];
  return static_cast<double>(ok) / static_cast<double>(x.size());
}

}  // namespace

// --- encoding ------------------------------------------------------------------

TEST(Encoder, ZScoresWithTrainingStatistics) {
  std::vector<LabeledInstance> train = {li(0, vec({{Feature::FileAge, 2}}), A), li(1, vec({{Feature::FileAge, 4}}), F),
                                        li(2, vec({{Feature::FileAge, 6}}), F)};
  auto e = Encoder::fit(train);
  std::size_t col = 0;
  while (e.manifest()[col] != "file age") ++col;
  const double mu = 4, sd = std::sqrt(8.0 / 3.0);
  EXPECT_DOUBLE_EQ(e.columns()[col].mean, mu);
  EXPECT_DOUBLE_EQ(e.columns()[col].scale, sd);
  auto row = e.encode(vec({{Feature::FileAge, 10}}));
  EXPECT_DOUBLE_EQ(row[col], (10 - mu) / sd);
  // Constant column: scale guarded to 1.
  std::size_t dev = 0;
  while (e.manifest()[dev] != "developers") ++dev;
  EXPECT_EQ(e.columns()[dev].scale, 1.0);
  EXPECT_EQ(e.encode(vec({{Feature::Developers, 3}}))[dev], 3.0);
}

TEST(Encoder, OneHotOverTrainingVocabulary) {
  const char* cats[5] = {"red", "green", "blue", "green", "red"};
  std::vector<LabeledInstance> train;
  for (int i = 0; i < 5; ++i) train.push_back(li(i, vec({}, {{Feature::WarningPattern, cats[i]}}), i % 2 ? A : F));
  auto e = Encoder::fit(train);
  std::vector<std::size_t> block;
  for (std::size_t c = 0; c < e.manifest().size(); ++c)
    if (e.manifest()[c].rfind("warning pattern=", 0) == 0) block.push_back(c);
  ASSERT_EQ(block.size(), 3u);
  EXPECT_EQ(e.manifest()[block[0]], "warning pattern=blue");
  auto x = e.transform(train);
  for (std::size_t i = 0; i < 5; ++i) {
    double sum = 0;
    for (auto c : block) sum += x.rows[i][c];
    EXPECT_EQ(sum, 1.0);
  }
  auto unseen = e.encode(vec({}, {{Feature::WarningPattern, "purple"}}));
  for (auto c : block) EXPECT_EQ(unseen[c], 0.0);
}

TEST(Encoder, FeatureSetsSelectColumns) {
  std::vector<LabeledInstance> train = {li(0, vec(), A), li(1, vec(), F)};
  auto leaked = Encoder::fit(train, FeatureSet::LeakedOnly);
  EXPECT_EQ(leaked.manifest().size(), 5u);
  EXPECT_EQ(leaked.manifest()[0], "warning context in method");
  auto rest = Encoder::fit(train, FeatureSet::WithoutLeaked);
  for (const auto& name : rest.manifest()) EXPECT_EQ(name.find("warning context"), std::string::npos);
  EXPECT_EQ(rest.manifest().size() + leaked.manifest().size(), Encoder::fit(train).manifest().size());
  EXPECT_THROW(Encoder::fit({}), ModelError);
  EXPECT_EQ(parse_feature_set(to_string(FeatureSet::WithoutLeaked)), FeatureSet::WithoutLeaked);
}

// --- fitting ---------------------------------------------------------------------

TEST(LinearMargin, SeparatesTwoClusters) {
  Rng rng(3);
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;
  for (int i = 0; i < 60; ++i) {
    const bool a = i % 2 == 0;
    rows.push_back({(a ? 2.0 : -2.0) + rng.uniform(-0.5, 0.5), (a ? 1.0 : -1.0) + rng.uniform(-0.5, 0.5)});
    labels.push_back(a ? A : F);
  }
  auto x = matrix(rows, labels);
  auto m = fit(ModelSpec{ModelKind::LinearMargin}, x);
  EXPECT_EQ(train_accuracy(m, x), 1.0);
  EXPECT_GT(m.weights[0], 0.0);
}

TEST(LinearMargin, SameSeedSameWeights) {
  auto s = generate(SynthConfig{});
  auto d = build_dataset(s.history, s.train_rev, s.test_rev, s.ref_rev, LeakMode::leak_free(), false);
  auto [train, test] = encode(d.train, d.test);
  ModelSpec spec{ModelKind::LinearMargin};
  spec.seed = 17;
  auto a = fit(spec, train);
  auto b = fit(spec, train);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ(score_all(a, test), score_all(b, test));
  spec.seed = 18;
  EXPECT_NE(fit(spec, train).weights, a.weights);
}

TEST(LinearMargin, SingleClassNamesMissingClass) {
  auto x = matrix({{1}, {2}}, {A, A});
  try {
    fit(ModelSpec{ModelKind::LinearMargin}, x);
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("FalseAlarm"), std::string::npos);
  }
  try {
    fit(ModelSpec{ModelKind::LinearMargin}, matrix({{1}, {2}}, {F, F}));
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("Actionable"), std::string::npos);
  }
  ModelSpec bad{ModelKind::LinearMargin};
  bad.lambda = 0;
  EXPECT_THROW(fit(bad, matrix({{1}, {2}}, {A, F})), ModelError);
}

TEST(LinearMargin, InvariantUnderAffineRescaling) {
  Rng rng(9);
  std::vector<LabeledInstance> train, test;
  auto make = [&](int id) {
    const double age = static_cast<double>(rng.below(500));
    const double dev = static_cast<double>(rng.below(9));
    const double loc = static_cast<double>(rng.below(2000));
    const bool a = age + 40 * dev + rng.uniform(-150, 150) > 400;
    return li(id, vec({{Feature::FileAge, age}, {Feature::Developers, dev}, {Feature::LocAddedPackage3Months, loc}}),
              a ? A : F);
  };
  for (int i = 0; i < 120; ++i) train.push_back(make(i));
  for (int i = 0; i < 60; ++i) test.push_back(make(1000 + i));
  auto rescale = [](std::vector<LabeledInstance> v) {
    for (auto& i : v) {
      i.features[Feature::FileAge] = i.features.number(Feature::FileAge) * 4 + 8;
      i.features[Feature::Developers] = i.features.number(Feature::Developers) * 2 - 64;
      i.features[Feature::LocAddedPackage3Months] = i.features.number(Feature::LocAddedPackage3Months) * 0.5;
    }
    return v;
  };
  auto run = [](const std::vector<LabeledInstance>& tr, const std::vector<LabeledInstance>& te) {
    auto [x, y] = encode(tr, te);
    auto m = fit(ModelSpec{ModelKind::LinearMargin}, x);
    std::vector<Label> out;
    for (std::size_t i = 0; i < y.size(); ++i) out.push_back(predict(m, y, i));
    return out;
  };
  EXPECT_EQ(run(train, test), run(rescale(train), rescale(test)));
}

TEST(Knn, OneNeighbourReproducesTrainingLabels) {
  Rng rng(5);
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;
  for (int i = 0; i < 40; ++i) {
    rows.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    labels.push_back(rng.bernoulli(0.4) ? A : F);
  }
  auto x = matrix(rows, labels);
  auto m = fit(ModelSpec{ModelKind::KNN, 1}, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(predict(m, x, i), labels[i]);
}

TEST(Knn, ThreeNeighbourMajority) {
  auto train = matrix({{0.0}, {1.0}, {2.0}, {10.0}, {11.0}}, {A, A, F, F, F});
  auto m = fit(ModelSpec{ModelKind::KNN, 3}, train);
  auto q = matrix({{0.5}}, {F});
  EXPECT_DOUBLE_EQ(score(m, q, 0), 2.0 / 3.0);
  EXPECT_EQ(predict(m, q, 0), A);
}

TEST(Knn, VoteTieGoesToActionable) {
  auto train = matrix({{0.0}, {1.0}, {5.0}}, {A, F, F});
  auto m = fit(ModelSpec{ModelKind::KNN, 2}, train);
  auto q = matrix({{0.4}}, {F});
  EXPECT_EQ(score(m, q, 0), 0.5);
  EXPECT_EQ(predict(m, q, 0), A);
}

TEST(Knn, DistanceTieBrokenByKey) {
  // Rows 0 and 1 are equidistant from the query; row 0 has the smaller key.
  auto train = matrix({{-1.0}, {1.0}}, {F, A});
  auto m = fit(ModelSpec{ModelKind::KNN, 1}, train);
  auto q = matrix({{0.0}}, {F});
  EXPECT_EQ(predict(m, q, 0), F);
  std::swap(train.keys[0], train.keys[1]);
  EXPECT_EQ(predict(fit(ModelSpec{ModelKind::KNN, 1}, train), q, 0), A);
}

TEST(Knn, KBounds) {
  auto train = matrix({{0.0}, {1.0}}, {A, F});
  EXPECT_THROW(fit(ModelSpec{ModelKind::KNN, 0}, train), ModelError);
  EXPECT_THROW(fit(ModelSpec{ModelKind::KNN, 3}, train), ModelError);
  EXPECT_NO_THROW(fit(ModelSpec{ModelKind::KNN, 2}, train));
}

TEST(Knn, DuplicationExploitGivesPerfectF1) {
  Rng rng(21);
  std::vector<std::vector<double>> rows, test_rows;
  std::vector<Label> labels, test_labels;
  for (int i = 0; i < 50; ++i) {
    rows.push_back({rng.uniform(), rng.uniform()});
    labels.push_back(rng.bernoulli(0.5) ? A : F);
  }
  for (int i = 0; i < 50; i += 2) {
    test_rows.push_back(rows[static_cast<std::size_t>(i)]);
    test_labels.push_back(labels[static_cast<std::size_t>(i)]);
  }
  auto m = fit(ModelSpec{ModelKind::KNN, 1}, matrix(rows, labels));
  auto r = evaluate(m, matrix(test_rows, test_labels));
  EXPECT_EQ(r.metrics.f1, 1.0);
  EXPECT_EQ(r.model, "knn(k=1)");
}

TEST(RepeatLabel, UsesBucketOfClassAndPattern) {
  EncodedMatrix train = matrix({{0}, {0}, {0}}, {A, F, F});
  train.keys = {key("P", "a.java", "p.A"), key("Q", "a.java", "p.A"), key("P", "b.java", "p.B")};
  auto m = fit(ModelSpec{ModelKind::RepeatLabel}, train);
  EncodedMatrix test = matrix({{0}, {0}, {0}}, {F, F, F});
  test.keys = {key("P", "a2.java", "p.A", std::string("other()V")), key("Q", "a.java", "p.A"),
               key("R", "a.java", "p.A")};
  EXPECT_EQ(predict(m, test, 0), A);
  EXPECT_EQ(score(m, test, 0), 1.0);
  EXPECT_EQ(predict(m, test, 1), F);
  EXPECT_EQ(score(m, test, 2), 0.0);
  EXPECT_EQ(predict(m, test, 2), F);
}

TEST(RepeatLabel, SeededChoiceAmongCandidates) {
  EncodedMatrix train = matrix({{0}, {0}, {0}, {0}}, {A, F, A, F});
  for (int i = 0; i < 4; ++i) train.keys[static_cast<std::size_t>(i)] = key("P", "F" + std::to_string(i) + ".java", "p.C");
  EncodedMatrix test = matrix(std::vector<std::vector<double>>(20, {0.0}), std::vector<Label>(20, F));
  for (int i = 0; i < 20; ++i) test.keys[static_cast<std::size_t>(i)] = key("P", "T" + std::to_string(i) + ".java", "p.C");
  std::set<std::vector<double>> outcomes;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    ModelSpec spec{ModelKind::RepeatLabel};
    spec.seed = seed;
    auto m = fit(spec, train);
    auto s = score_all(m, test);
    EXPECT_EQ(s, score_all(fit(spec, train), test));
    // A prediction does not depend on which other rows get scored.
    EncodedMatrix one = test;
    one.rows.resize(1);
    one.keys.resize(1);
    one.labels.resize(1);
    EXPECT_EQ(score(m, one, 0), s[0]);
    outcomes.insert(s);
  }
  EXPECT_GT(outcomes.size(), 1u);
}

TEST(ConstantActionable, MetricsIdentity) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    std::vector<std::vector<double>> rows(n, {0.0});
    std::vector<Label> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(rng.bernoulli(0.3) ? A : F);
    if (std::count(labels.begin(), labels.end(), A) == 0) labels[0] = A;
    auto x = matrix(rows, labels);
    auto m = fit(ModelSpec{ModelKind::ConstantActionable}, x);
    auto r = evaluate(m, x);
    const double a = static_cast<double>(std::count(labels.begin(), labels.end(), A)) / static_cast<double>(n);
    EXPECT_EQ(r.metrics.recall, 1.0);
    EXPECT_EQ(r.metrics.precision, a);
    EXPECT_EQ(r.metrics.f1, constant_actionable_f1(a));
    EXPECT_EQ(r.baseline_f1, r.metrics.f1);
    EXPECT_EQ(r.auc.value, 0.5);
  }
}

TEST(Models, RejectBadTrainingSets) {
  EncodedMatrix empty;
  for (auto kind : {ModelKind::ConstantActionable, ModelKind::RepeatLabel, ModelKind::KNN, ModelKind::LinearMargin})
    EXPECT_THROW(fit(ModelSpec{kind}, empty), ModelError);
  EXPECT_THROW(fit(ModelSpec{ModelKind::KNN}, matrix({{0}}, {Label::Unknown})), ModelError);
}

TEST(Models, ManifestMismatchNamesColumn) {
  auto train = matrix({{0, 1}, {1, 0}}, {A, F});
  auto m = fit(ModelSpec{ModelKind::LinearMargin}, train);
  auto other = train;
  other.columns[1] = "renamed";
  try {
    score(m, other, 0);
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("x1"), std::string::npos);
  }
  auto reordered = train;
  std::swap(reordered.columns[0], reordered.columns[1]);
  EXPECT_THROW(score_all(m, reordered), ModelError);
}

TEST(Models, SaveLoadRoundTrip) {
  auto s = generate(SynthConfig{});
  auto d = build_dataset(s.history, s.train_rev, s.test_rev, s.ref_rev, LeakMode::leak_free(), false);
  auto [train, test] = encode(d.train, d.test);
  for (auto kind : {ModelKind::ConstantActionable, ModelKind::RepeatLabel, ModelKind::KNN, ModelKind::LinearMargin}) {
    ModelSpec spec{kind, 3};
    spec.seed = 5;
    auto m = fit(spec, train);
    const auto text = save_model(m);
    auto back = load_model(text);
    EXPECT_EQ(back, m) << to_string(kind);
    EXPECT_EQ(save_model(back), text);
    EXPECT_EQ(score_all(back, test), score_all(m, test));
  }
  EXPECT_THROW(load_model("{"), ModelError);
  EXPECT_THROW(load_model("{\"format_version\": 9}"), ModelError);
  EXPECT_THROW(load_model("{\"format_version\": 1, \"kind\": \"svm\"}"), ModelError);
}

TEST(Models, KindNamesRoundTrip) {
  for (auto kind : {ModelKind::ConstantActionable, ModelKind::RepeatLabel, ModelKind::KNN, ModelKind::LinearMargin})
    EXPECT_EQ(parse_model_kind(to_string(kind)), kind);
  EXPECT_FALSE(parse_model_kind("svm"));
}
