#include <gtest/gtest.h>

#include <cmath>

#include "thermo/gbt.hpp"

using namespace thermo;

namespace {

gbt::Hyper stump() {
  gbt::Hyper hp;
  hp.max_depth = 1;
  hp.gamma = 0;
  hp.lambda = 1;
  hp.eta = 1;
  hp.rounds = 1;
  hp.min_child_weight = 0;
  return hp;
}

// y depends on x0*x1 and a step in x2, which a depth-2 tree cannot express well.
Dataset interaction_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = uniform(rng, -1, 1), b = uniform(rng, -1, 1), c = uniform(rng, 0, 1);
    x.insert(x.end(), {a, b, c});
    y.push_back(10 * a * b + (c > 0.5 ? 3 : 0) + (a > 0 && c < 0.3 ? 4 : 0) + normal(rng, 0, 0.1));
  }
  return make_dataset("h", {"a", "b", "c"}, x, y);
}

double train_rmse(const gbt::TreeEnsemble& m, const Dataset& d, std::size_t trees) {
  std::vector<double> p;
  for (std::size_t i = 0; i < d.rows(); ++i) p.push_back(m.predict_prefix(d.row(i), trees));
  return rmse(d.target, p);
}

}  // namespace

TEST(Gbt, ZeroRoundsPredictsMean) {
  auto hp = gbt::Hyper{};
  hp.rounds = 0;
  const auto d = make_dataset("h", {"x"}, {1, 2, 3, 4}, {1, 2, 3, 10});
  const auto m = gbt::train(d, hp, 1);
  EXPECT_TRUE(m.trees.empty());
  for (double x : {-5.0, 2.0, 100.0}) EXPECT_EQ(m.predict(std::vector<double>{x}), 4.0);
}

TEST(Gbt, TwoPointHandExample) {
  const auto d = make_dataset("h", {"x"}, {0, 1}, {0, 10});
  const auto m = gbt::train(d, stump(), 1);
  EXPECT_DOUBLE_EQ(m.predict(std::vector<double>{0.0}), 2.5);
  EXPECT_DOUBLE_EQ(m.predict(std::vector<double>{1.0}), 7.5);
}

TEST(Gbt, HugeGammaBlocksEverySplit) {
  auto hp = stump();
  hp.gamma = 1e9;
  hp.max_depth = 4;
  hp.rounds = 5;
  const auto d = interaction_data(100, 3);
  const auto m = gbt::train(d, hp, 1);
  for (const auto& t : m.trees) EXPECT_EQ(t.internal_count(), 0u);
  // a root leaf still moves toward mean residual 0, so the prediction stays at base_score
  for (std::size_t i = 0; i < d.rows(); ++i) EXPECT_NEAR(m.predict(d.row(i)), m.base_score, 1e-9);
}

TEST(Gbt, PredictionIsBasePlusScaledTreeSum) {
  auto hp = gbt::Hyper{};
  hp.rounds = 12;
  hp.eta = 0.3;
  const auto d = interaction_data(120, 4);
  const auto m = gbt::train(d, hp, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto x = d.row(i);
    double s = m.base_score;
    EXPECT_EQ(m.predict_prefix(x, 0), m.base_score);
    for (std::size_t k = 0; k < m.trees.size(); ++k) {
      s += hp.eta * m.trees[k].eval(x);
      EXPECT_NEAR(m.predict_prefix(x, k + 1), s, 1e-12);
    }
  }
}

TEST(Gbt, SingleLeafTreeAddsEtaTimesWeight) {
  gbt::TreeEnsemble m;
  m.base_score = 3;
  m.hyper.eta = 0.5;
  m.feature_names = {"x"};
  gbt::Tree t;
  t.nodes.push_back({});
  t.nodes[0].weight = 4;
  m.trees.push_back(t);
  EXPECT_EQ(m.predict(std::vector<double>{0.0}), 5.0);
}

TEST(Gbt, TrainingErrorNeverIncreasesWithoutSubsampling) {
  auto hp = gbt::Hyper{};
  hp.rounds = 40;
  const auto d = interaction_data(150, 5);
  const auto m = gbt::train(d, hp, 1);
  double prev = train_rmse(m, d, 0);
  for (std::size_t k = 1; k <= m.trees.size(); ++k) {
    const double cur = train_rmse(m, d, k);
    EXPECT_LE(cur, prev + 1e-12) << "round " << k;
    prev = cur;
  }
}

TEST(Gbt, MinChildWeightLimitsLeafSize) {
  auto hp = gbt::Hyper{};
  hp.min_child_weight = 30;
  hp.rounds = 5;
  const auto d = interaction_data(100, 6);
  const auto m = gbt::train(d, hp, 1, [&](const gbt::RoundInfo& info) {
    for (const auto& [leaf, rows] : info.leaf_members) EXPECT_GE(rows.size(), 30u);
  });
  EXPECT_EQ(m.trees.size(), 5u);
}

TEST(Gbt, SameSeedSameModelWithSubsampling) {
  auto hp = gbt::Hyper{};
  hp.subsample = 0.7;
  hp.rounds = 15;
  const auto d = interaction_data(100, 7);
  EXPECT_EQ(gbt::serialize(gbt::train(d, hp, 11)), gbt::serialize(gbt::train(d, hp, 11)));
  EXPECT_NE(gbt::serialize(gbt::train(d, hp, 11)), gbt::serialize(gbt::train(d, hp, 12)));
}

TEST(Gbt, EarlyStoppingTruncatesToBestRound) {
  auto hp = gbt::Hyper{};
  hp.rounds = 300;
  hp.eta = 0.5;
  hp.early_stopping = true;
  hp.patience = 5;
  const auto d = interaction_data(80, 8);
  const auto m = gbt::train(d, hp, 1);
  EXPECT_LT(m.trees.size(), 300u);
  EXPECT_GE(m.trees.size(), 1u);
}

TEST(Gbt, InvalidHyperRejected) {
  const auto d = interaction_data(20, 1);
  auto hp = gbt::Hyper{};
  hp.eta = 0;
  EXPECT_THROW(gbt::train(d, hp, 1), InvalidArgument);
  hp = {};
  hp.subsample = 1.5;
  EXPECT_THROW(gbt::train(d, hp, 1), InvalidArgument);
  hp = {};
  EXPECT_THROW(hp.set("colsample", 1), InvalidArgument);
}

TEST(Importance, EmptyEnsembleAllZero) {
  gbt::TreeEnsemble m;
  m.feature_names = {"a", "b"};
  const auto imp = gbt::feature_importance(m);
  EXPECT_EQ(imp.at("a"), 0u);
  EXPECT_EQ(imp.at("b"), 0u);
}

TEST(Importance, SingleSplitCountsOnce) {
  const auto d = make_dataset("h", {"a", "b"}, {0, 5, 1, 5, 2, 5, 3, 5}, {0, 0, 10, 10});
  const auto m = gbt::train(d, stump(), 1);
  const auto imp = gbt::feature_importance(m);
  EXPECT_EQ(imp.at("a"), 1u);
  EXPECT_EQ(imp.at("b"), 0u);
  EXPECT_EQ(gbt::rank_features(m), (std::vector<std::string>{"a", "b"}));
}

TEST(Importance, RankingPutsInformativeFeaturesFirst) {
  Rng rng(3);
  std::vector<double> x, y;
  for (int i = 0; i < 200; ++i) {
    const double noise = uniform01(rng), signal = uniform01(rng);
    x.insert(x.end(), {noise, signal});
    y.push_back(20 * signal);
  }
  auto hp = gbt::Hyper{};
  hp.rounds = 20;
  hp.gamma = 1.0;
  const auto m = gbt::train(make_dataset("h", {"noise", "signal"}, x, y), hp, 1);
  EXPECT_EQ(gbt::rank_features(m).front(), "signal");
}

TEST(GridSearch, SinglePointIsReturned) {
  const auto d = interaction_data(60, 2);
  const auto res = gbt::grid_search(d, {{"eta", {0.2}}}, 3, 1);
  EXPECT_EQ(res.best.eta, 0.2);
  EXPECT_EQ(res.cells.size(), 1u);
}

TEST(GridSearch, DeeperTreesWinOnInteractions) {
  const auto d = interaction_data(200, 9);
  auto base = gbt::Hyper{};
  base.rounds = 40;
  const auto res = gbt::grid_search(d, {{"eta", {0.1}}, {"max_depth", {2, 4}}}, 5, 1, base);
  EXPECT_EQ(res.best.max_depth, 4);
  ASSERT_EQ(res.cells.size(), 2u);
  for (const auto& [hp, rep] : res.cells) {
    EXPECT_EQ(rep.mean_rmse, kfold_cv(d, 5, gbt::trainer(hp), 1).mean_rmse);
  }
  EXPECT_LT(res.cells[1].second.mean_rmse, res.cells[0].second.mean_rmse);
}

TEST(GridSearch, EmptyGridRejected) {
  const auto d = interaction_data(20, 1);
  EXPECT_THROW(gbt::grid_search(d, {}, 3, 1), InvalidArgument);
  EXPECT_THROW(gbt::grid_search(d, {{"eta", {}}}, 3, 1), InvalidArgument);
}

TEST(ThresholdCurve, FullFeatureSetMatchesFullModel) {
  const auto d = interaction_data(90, 10);
  auto hp = gbt::Hyper{};
  hp.rounds = 15;
  const std::vector<std::string> ranked = {"b", "a", "c"};
  const auto curve = gbt::threshold_curve(d, ranked, 3, 4, hp);
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_EQ(curve[0].n_features, 1u);
  // split ties break by column order, so compare against the same permutation
  const std::vector<std::size_t> cols = {1, 0, 2};
  EXPECT_EQ(curve[2].mean_rmse, kfold_cv(d.select_columns(cols), 3, gbt::trainer(hp), 4).mean_rmse);
  const auto natural = gbt::threshold_curve(d, d.feature_names, 3, 4, hp);
  EXPECT_EQ(natural[2].mean_rmse, kfold_cv(d, 3, gbt::trainer(hp), 4).mean_rmse);
}

TEST(GbtFile, RoundTripPredictsIdentically) {
  auto hp = gbt::Hyper{};
  hp.rounds = 10;
  const auto d = interaction_data(80, 12);
  const auto m = gbt::train(d, hp, 1);
  const auto text = gbt::serialize(m);
  const auto back = gbt::parse_gbt_model(text);
  EXPECT_EQ(gbt::serialize(back), text);
  for (std::size_t i = 0; i < d.rows(); ++i) EXPECT_EQ(back.predict(d.row(i)), m.predict(d.row(i)));
}

TEST(GbtFile, CorruptFilesRejected) {
  auto hp = gbt::Hyper{};
  hp.rounds = 2;
  const auto text = gbt::serialize(gbt::train(interaction_data(30, 1), hp, 1));
  EXPECT_THROW(gbt::parse_gbt_model(text + "extra 1\n"), Error);
  EXPECT_THROW(gbt::parse_gbt_model(text.substr(0, text.size() / 2)), Error);
}
