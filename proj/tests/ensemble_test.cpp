#include "geoshift/ensemble.hpp"

#include <gtest/gtest.h>

#include <limits>

#include "test_util.hpp"

using geoshift::EnsembleSpec;
using geoshift::GridPoint;
using geoshift::LabelSet;
using geoshift::Matrix;
using geoshift::SearchResult;
using geoshift::search_weights;
using geoshift::weighted_scores;
using geoshift::WeightSearchConfig;

TEST(MeanScoresTest, HandValues) {
  Matrix a(1, 2, {0.2, 0.8});
  Matrix b(1, 2, {0.8, 0.2});
  const Matrix mean = geoshift::mean_scores({a, b});
  EXPECT_DOUBLE_EQ(mean.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(mean.at(0, 1), 0.5);
  EXPECT_EQ(geoshift::mean_scores({a}), a);
}

TEST(WeightedScoresTest, ConvexIdentity) {
  Matrix s(2, 2, {0.3, 0.7, 0.6, 0.4});
  const Matrix out = weighted_scores({s, s, s}, {0.2, 0.5, 0.3});
  for (size_t i = 0; i < s.data.size(); ++i) EXPECT_NEAR(out.data[i], s.data[i], 1e-15);
}

TEST(WeightedScoresTest, HandValues) {
  Matrix a(1, 2, {1.0, 0.0});
  Matrix b(1, 2, {0.0, 1.0});
  const Matrix out = weighted_scores({a, b}, {0.6, 0.4});
  EXPECT_DOUBLE_EQ(out.at(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(out.at(0, 1), 0.4);
}

TEST(WeightedScoresTest, TableWeightsAreValid) {
  // The published default weights form a valid spec (sum to 1).
  EnsembleSpec spec;
  spec.group_names = {"no_tuned", "alpha_0", "alpha_0.5", "alpha_0.9"};
  spec.weights = {0.05, 0.6, 0.3, 0.05};
  spec.member_paths = {"", "", "", ""};
  EXPECT_NO_THROW(spec.validate());
}

TEST(WeightedScoresTest, CountMismatchThrows) {
  Matrix a(1, 1, {0.5});
  EXPECT_THROW(weighted_scores({a, a}, {1.0}), geoshift::config_error);
  EXPECT_THROW(weighted_scores({a, a}, {0.7, 0.7}), geoshift::config_error);
}

namespace {

// Two samples, two classes; truth chosen so group A nails stage1 and
// group B nails local validation.
struct TinySetup {
  std::vector<Matrix> stage1_scores;
  std::vector<LabelSet> stage1_truth;
  std::vector<Matrix> local_scores;
  std::vector<LabelSet> local_truth;
};

TinySetup opposed_groups() {
  TinySetup t;
  t.stage1_truth = {{0}, {1}};
  t.local_truth = {{1}, {0}};
  // Group 0 predicts stage1 truth confidently, group 1 predicts local truth.
  t.stage1_scores = {Matrix(2, 2, {0.9, 0.1, 0.1, 0.9}), Matrix(2, 2, {0.1, 0.9, 0.9, 0.1})};
  t.local_scores = {Matrix(2, 2, {0.9, 0.1, 0.1, 0.9}), Matrix(2, 2, {0.1, 0.9, 0.9, 0.1})};
  return t;
}

}  // namespace

TEST(SearchWeightsTest, DominantGroupTakesAll) {
  // Group 0 is right with little margin, group 1 exactly wrong: any
  // dilution flips a prediction, so only weight 1 on group 0 is optimal.
  std::vector<Matrix> scores = {Matrix(2, 2, {0.55, 0.45, 0.45, 0.55}),
                                Matrix(2, 2, {0.0, 1.0, 1.0, 0.0})};
  const std::vector<LabelSet> truth = {{0}, {1}};
  WeightSearchConfig cfg;
  cfg.grid_step = 0.25;
  cfg.epsilon = 0.0;
  const SearchResult res = search_weights(scores, truth, scores, truth, cfg);
  EXPECT_DOUBLE_EQ(res.weights[0], 1.0);
  EXPECT_DOUBLE_EQ(res.weights[1], 0.0);
}

TEST(SearchWeightsTest, MatchesThreePointExhaustiveOracle) {
  const TinySetup t = opposed_groups();
  WeightSearchConfig cfg;
  cfg.grid_step = 0.5;  // grid: (0,1), (0.5,0.5), (1,0)
  cfg.epsilon = 0.1;
  const SearchResult res = search_weights(t.stage1_scores, t.stage1_truth, t.local_scores,
                                          t.local_truth, cfg);

  // Exhaustive oracle over the same three points.
  struct Pt {
    std::vector<double> w;
    double s1, lo;
  };
  std::vector<Pt> pts;
  for (int i = 0; i <= 2; ++i) {
    std::vector<double> w = {i / 2.0, 1.0 - i / 2.0};
    auto combine = [&](const std::vector<Matrix>& scores) {
      Matrix out(2, 2, 0.0);
      for (size_t g = 0; g < scores.size(); ++g)
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] += w[g] * scores[g].data[j];
      return out;
    };
    const double s1 = geoshift::evaluate(combine(t.stage1_scores), t.stage1_truth, 0.5).mean_f2;
    const double lo = geoshift::evaluate(combine(t.local_scores), t.local_truth, 0.5).mean_f2;
    pts.push_back({w, s1, lo});
  }
  double best_s1 = -1.0;
  for (const auto& p : pts) best_s1 = std::max(best_s1, p.s1);
  const Pt* want = nullptr;
  for (const auto& p : pts) {
    if (p.s1 < best_s1 - cfg.epsilon) continue;
    if (!want || p.lo > want->lo || (p.lo == want->lo && p.s1 > want->s1)) want = &p;
  }
  ASSERT_NE(want, nullptr);
  EXPECT_EQ(res.weights, want->w);
}

TEST(SearchWeightsTest, InfiniteEpsilonGivesLocalMaximizer) {
  const TinySetup t = opposed_groups();
  WeightSearchConfig cfg;
  cfg.grid_step = 0.5;
  cfg.epsilon = std::numeric_limits<double>::infinity();
  const SearchResult res = search_weights(t.stage1_scores, t.stage1_truth, t.local_scores,
                                          t.local_truth, cfg);
  // Group 1 alone maximizes local validation.
  EXPECT_DOUBLE_EQ(res.weights[0], 0.0);
  EXPECT_DOUBLE_EQ(res.weights[1], 1.0);
}

TEST(SearchWeightsTest, ChosenPointAlwaysFeasible) {
  geoshift::Rng rng = geoshift::make_rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const size_t n = 12, c = 5;
    std::vector<Matrix> s1(3, Matrix(n, c)), lo(3, Matrix(n, c));
    for (auto& m : s1)
      for (double& v : m.data) v = rng.uniform(0.0, 1.0);
    for (auto& m : lo)
      for (double& v : m.data) v = rng.uniform(0.0, 1.0);
    std::vector<LabelSet> t1(n), t2(n);
    for (auto& t : t1)
      for (int k = 0; k < static_cast<int>(c); ++k)
        if (rng.bernoulli(0.4)) t.push_back(k);
    for (auto& t : t2)
      for (int k = 0; k < static_cast<int>(c); ++k)
        if (rng.bernoulli(0.4)) t.push_back(k);
    WeightSearchConfig cfg;
    cfg.grid_step = 0.2;
    cfg.epsilon = 0.01;
    const SearchResult res = search_weights(s1, t1, lo, t2, cfg);
    EXPECT_GE(res.stage1_f2, res.best_stage1_f2 - cfg.epsilon);
    double sum = 0.0;
    for (double w : res.weights) sum += w;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(SearchWeightsTest, BadGridStepThrows) {
  const TinySetup t = opposed_groups();
  WeightSearchConfig cfg;
  cfg.grid_step = 0.3;  // does not divide 1
  EXPECT_THROW(search_weights(t.stage1_scores, t.stage1_truth, t.local_scores, t.local_truth, cfg),
               geoshift::config_error);
}

TEST(EnsembleSpecTest, TextRoundtrip) {
  EnsembleSpec spec;
  spec.group_names = {"no_tuned", "alpha_0", "alpha_0.5", "alpha_0.9"};
  spec.weights = {0.05, 0.6, 0.3, 0.05};
  spec.member_paths = {"out/base.gsck", "out/adapt_a0", "out/adapt_a0.5", "out/adapt_a0.9"};
  const auto dir = oracle::temp_dir("ensemble_spec");
  geoshift::write_ensemble_spec(spec, dir / "spec.txt");
  const EnsembleSpec loaded = geoshift::read_ensemble_spec(dir / "spec.txt");
  EXPECT_EQ(loaded.group_names, spec.group_names);
  EXPECT_EQ(loaded.weights, spec.weights);
  EXPECT_EQ(loaded.member_paths, spec.member_paths);
  std::filesystem::remove_all(dir);
}

TEST(EnsembleSpecTest, InvalidWeightsRejected) {
  EnsembleSpec spec;
  spec.group_names = {"a", "b"};
  spec.weights = {0.7, 0.7};
  spec.member_paths = {"", ""};
  EXPECT_THROW(spec.validate(), geoshift::config_error);
  spec.weights = {-0.2, 1.2};
  EXPECT_THROW(spec.validate(), geoshift::config_error);
}

TEST(GroupScoresTest, MatchesNaiveOracleOnRealModels) {
  geoshift::GeneratorConfig gcfg = geoshift::GeneratorConfig::desk_default(6);
  gcfg.height = 6;
  gcfg.width = 6;
  gcfg.source_train_size = 30;
  gcfg.source_val_size = 20;
  gcfg.target_tuning_size = 12;
  gcfg.target_eval_size = 20;
  gcfg.target_hidden_size = 12;
  gcfg.seed = 9;
  const auto bundle = geoshift::generate(gcfg);
  geoshift::ModelConfig mcfg;
  mcfg.input_dim = 6 * 6 * 3;
  mcfg.hidden_dims = {12, 8};
  mcfg.num_classes = 6;

  geoshift::Rng rng = geoshift::make_rng(10);
  geoshift::Group g;
  g.name = "mixed";
  for (int member = 0; member < 2; ++member) {
    geoshift::FoldModels fm;
    for (int fold = 0; fold < 3; ++fold) fm.models.push_back(geoshift::init(mcfg, rng));
    g.members.push_back(std::move(fm));
  }
  const Matrix x = geoshift::flatten_images(bundle.target_eval);
  const Matrix got = geoshift::group_scores(g, x);

  // Naive: mean over members of (mean over folds).
  Matrix want(got.rows, got.cols, 0.0);
  for (const auto& fm : g.members) {
    Matrix member_mean(got.rows, got.cols, 0.0);
    for (const auto& p : fm.models) {
      const Matrix s = geoshift::forward(p, x);
      for (size_t j = 0; j < s.data.size(); ++j) member_mean.data[j] += s.data[j];
    }
    for (double& v : member_mean.data) v /= 3.0;
    for (size_t j = 0; j < want.data.size(); ++j) want.data[j] += member_mean.data[j];
  }
  for (double& v : want.data) v /= 2.0;
  for (size_t j = 0; j < want.data.size(); ++j) EXPECT_NEAR(got.data[j], want.data[j], 1e-14);
}
