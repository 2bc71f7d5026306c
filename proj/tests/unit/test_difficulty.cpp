#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../support/temp_dir.hpp"
#include "difficalib/difficulty.hpp"
#include "difficalib/error.hpp"
#include "difficalib/synthetic.hpp"

using namespace difficalib;

namespace {

// Unit-variance 1-D bank with the given class means and agnostic mean.
GaussianBank line_bank(std::vector<double> class_means, double agn_mean) {
  RowMatrix means(class_means.size(), 1);
  for (std::size_t k = 0; k < class_means.size(); ++k) means(k, 0) = class_means[k];
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  return GaussianBank(means, one, Eigen::VectorXd::Constant(1, agn_mean), one, 0.0,
                      std::vector<std::uint64_t>(class_means.size(), 1));
}

DifficultyScores scores_of(std::vector<std::uint64_t> ids, std::vector<double> rmd) {
  DifficultyScores s;
  s.ids = std::move(ids);
  s.weight = difficulty_weights(rmd, s.temperature, s.offset, s.scaling);
  s.rmd = std::move(rmd);
  return s;
}

EmbeddingDataset small_mixture(std::uint64_t seed = 3) {
  MixtureSpec spec;
  spec.num_classes = 3;
  spec.dim = 4;
  spec.samples_per_class = 30;
  spec.seed = seed;
  return generate_mixture(spec);
}

}  // namespace

TEST(Rmd, ArithmeticOnDefinition) {
  const std::vector<float> f{1.0f};
  // d2_class = 1, d2_agn = 4
  EXPECT_DOUBLE_EQ(rmd_score(line_bank({0.0, 9.0}, -1.0), f, 0), -3.0);
  // d2_class = 9, d2_agn = 1
  EXPECT_DOUBLE_EQ(rmd_score(line_bank({-2.0, 9.0}, 0.0), f, 0), 8.0);
}

TEST(Rmd, AtClassMeanAwayFromGlobalMeanIsNegative) {
  const auto ds = small_mixture();
  const auto bank = fit_gaussian_bank(ds);
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> mu(ds.dim());
    for (std::size_t j = 0; j < ds.dim(); ++j) mu[j] = bank.class_means()(k, j);
    EXPECT_LT(rmd_score(bank, std::span<const double>(mu), k), 0.0);
  }
}

TEST(Scoring, ComposesPerSampleCalls) {
  const auto ds = EmbeddingDataset::create({0.5f, 3.0f}, {0, 1}, {4, 9}, 1, 2);
  const auto bank = line_bank({0.0, 2.0}, 1.0);
  const auto s = score_dataset(bank, ds);
  EXPECT_EQ(s.ids, (std::vector<std::uint64_t>{4, 9}));
  EXPECT_EQ(s.rmd[0], rmd_score(bank, ds.row(0), 0));
  EXPECT_EQ(s.rmd[1], rmd_score(bank, ds.row(1), 1));
  EXPECT_EQ(s.scorer, Scorer::kRmd);
}

TEST(Scoring, MdScorerHoldsClassDistanceOnly) {
  const auto ds = small_mixture();
  const auto bank = fit_gaussian_bank(ds);
  ScoreOptions opts;
  opts.scorer = Scorer::kMd;
  const auto s = score_dataset(bank, ds, opts);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(s.rmd[i], bank.mahalanobis_class(ds.row(i), ds.labels()[i]));
  }
  EXPECT_EQ(s.scorer, Scorer::kMd);
}

TEST(Scoring, IdenticalSamplesGetEqualWeights) {
  const auto ds = EmbeddingDataset::create({1, 1, 1, 1, 1, 1, 1, 1}, {0, 1, 0, 1}, {0, 1, 2, 3}, 2, 2);
  for (const auto scaling : {ScoreScaling::kNone, ScoreScaling::kMinMax}) {
    ScoreOptions opts;
    opts.scaling = scaling;
    const auto s = score_dataset(fit_gaussian_bank(ds, 1e-2), ds, opts);
    for (const double w : s.weight) EXPECT_EQ(w, s.weight[0]);
  }
}

TEST(Scoring, RejectsMismatchedBank) {
  const auto ds = small_mixture();
  EXPECT_THROW(score_dataset(line_bank({0.0, 1.0}, 0.0), ds), ValidationError);
}

TEST(Weights, HandEvaluatedExample) {
  const std::vector<double> rmd{0.0, 0.7 * std::log(2.0)};
  const auto s = normalize_weights(rmd, 0.7, 1e-3);
  EXPECT_NEAR(s[0], 1.0 / 2.001, 1e-15);
  EXPECT_NEAR(s[1], 2.0 / 2.001, 1e-15);
  EXPECT_NEAR(s[0], 0.49975, 1e-5);
  EXPECT_NEAR(s[1], 0.99950, 1e-5);
}

TEST(Weights, SingleSample) {
  const std::vector<double> rmd{0.4};
  const auto s = normalize_weights(rmd, 0.7, 1e-3);
  EXPECT_NEAR(s[0], 1.0 / (1.0 + 1e-3 * std::exp(-0.4 / 0.7)), 1e-15);
  EXPECT_LT(s[0], 1.0);
}

TEST(Weights, LargeScoresDoNotOverflow) {
  const std::vector<double> rmd{1000.0, 999.0};
  const auto s = normalize_weights(rmd, 0.7, 1e-3);
  ASSERT_TRUE(std::isfinite(s[0]) && std::isfinite(s[1]));
  const long double expected = std::exp(-1.0L / 0.7L);
  EXPECT_NEAR(s[1] / s[0], static_cast<double>(expected), 1e-12);
  EXPECT_EQ(s[0], 1.0 / (1.0 + 1e-3 * std::exp(-1000.0 / 0.7)));
}

TEST(Weights, MonotoneWithTiesAndShiftCovariantRatios) {
  std::mt19937_64 gen(12);
  std::uniform_int_distribution<int> grid(-6, 6);
  std::vector<double> rmd(40);
  for (auto& r : rmd) r = 0.5 * grid(gen);
  const auto s = normalize_weights(rmd, 0.9, 1e-2);
  auto shifted = rmd;
  for (auto& r : shifted) r += 3.0;
  const auto t = normalize_weights(shifted, 0.9, 1e-2);
  for (std::size_t i = 0; i < rmd.size(); ++i) {
    EXPECT_GT(s[i], 0.0);
    EXPECT_LT(s[i], 1.0);
    for (std::size_t j = 0; j < rmd.size(); ++j) {
      if (rmd[i] > rmd[j]) {
        EXPECT_GT(s[i], s[j]);
      }
      if (rmd[i] == rmd[j]) {
        EXPECT_EQ(s[i], s[j]);
      }
    }
    EXPECT_NEAR(s[i] / s[0], t[i] / t[0], 1e-12 * (s[i] / s[0]));
  }
}

TEST(Weights, RejectsBadParameters) {
  const std::vector<double> rmd{1.0};
  EXPECT_THROW(normalize_weights(rmd, 0.0, 1e-3), ValidationError);
  EXPECT_THROW(normalize_weights(rmd, 0.7, 0.0), ValidationError);
  EXPECT_THROW(normalize_weights({}, 0.7, 1e-3), ValidationError);
  const std::vector<double> bad{NAN};
  EXPECT_THROW(normalize_weights(bad, 0.7, 1e-3), ValidationError);
}

TEST(Weights, MinMaxScalingFeedsUnitIntervalScores) {
  const std::vector<double> raw{-4.0, 0.0, 6.0};
  const std::vector<double> unit{0.0, 0.4, 1.0};
  EXPECT_EQ(difficulty_weights(raw, 0.7, 1e-3, ScoreScaling::kMinMax), normalize_weights(unit, 0.7, 1e-3));
  EXPECT_EQ(difficulty_weights(raw, 0.7, 1e-3, ScoreScaling::kNone), normalize_weights(raw, 0.7, 1e-3));
  const std::vector<double> flat{2.0, 2.0};
  const auto w = difficulty_weights(flat, 0.7, 1e-3, ScoreScaling::kMinMax);
  EXPECT_EQ(w[0], w[1]);
}

TEST(Weights, ScorerAndScalingNamesRoundTrip) {
  for (const auto s : {Scorer::kRmd, Scorer::kMd, Scorer::kKmeans, Scorer::kImported}) {
    EXPECT_EQ(parse_scorer(to_string(s)), s);
  }
  EXPECT_EQ(parse_scaling("none"), ScoreScaling::kNone);
  EXPECT_THROW(parse_scorer("gmm"), ConfigError);
}

TEST(KMeans, OneClusterPerPointGivesZero) {
  const auto ds = EmbeddingDataset::create({0, 0, 1, 0, 0, 1, 5, 5}, {0, 0, 1, 1}, {0, 1, 2, 3}, 2, 2);
  for (const double v : kmeans_difficulty(ds, 4, 20, 1)) EXPECT_EQ(v, 0.0);
}

TEST(KMeans, OneClusterIsDistanceToMean) {
  const auto ds = small_mixture();
  std::vector<double> mean(ds.dim(), 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ds.dim(); ++j) mean[j] += ds.row(i)[j] / static_cast<double>(ds.size());
  const auto d = kmeans_difficulty(ds, 1, 10, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double expected = 0.0;
    for (std::size_t j = 0; j < ds.dim(); ++j) expected += std::pow(ds.row(i)[j] - mean[j], 2);
    EXPECT_NEAR(d[i], expected, 1e-9);
  }
}

TEST(KMeans, TwoBlobsCostNonIncreasingAndAssignmentsNearest) {
  MixtureSpec spec;
  spec.num_classes = 2;
  spec.dim = 2;
  spec.samples_per_class = 50;
  spec.separation = 20.0;
  const auto ds = generate_mixture(spec);
  const auto r = kmeans(ds, 2, 30, 4);
  for (std::size_t t = 1; t < r.cost_history.size(); ++t) {
    EXPECT_LE(r.cost_history[t], r.cost_history[t - 1] + 1e-9);
  }
  double cost = 0.0, max_within = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double best = INFINITY;
    for (Eigen::Index c = 0; c < r.centroids.rows(); ++c) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < ds.dim(); ++j) d2 += std::pow(ds.row(i)[j] - r.centroids(c, j), 2);
      best = std::min(best, d2);
    }
    EXPECT_NEAR(r.sq_distance[i], best, 1e-9);
    cost += best;
    max_within = std::max(max_within, best);
    // Clusters recover the blobs.
    EXPECT_EQ(r.assignment[i] == r.assignment[0], ds.labels()[i] == ds.labels()[0]);
  }
  EXPECT_NEAR(r.cost_history.back(), cost, 1e-6);
  const double between = (r.centroids.row(0) - r.centroids.row(1)).squaredNorm();
  EXPECT_LT(max_within, between);
}

TEST(KMeans, ScorerUsesDatasetClassCountByDefault) {
  const auto ds = small_mixture();
  ScoreOptions opts;
  opts.scorer = Scorer::kKmeans;
  const auto s = score_dataset(fit_gaussian_bank(ds), ds, opts);
  EXPECT_EQ(s.rmd, kmeans_difficulty(ds, 3, opts.kmeans_iters, opts.kmeans_seed));
}

TEST(Average, IdenticalRunsAreIdempotent) {
  const auto s = scores_of({5, 6, 7}, {0.1, -2.0, 4.0});
  const std::vector<DifficultyScores> runs{s, s, s};
  const auto a = average_scores(runs);
  EXPECT_EQ(a.ids, s.ids);
  EXPECT_EQ(a.rmd, s.rmd);
  EXPECT_EQ(a.weight, s.weight);
}

TEST(Average, OppositeRunsGiveEqualMeans) {
  const std::vector<DifficultyScores> runs{scores_of({1, 2}, {0.0, 2.0}), scores_of({2, 1}, {0.0, 2.0})};
  const auto a = average_scores(runs);
  EXPECT_EQ(a.rmd, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(a.weight[0], a.weight[1]);
}

TEST(Average, FivePerturbedRunsMatchElementwiseMean) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> normal;
  std::vector<DifficultyScores> runs;
  std::vector<double> mean(20, 0.0);
  for (int r = 0; r < 5; ++r) {
    std::vector<std::uint64_t> ids(20);
    std::vector<double> rmd(20);
    for (std::size_t i = 0; i < 20; ++i) {
      ids[i] = 100 + (i + 3 * r) % 20;  // different row orders per run
      rmd[i] = normal(gen);
      mean[ids[i] - 100] += rmd[i] / 5.0;
    }
    runs.push_back(scores_of(ids, rmd));
  }
  const auto a = average_scores(runs);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.rmd[i], mean[a.ids[i] - 100], 1e-12);
}

TEST(Average, RejectsMismatchedRuns) {
  auto other = scores_of({1, 2}, {0.0, 1.0});
  other.temperature = 0.5;
  const std::vector<DifficultyScores> runs{scores_of({1, 2}, {0.0, 1.0}), other};
  EXPECT_THROW(average_scores(runs), ValidationError);
  const std::vector<DifficultyScores> missing{scores_of({1, 2}, {0.0, 1.0}), scores_of({1, 3}, {0.0, 1.0})};
  EXPECT_THROW(average_scores(missing), ValidationError);
}

TEST(Align, ReordersByDatasetIds) {
  const auto ds = EmbeddingDataset::create({0, 1, 2}, {0, 1, 0}, {7, 8, 9}, 1, 2);
  const auto s = scores_of({9, 7, 8}, {3.0, 1.0, 2.0});
  const auto a = align_scores(s, ds);
  EXPECT_EQ(a.ids, (std::vector<std::uint64_t>{7, 8, 9}));
  EXPECT_EQ(a.rmd, (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_EQ(a.weight[2], s.weight[0]);
  EXPECT_THROW(align_scores(scores_of({7, 8, 10}, {1, 2, 3}), ds), ValidationError);
  EXPECT_THROW(align_scores(scores_of({7, 8}, {1, 2}), ds), ValidationError);
}

TEST(Import, ExportedScoresReimportToSameWeights) {
  testutil::TempDir tmp;
  const auto ds = small_mixture();
  const auto s = score_dataset(fit_gaussian_bank(ds), ds);
  save_scores(s, tmp / "s.csv");
  const auto back = import_scores(tmp / "s.csv", ds);
  EXPECT_EQ(back.ids, s.ids);
  EXPECT_EQ(back.weight, s.weight);
  EXPECT_EQ(back.scorer, Scorer::kImported);
  const auto loaded = load_scores(tmp / "s.csv");
  EXPECT_EQ(loaded.rmd, s.rmd);
  EXPECT_EQ(loaded.weight, s.weight);
}

TEST(Import, CoverageErrors) {
  testutil::TempDir tmp;
  const auto ds = EmbeddingDataset::create({0, 1, 2}, {0, 1, 0}, {7, 8, 9}, 1, 2);
  testutil::write_bytes(tmp / "missing.csv", "id,score\n7,0.1\n8,0.2\n");
  EXPECT_THROW(import_scores(tmp / "missing.csv", ds), ValidationError);
  testutil::write_bytes(tmp / "extra.csv", "7,0.1\n8,0.2\n9,0.3\n10,0.3\n");
  EXPECT_THROW(import_scores(tmp / "extra.csv", ds), ValidationError);
  testutil::write_bytes(tmp / "dup.csv", "7,0.1\n7,0.2\n9,0.3\n");
  EXPECT_THROW(import_scores(tmp / "dup.csv", ds), ValidationError);
  testutil::write_bytes(tmp / "short.csv", "7\n8,0.2\n9,0.3\n");
  EXPECT_THROW(import_scores(tmp / "short.csv", ds), FormatError);
}

TEST(Import, ConstantScoresGiveUniformWeights) {
  testutil::TempDir tmp;
  const auto ds = EmbeddingDataset::create({0, 1, 2}, {0, 1, 0}, {7, 8, 9}, 1, 2);
  testutil::write_bytes(tmp / "c.csv", "9,2.5\n7,2.5\n8,2.5\n");
  for (const auto scaling : {ScoreScaling::kNone, ScoreScaling::kMinMax}) {
    const auto s = import_scores(tmp / "c.csv", ds, 0.7, 1e-3, scaling);
    EXPECT_EQ(s.weight[0], s.weight[1]);
    EXPECT_EQ(s.weight[1], s.weight[2]);
  }
}

TEST(Rank, ExhaustiveClassListsArePermutations) {
  const auto ds = EmbeddingDataset::create({0, 1, 2, 3, 4}, {0, 0, 0, 1, 1}, {10, 11, 12, 13, 14}, 1, 2);
  const auto s = scores_of({10, 11, 12, 13, 14}, {0.5, -1.0, 2.0, 0.0, 0.0});
  const auto report = rank_report(s, ds, 3);
  ASSERT_EQ(report.size(), 2u);
  EXPECT_EQ(report[0].hardest, (std::vector<std::uint64_t>{12, 10, 11}));
  EXPECT_EQ(report[0].easiest, (std::vector<std::uint64_t>{11, 10, 12}));
  // Tie at the top: lower id first in both directions.
  EXPECT_EQ(report[1].hardest, (std::vector<std::uint64_t>{13, 14}));
  EXPECT_EQ(report[1].easiest, (std::vector<std::uint64_t>{13, 14}));
}

TEST(Rank, HardestStrictlyDescending) {
  const auto ds = small_mixture();
  const auto s = score_dataset(fit_gaussian_bank(ds), ds);
  const auto report = rank_report(s, ds, 5);
  for (const auto& cls : report) {
    ASSERT_EQ(cls.hardest.size(), 5u);
    for (std::size_t i = 1; i < cls.hardest.size(); ++i) {
      EXPECT_GT(s.rmd[cls.hardest[i - 1]], s.rmd[cls.hardest[i]]);  // ids equal row indices here
    }
  }
  EXPECT_THROW(rank_report(s, ds, 0), ValidationError);
}
