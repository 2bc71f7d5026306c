#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "../support/oracles.hpp"
#include "difficalib/error.hpp"
#include "difficalib/metrics.hpp"

using namespace difficalib;

namespace {

RowMatrix two_class_probs(const std::vector<double>& p0) {
  RowMatrix p(p0.size(), 2);
  for (std::size_t i = 0; i < p0.size(); ++i) {
    p(i, 0) = p0[i];
    p(i, 1) = 1.0 - p0[i];
  }
  return p;
}

}  // namespace

TEST(Ece, HandBinnedFixture) {
  const std::vector<double> conf{0.9, 0.8, 0.7, 0.6};
  const std::vector<std::uint8_t> correct{1, 1, 0, 1};
  const auto r = ece_from_confidence(conf, correct, 2);
  EXPECT_NEAR(r.ece, 0.15, 1e-15);
  ASSERT_EQ(r.bins.size(), 2u);
  EXPECT_NEAR(r.bins[0].confidence, 0.65, 1e-15);
  EXPECT_EQ(r.bins[0].accuracy, 0.5);
  EXPECT_NEAR(r.bins[1].confidence, 0.85, 1e-15);
  EXPECT_EQ(r.bins[1].accuracy, 1.0);
}

TEST(Ece, PerfectAndConstantConfidence) {
  const std::vector<double> ones(30, 1.0);
  const std::vector<std::uint8_t> all(30, 1);
  EXPECT_EQ(ece_from_confidence(ones, all, 15).ece, 0.0);
  std::vector<std::uint8_t> half(30);
  for (std::size_t i = 0; i < 30; ++i) half[i] = i % 2;
  EXPECT_NEAR(ece_from_confidence(ones, half, 1).ece, 0.5, 1e-15);
}

TEST(Ece, ZeroWhenEveryBinIsCalibrated) {
  // Two bins of four: confidence 0.5 with 2/4 right, confidence 0.75 with 3/4 right.
  const std::vector<double> conf{0.5, 0.5, 0.5, 0.5, 0.75, 0.75, 0.75, 0.75};
  const std::vector<std::uint8_t> correct{1, 0, 1, 0, 1, 1, 0, 1};
  EXPECT_EQ(ece_from_confidence(conf, correct, 2).ece, 0.0);
}

TEST(Ece, EqualMassBinCounts) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t n : {15u, 16u, 29u, 100u, 1001u}) {
    std::vector<double> c(n);
    std::vector<std::uint8_t> ok(n);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = unit(gen);
      ok[i] = unit(gen) < 0.5;
    }
    const auto r = ece_from_confidence(c, ok, 15);
    std::size_t total = 0, lo = n, hi = 0;
    for (const auto& b : r.bins) {
      total += b.count;
      lo = std::min(lo, b.count);
      hi = std::max(hi, b.count);
    }
    EXPECT_EQ(total, n);
    EXPECT_LE(hi - lo, 1u);
    EXPECT_NEAR(r.ece, oracle::brute_force_ece(c, ok, 15), 1e-12);
  }
  const std::vector<double> few(3, 0.5);
  const std::vector<std::uint8_t> few_ok(3, 1);
  EXPECT_THROW(ece_from_confidence(few, few_ok, 15), ValidationError);
}

TEST(Ece, FromProbabilities) {
  const auto p = two_class_probs({0.9, 0.2, 0.7, 0.4});
  const std::vector<std::uint32_t> labels{0, 1, 1, 1};
  // confidences {0.9, 0.8, 0.7, 0.6}, correct {1, 1, 0, 1}
  EXPECT_NEAR(ece(p, labels, 2).ece, 0.15, 1e-15);
  EXPECT_EQ(accuracy(p, labels), 0.75);
  EXPECT_NEAR(nll(p, labels), -(std::log(0.9) + std::log(0.8) + std::log(0.3) + std::log(0.6)) / 4, 1e-15);
}

TEST(Detection, PerfectSeparation) {
  const std::vector<double> s{0.9, 0.8, 0.1, 0.2};
  const std::vector<std::uint8_t> pos{1, 1, 0, 0};
  const auto m = detection_metrics(s, pos);
  EXPECT_EQ(m.auroc, 1.0);
  EXPECT_EQ(m.aupr, 1.0);
  EXPECT_EQ(m.fpr_at_95_tpr, 0.0);
}

TEST(Detection, HandExamples) {
  const std::vector<double> s{0.8, 0.3, 0.5, 0.1};
  const std::vector<std::uint8_t> pos{1, 1, 0, 0};
  EXPECT_EQ(auroc(s, pos), 0.75);
  const std::vector<double> t{0.9, 0.8, 0.85, 0.1};
  EXPECT_EQ(fpr_at_tpr(t, pos, 0.95), 0.5);
  // precision at each positive: 1/1 then 2/3
  EXPECT_NEAR(aupr(t, pos), 0.5 * (1.0 + 2.0 / 3.0), 1e-15);
}

TEST(Detection, AurocEqualsPairwiseCountingWithTies) {
  std::mt19937_64 gen(8);
  std::uniform_int_distribution<int> level(0, 4);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + t % 63;
    std::vector<double> s(n);
    std::vector<std::uint8_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = level(gen);
      pos[i] = gen() % 2;
    }
    pos[0] = 1;
    pos[1] = 0;
    EXPECT_EQ(auroc(s, pos), oracle::pairwise_auroc(s, pos));
    EXPECT_EQ(fpr_at_tpr(s, pos, 0.95), oracle::sweep_fpr(s, pos, 0.95));
  }
}

TEST(Detection, InvariantUnderMonotoneTransform) {
  std::mt19937_64 gen(10);
  std::normal_distribution<double> normal;
  std::vector<double> s(80), g(80);
  std::vector<std::uint8_t> pos(80);
  for (std::size_t i = 0; i < 80; ++i) {
    pos[i] = i % 3 == 0;
    s[i] = normal(gen) + (pos[i] ? 1.0 : 0.0);
    g[i] = std::exp(3.0 * s[i]) - 7.0;
  }
  const auto a = detection_metrics(s, pos), b = detection_metrics(g, pos);
  EXPECT_EQ(a.auroc, b.auroc);
  EXPECT_EQ(a.aupr, b.aupr);
  EXPECT_EQ(a.fpr_at_95_tpr, b.fpr_at_95_tpr);
}

TEST(Detection, NeedsBothClasses) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<std::uint8_t> pos{1, 1};
  EXPECT_THROW(auroc(s, pos), ValidationError);
}

TEST(Uncertainty, UniformAndSaturatedRows) {
  RowMatrix z(3, 4);
  z << 0, 0, 0, 0, 1000, 0, 0, 0, 2, 1, 0, 0;
  const auto u = uncertainty_scores(z);
  EXPECT_NEAR(u.entropy[0], std::log(4.0), 1e-12);
  EXPECT_NEAR(u.msp_negated[0], -0.25, 1e-15);
  EXPECT_NEAR(u.entropy[1], 0.0, 1e-12);
  EXPECT_NEAR(u.msp_negated[1], -1.0, 1e-12);
  EXPECT_EQ(u.maxlogit_negated[1], -1000.0);
  // Row 2 is more peaked than row 0.
  EXPECT_LT(u.entropy[2], u.entropy[0]);
  EXPECT_LT(u.msp_negated[2], u.msp_negated[0]);
  EXPECT_EQ(&u.get(UncertaintyKind::kEntropy), &u.entropy);
  EXPECT_EQ(parse_uncertainty("maxlogit"), UncertaintyKind::kMaxLogit);
}

TEST(RiskCoverage, NoRejectionIsAccuracy) {
  const auto p = two_class_probs({0.9, 0.2, 0.7, 0.4, 0.55});
  const std::vector<std::uint32_t> labels{0, 1, 1, 1, 1};
  const std::vector<double> unc{0.1, 0.2, 0.3, 0.4, 0.5};
  const std::vector<double> grid{0.0};
  EXPECT_EQ(risk_coverage(p, labels, unc, grid)[0].accuracy, accuracy(p, labels));
}

TEST(RiskCoverage, OracleRejectorRemovesErrorsFirst) {
  const std::size_t n = 50;
  std::vector<double> p0(n), unc(n);
  std::vector<std::uint32_t> labels(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool wrong = i % 5 == 0;  // error rate 0.2
    p0[i] = wrong ? 0.3 : 0.8;
    unc[i] = wrong ? 1.0 : 0.0;
  }
  const auto grid = default_rejection_grid();
  ASSERT_EQ(grid.size(), 20u);
  EXPECT_NEAR(grid[19], 0.95, 1e-15);
  const auto points = risk_coverage(two_class_probs(p0), labels, unc, grid);
  for (const auto& pt : points) {
    if (pt.rejection_rate >= 0.2 - 1e-12) {
      EXPECT_EQ(pt.accuracy, 1.0) << pt.rejection_rate;
    }
  }
  EXPECT_EQ(points[0].accuracy, 0.8);
}

TEST(RiskCoverage, MatchesBruteForce) {
  std::mt19937_64 gen(14);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = 137;
  std::vector<double> p0(n), unc(n);
  std::vector<std::uint32_t> labels(n);
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    p0[i] = unit(gen);
    labels[i] = unit(gen) < 0.5;
    unc[i] = std::round(unit(gen) * 10.0);  // ties
    ids[i] = 1000 - i;
  }
  const auto grid = default_rejection_grid();
  const auto points = risk_coverage(two_class_probs(p0), labels, unc, grid, ids);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return unc[a] != unc[b] ? unc[a] > unc[b] : ids[a] < ids[b];
  });
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto drop = static_cast<std::size_t>(std::ceil(grid[g] * n - 1e-9));
    std::size_t right = 0;
    for (std::size_t r = drop; r < n; ++r) {
      const std::size_t i = order[r];
      right += (p0[i] >= 0.5 ? 0u : 1u) == labels[i];
    }
    EXPECT_EQ(points[g].kept, n - drop);
    EXPECT_NEAR(points[g].accuracy, static_cast<double>(right) / (n - drop), 1e-15);
  }
}

TEST(RiskCoverage, FullRejectionIsNaN) {
  const auto p = two_class_probs({0.9, 0.2});
  const std::vector<std::uint32_t> labels{0, 1};
  const std::vector<double> unc{0.1, 0.2}, grid{1.0};
  const auto pt = risk_coverage(p, labels, unc, grid)[0];
  EXPECT_EQ(pt.kept, 0u);
  EXPECT_TRUE(std::isnan(pt.accuracy));
}

TEST(BucketError, PerfectAlignment) {
  DifficultyScores s;
  s.ids = {0, 1, 2, 3};
  s.rmd = {4.0, 1.0, 3.0, 2.0};
  s.weight = {0.5, 0.5, 0.5, 0.5};
  const std::vector<std::uint32_t> labels{0, 0, 0, 0};
  const std::vector<std::uint32_t> preds{1, 0, 1, 0};  // wrong on the two hardest
  const auto b = bucket_error(s, preds, labels, 2);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].error_rate, 1.0);
  EXPECT_EQ(b[1].error_rate, 0.0);
  EXPECT_EQ(b[0].first_rank, 1u);
  EXPECT_EQ(b[1].last_rank, 4u);
}

TEST(BucketError, RandomPredictionsAndPartitionIdentity) {
  std::mt19937_64 gen(5);
  const std::size_t n = 5000, k = 4, size = 1000;
  DifficultyScores s;
  std::vector<std::uint32_t> preds(n), labels(n);
  std::normal_distribution<double> normal;
  std::size_t total_errors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s.ids.push_back(i);
    s.rmd.push_back(normal(gen));
    s.weight.push_back(0.5);
    labels[i] = static_cast<std::uint32_t>(gen() % k);
    preds[i] = static_cast<std::uint32_t>(gen() % k);
    total_errors += preds[i] != labels[i];
  }
  const auto b = bucket_error(s, preds, labels, size);
  const double expected = 1.0 - 1.0 / k;
  const double sigma = std::sqrt(expected * (1 - expected) / size);
  std::size_t errors = 0;
  double weighted = 0.0;
  for (const auto& x : b) {
    EXPECT_NEAR(x.error_rate, expected, 3 * sigma);
    errors += x.errors;
    weighted += x.error_rate * x.count / n;
  }
  EXPECT_EQ(errors, total_errors);
  EXPECT_NEAR(weighted, static_cast<double>(total_errors) / n, 1e-15);

  // Last bucket may be smaller.
  const auto ragged = bucket_error(s, preds, labels, 1500);
  EXPECT_EQ(ragged.back().count, 500u);
}

TEST(Report, EvaluateAndSerialize) {
  RowMatrix z(6, 3);
  z << 3, 0, 0, 0, 2, 0, 0, 0, 1, 1, 0, 0, 0, 3, 0, 0, 0, 0;
  const std::vector<std::uint32_t> labels{0, 1, 2, 1, 1, 0};
  const std::vector<std::uint64_t> ids{1, 2, 3, 4, 5, 6};
  EvalOptions opts;
  opts.bins = 3;
  const auto r = evaluate_logits(z, labels, ids, opts);
  EXPECT_EQ(r.num_samples, 6u);
  EXPECT_NEAR(r.accuracy, 5.0 / 6.0, 1e-15);
  ASSERT_TRUE(r.misclassification.has_value());
  EXPECT_EQ(r.misclassification->size(), 3u);
  ASSERT_TRUE(r.risk_coverage.has_value());
  const auto j = to_json(r);
  EXPECT_EQ(j["num_samples"], 6);
  EXPECT_TRUE(j.contains("ece"));
  EXPECT_TRUE(j["misclassification"].contains("entropy"));
  EXPECT_NE(report_csv(r).find("accuracy,"), std::string::npos);
  const auto rel = reliability_csv(r.bins);
  EXPECT_EQ(std::count(rel.begin(), rel.end(), '\n'), 4);
}

TEST(Report, OodBlockOrientation) {
  RowMatrix in(3, 2), out(3, 2);
  in << 5, 0, 0, 5, 4, 0;
  out << 0.1, 0, 0, 0.2, 0, 0;
  const auto block = ood_detection(in, out);
  for (const auto& [name, m] : block) EXPECT_EQ(m.auroc, 1.0) << name;
}
