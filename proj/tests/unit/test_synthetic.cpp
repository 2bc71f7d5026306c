#include <gtest/gtest.h>

#include <cmath>

#include "difficalib/classifier.hpp"
#include "difficalib/error.hpp"
#include "difficalib/metrics.hpp"
#include "difficalib/synthetic.hpp"

using namespace difficalib;

namespace {

MixtureSpec small(std::uint64_t seed = 1) {
  MixtureSpec spec;
  spec.num_classes = 4;
  spec.dim = 5;
  spec.samples_per_class = 30;
  spec.seed = seed;
  return spec;
}

std::size_t label_changes(const EmbeddingDataset& a, const EmbeddingDataset& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a.labels()[i] != b.labels()[i];
  return n;
}

bool same_features(const EmbeddingDataset& a, const EmbeddingDataset& b) {
  return std::equal(a.features().begin(), a.features().end(), b.features().begin(), b.features().end());
}

}  // namespace

TEST(Mixture, Deterministic) {
  EXPECT_EQ(generate_mixture(small()), generate_mixture(small()));
  EXPECT_NE(generate_mixture(small(1)), generate_mixture(small(2)));
}

TEST(Mixture, LayoutAndIds) {
  auto spec = small();
  spec.id_offset = 500;
  const auto ds = generate_mixture(spec);
  EXPECT_EQ(ds.size(), 120u);
  EXPECT_EQ(ds.ids()[0], 500u);
  EXPECT_EQ(ds.ids()[119], 619u);
  for (const auto n : ds.class_counts()) EXPECT_EQ(n, 30u);
  // Same means, independent draws.
  EXPECT_FALSE(same_features(ds, generate_mixture(small())));
}

TEST(Mixture, MeansArePairwiseSeparated) {
  for (const std::uint32_t k : {2u, 5u, 10u}) {
    MixtureSpec spec = canonical_mixture();
    spec.num_classes = k;
    const auto means = mixture_means(spec);
    for (Eigen::Index a = 0; a < means.rows(); ++a)
      for (Eigen::Index b = a + 1; b < means.rows(); ++b)
        EXPECT_NEAR((means.row(a) - means.row(b)).norm(), spec.separation, 1e-9);
  }
}

TEST(Mixture, ZeroSeparationSharesMean) {
  MixtureSpec spec = small();
  spec.num_classes = 3;
  spec.dim = 2;
  spec.samples_per_class = 400;
  spec.separation = 0.0;
  const auto ds = generate_mixture(spec);
  std::vector<std::vector<double>> mean(3, std::vector<double>(2, 0.0));
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < 2; ++j) mean[ds.labels()[i]][j] += ds.row(i)[j] / 400.0;
  const double bound = 4.0 / std::sqrt(400.0);
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (int j = 0; j < 2; ++j) EXPECT_LT(std::abs(mean[a][j] - mean[b][j]), bound);
}

TEST(Mixture, WideSeparationIsLinearlySolvable) {
  MixtureSpec spec = small();
  spec.num_classes = 2;
  spec.separation = 50.0;
  const auto ds = generate_mixture(spec);
  OptimConfig o;
  o.epochs = 30;
  const auto model = train(ds, nullptr, {}, o).model;
  EXPECT_EQ(accuracy(predict(model, ds).probs, ds.labels()), 1.0);
}

TEST(Mixture, Validation) {
  MixtureSpec spec;
  spec.separation = -1.0;
  EXPECT_THROW(generate_mixture(spec), ValidationError);
  spec = {};
  spec.samples_per_class = 0;
  EXPECT_THROW(generate_mixture(spec), ValidationError);
}

TEST(LabelNoise, RateZeroIsIdentity) {
  const auto ds = generate_mixture(small());
  EXPECT_EQ(inject_label_noise(ds, 0.0, 3), ds);
}

TEST(LabelNoise, RateOneChangesEveryLabel) {
  const auto ds = generate_mixture(small());
  const auto noisy = inject_label_noise(ds, 1.0, 3);
  EXPECT_EQ(label_changes(ds, noisy), ds.size());
  EXPECT_TRUE(same_features(ds, noisy));
  EXPECT_TRUE(std::equal(ds.ids().begin(), ds.ids().end(), noisy.ids().begin()));
}

TEST(LabelNoise, HalfRateCountsExactly) {
  auto spec = small();
  spec.samples_per_class = 31;  // N = 124
  const auto ds = generate_mixture(spec);
  EXPECT_EQ(label_changes(ds, inject_label_noise(ds, 0.5, 7)), 62u);
  const auto odd = EmbeddingDataset::create({0, 1, 2}, {0, 1, 0}, {0, 1, 2}, 1, 2);
  EXPECT_EQ(label_changes(odd, inject_label_noise(odd, 0.5, 7)), 2u);
  EXPECT_THROW(inject_label_noise(ds, 1.5, 0), ValidationError);
}

TEST(LabelNoise, NewLabelsCoverOtherClasses) {
  MixtureSpec spec = small();
  spec.samples_per_class = 300;
  const auto ds = generate_mixture(spec);
  const auto noisy = inject_label_noise(ds, 1.0, 1);
  std::vector<std::vector<std::size_t>> counts(4, std::vector<std::size_t>(4, 0));
  for (std::size_t i = 0; i < ds.size(); ++i) ++counts[ds.labels()[i]][noisy.labels()[i]];
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      if (a == b) continue;
      EXPECT_NEAR(static_cast<double>(counts[a][b]), 100.0, 35.0);
    }
}

TEST(FeatureNoise, SigmaZeroIsIdentity) {
  const auto ds = generate_mixture(small());
  EXPECT_EQ(inject_feature_noise(ds, 0.0, 4), ds);
}

TEST(FeatureNoise, UnitSigmaDisplacementMatchesDim) {
  MixtureSpec spec = small();
  spec.dim = 2000;
  spec.samples_per_class = 3;
  const auto ds = generate_mixture(spec);
  const auto noisy = inject_feature_noise(ds, 1.0, 4);
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ds.dim(); ++j) total += std::pow(noisy.row(i)[j] - ds.row(i)[j], 2);
  EXPECT_NEAR(total / ds.size(), 2000.0, 0.05 * 2000.0);
  EXPECT_TRUE(std::equal(ds.labels().begin(), ds.labels().end(), noisy.labels().begin()));
  EXPECT_THROW(inject_feature_noise(ds, -1.0, 0), ValidationError);
}

TEST(HoldOut, RemapsLabels) {
  const auto ds = generate_mixture(small());
  const auto split = hold_out_class(ds, 1);
  EXPECT_EQ(split.in_distribution.num_classes(), 3u);
  EXPECT_EQ(split.in_distribution.size(), 90u);
  EXPECT_EQ(split.ood.size(), 30u);
  for (std::size_t i = 0; i < split.in_distribution.size(); ++i) {
    const auto original = ds.labels()[split.in_distribution.ids()[i]];
    EXPECT_NE(original, 1u);
    EXPECT_EQ(split.in_distribution.labels()[i], original > 1 ? original - 1 : original);
  }
  EXPECT_THROW(hold_out_class(ds, 4), IndexError);
  const auto two = EmbeddingDataset::create({0, 1}, {0, 1}, {0, 1}, 1, 2);
  EXPECT_THROW(hold_out_class(two, 0), ValidationError);
}
