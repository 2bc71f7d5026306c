#include "difficalib/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "difficalib/error.hpp"
#include "difficalib/rng.hpp"

namespace difficalib {

namespace {

constexpr std::uint64_t kMeanStream = 0x6D65616E;    // "mean"
constexpr std::uint64_t kSampleStream = 0x73616D70;  // "samp"
constexpr std::uint64_t kFlipStream = 0x666C6970;    // "flip"
constexpr std::uint64_t kLabelStream = 0x6C61626C;   // "labl"
constexpr std::uint64_t kNoiseStream = 0x6E6F6973;   // "nois"

}  // namespace

void MixtureSpec::validate() const {
  if (num_classes < 2) throw ValidationError("mixture needs at least 2 classes");
  if (dim < 1) throw ValidationError("mixture dimension must be >= 1");
  if (samples_per_class < 1) throw ValidationError("samples_per_class must be >= 1");
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw ValidationError("separation must be finite and >= 0");
  }
}

MixtureSpec canonical_mixture() { return MixtureSpec{}; }

RowMatrix mixture_means(const MixtureSpec& spec) {
  spec.validate();
  const std::size_t k = spec.num_classes;
  const std::size_t d = spec.dim;
  RowMatrix means = RowMatrix::Zero(k, d);
  if (spec.separation == 0.0) return means;

  const double radius = spec.separation / std::sqrt(2.0);
  if (k <= d) {
    // Orthonormal D x K basis by Gram-Schmidt on a seeded Gaussian matrix.
    Eigen::MatrixXd basis(d, k);
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t r = 0; r < d; ++r) basis(r, c) = rng::normal(spec.seed, kMeanStream, c, r);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
    // Centered simplex vertices e_c - 1/K, scaled so vertices sit `separation` apart.
    for (std::size_t c = 0; c < k; ++c) {
      Eigen::VectorXd v = Eigen::VectorXd::Constant(k, -1.0 / static_cast<double>(k));
      v[c] += 1.0;
      means.row(c) = (radius * (q * v)).transpose();
    }
  } else {
    for (std::size_t c = 0; c < k; ++c) {
      Eigen::VectorXd v(d);
      for (std::size_t r = 0; r < d; ++r) v[r] = rng::normal(spec.seed, kMeanStream, c, r);
      means.row(c) = (radius * v.normalized()).transpose();
    }
  }
  return means;
}

EmbeddingDataset generate_mixture(const MixtureSpec& spec) {
  const RowMatrix means = mixture_means(spec);
  const std::size_t k = spec.num_classes;
  const std::size_t d = spec.dim;
  const std::size_t n = k * spec.samples_per_class;
  std::vector<float> features(n * d);
  std::vector<std::uint32_t> labels(n);
  std::vector<std::uint64_t> ids(n);

  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto row = static_cast<std::size_t>(i);
    const auto c = static_cast<std::uint32_t>(row / spec.samples_per_class);
    const std::uint64_t id = spec.id_offset + row;
    labels[row] = c;
    ids[row] = id;
    for (std::size_t j = 0; j < d; ++j) {
      features[row * d + j] =
          static_cast<float>(means(c, j) + rng::normal(spec.seed, kSampleStream, id, j));
    }
  }
  return EmbeddingDataset::create(std::move(features), std::move(labels), std::move(ids),
                                  spec.dim, spec.num_classes);
}

EmbeddingDataset inject_label_noise(const EmbeddingDataset& ds, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("label-noise rate must be in [0, 1]");
  const std::size_t n = ds.size();
  const auto flips = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9)));

  // The flipped subset is the `flips` rows with the smallest per-id hash, so
  // it does not depend on row order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto ids = ds.ids();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ha = rng::hash(seed, kFlipStream, ids[a], 0);
    const auto hb = rng::hash(seed, kFlipStream, ids[b], 0);
    return ha != hb ? ha < hb : ids[a] < ids[b];
  });

  std::vector<std::uint32_t> labels(ds.labels().begin(), ds.labels().end());
  const std::uint32_t k = ds.num_classes();
  for (std::size_t m = 0; m < flips; ++m) {
    const std::size_t r = order[m];
    const auto shift = 1 + rng::below(k - 1, seed, kLabelStream, ids[r], 0);
    labels[r] = static_cast<std::uint32_t>((labels[r] + shift) % k);
  }
  std::vector<float> features(ds.features().begin(), ds.features().end());
  return EmbeddingDataset::create(std::move(features), std::move(labels),
                                  std::vector<std::uint64_t>(ids.begin(), ids.end()), ds.dim(), k);
}

EmbeddingDataset inject_feature_noise(const EmbeddingDataset& ds, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("feature-noise sigma must be finite and >= 0");
  }
  const std::size_t d = ds.dim();
  std::vector<float> features(ds.features().begin(), ds.features().end());
  if (sigma > 0.0) {
    const auto count = static_cast<std::ptrdiff_t>(ds.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const auto row = static_cast<std::size_t>(i);
      const auto id = ds.ids()[row];
      for (std::size_t j = 0; j < d; ++j) {
        features[row * d + j] = static_cast<float>(static_cast<double>(features[row * d + j]) +
                                                   sigma * rng::normal(seed, kNoiseStream, id, j));
      }
    }
  }
  return EmbeddingDataset::create(std::move(features),
                                  std::vector<std::uint32_t>(ds.labels().begin(), ds.labels().end()),
                                  std::vector<std::uint64_t>(ds.ids().begin(), ds.ids().end()),
                                  ds.dim(), ds.num_classes());
}

OodSplit hold_out_class(const EmbeddingDataset& ds, std::uint32_t held_out) {
  const std::uint32_t k = ds.num_classes();
  if (k < 3) throw ValidationError("holding out a class needs K >= 3");
  if (held_out >= k) throw IndexError("held-out class " + std::to_string(held_out) + " >= K");

  std::vector<float> in_features, ood_features;
  std::vector<std::uint32_t> in_labels, ood_labels;
  std::vector<std::uint64_t> in_ids, ood_ids;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto y = ds.labels()[i];
    const auto row = ds.row(i);
    if (y == held_out) {
      ood_features.insert(ood_features.end(), row.begin(), row.end());
      ood_labels.push_back(0);
      ood_ids.push_back(ds.ids()[i]);
    } else {
      in_features.insert(in_features.end(), row.begin(), row.end());
      in_labels.push_back(y > held_out ? y - 1 : y);
      in_ids.push_back(ds.ids()[i]);
    }
  }
  if (ood_ids.empty()) {
    throw ValidationError("held-out class " + std::to_string(held_out) + " has no samples");
  }
  return OodSplit{
      EmbeddingDataset::create(std::move(in_features), std::move(in_labels), std::move(in_ids),
                               ds.dim(), k - 1),
      EmbeddingDataset::create(std::move(ood_features), std::move(ood_labels), std::move(ood_ids),
                               ds.dim(), k - 1)};
}

}  // namespace difficalib
