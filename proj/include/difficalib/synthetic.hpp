#pragma once

#include <cstdint>

#include "difficalib/dataset.hpp"
#include "difficalib/gaussian.hpp"

namespace difficalib {

/// Gaussian mixture with unit within-class covariance. When K <= D the class
/// means form a regular simplex (every pair exactly `separation` apart) in a
/// random K-dimensional subspace chosen by `seed`; otherwise they are random
/// directions at radius separation / sqrt(2), which gives the same expected
/// pairwise distance.
struct MixtureSpec {
  std::uint32_t num_classes = 10;
  std::uint32_t dim = 16;
  std::uint32_t samples_per_class = 500;
  double separation = 3.0;
  std::uint64_t seed = 7;
  /// First sample id. Samples are keyed by id, so two specs that differ only
  /// in id_offset draw independent samples around the same means.
  std::uint64_t id_offset = 0;

  void validate() const;
};

/// The overlapping-cluster preset used by the acceptance suite:
/// K = 10, D = 16, 500 per class, separation 3, seed 7.
MixtureSpec canonical_mixture();

RowMatrix mixture_means(const MixtureSpec& spec);

/// Rows are grouped by class (class 0 first); ids run from id_offset.
EmbeddingDataset generate_mixture(const MixtureSpec& spec);

/// Reassigns a seeded ceil(rate * N) subset of labels uniformly among the
/// other K - 1 classes.
EmbeddingDataset inject_label_noise(const EmbeddingDataset& ds, double rate, std::uint64_t seed);

/// Adds isotropic N(0, sigma^2) noise to every feature.
EmbeddingDataset inject_feature_noise(const EmbeddingDataset& ds, double sigma, std::uint64_t seed);

struct OodSplit {
  EmbeddingDataset in_distribution;  // class `held_out` removed, labels above it shifted down
  EmbeddingDataset ood;              // the held-out class, every label set to 0
};

/// Removes one class to serve as out-of-distribution data. Needs K >= 3 so
/// the remaining problem still has two classes.
OodSplit hold_out_class(const EmbeddingDataset& ds, std::uint32_t held_out);

}  // namespace difficalib
