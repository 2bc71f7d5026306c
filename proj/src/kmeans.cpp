#include <limits>
#include <string>

#include "difficalib/difficulty.hpp"
#include "difficalib/error.hpp"
#include "difficalib/kernels.hpp"
#include "difficalib/rng.hpp"

namespace difficalib {

namespace {

constexpr std::uint64_t kSeedingStream = 0x6B6D7070;  // "kmpp"

double sq_dist(std::span<const float> x, const RowMatrix& centroids, Eigen::Index c) {
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = static_cast<double>(x[j]) - centroids(c, static_cast<Eigen::Index>(j));
    acc += diff * diff;
  }
  return acc;
}

// Nearest centroid per row; lowest index wins ties. Returns total cost.
double assign(const EmbeddingDataset& ds, const RowMatrix& centroids,
              std::vector<std::uint32_t>& assignment, std::vector<double>& dist) {
  kernels::omp::map_rows(ds.size(), dist, [&](std::size_t i) {
    const auto x = ds.row(i);
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = sq_dist(x, centroids, c);
      if (d < best) {
        best = d;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    assignment[i] = arg;
    return best;
  });
  double total = 0.0;
  for (const double d : dist) total += d;
  return total;
}

RowMatrix seed_plus_plus(const EmbeddingDataset& ds, std::size_t clusters, std::uint64_t seed) {
  const std::size_t n = ds.size();
  const std::size_t d = ds.dim();
  rng::Stream stream(seed, kSeedingStream);
  RowMatrix centroids(clusters, d);
  std::vector<bool> chosen(n, false);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t row, std::size_t slot) {
    chosen[row] = true;
    const auto x = ds.row(row);
    for (std::size_t j = 0; j < d; ++j) centroids(slot, j) = x[j];
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(ds.row(i), centroids, static_cast<Eigen::Index>(slot)));
    }
  };

  take(stream.below(n), 0);
  for (std::size_t slot = 1; slot < clusters; ++slot) {
    double total = 0.0;
    for (const double v : nearest) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = stream.uniform() * total;
      double cumulative = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cumulative += nearest[i];
        if (nearest[i] > 0.0 && cumulative > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        // Rounding left the target past the last positive mass.
        for (std::size_t i = n; i-- > 0;) {
          if (nearest[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Every point coincides with a chosen centroid: take the first unused row.
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    take(pick, slot);
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const EmbeddingDataset& ds, std::size_t clusters, std::size_t iters,
                    std::uint64_t seed) {
  if (clusters < 1) throw ValidationError("k-means needs at least one cluster");
  if (clusters > ds.size()) {
    throw ValidationError("k-means clusters (" + std::to_string(clusters) +
                          ") exceeds sample count (" + std::to_string(ds.size()) + ")");
  }
  const std::size_t n = ds.size();
  const std::size_t d = ds.dim();

  KMeansResult out;
  out.centroids = seed_plus_plus(ds, clusters, seed);
  out.assignment.assign(n, 0);
  out.sq_distance.assign(n, 0.0);
  out.cost_history.push_back(assign(ds, out.centroids, out.assignment, out.sq_distance));

  std::vector<double> sums(clusters * (d + 1));
  std::vector<std::uint32_t> next(n);
  for (std::size_t it = 0; it < iters; ++it) {
    kernels::omp::reduce_rows(n, sums, [&](std::size_t i, std::span<double> acc) {
      const auto x = ds.row(i);
      double* dst = acc.data() + out.assignment[i] * (d + 1);
      for (std::size_t j = 0; j < d; ++j) dst[j] += static_cast<double>(x[j]);
      dst[d] += 1.0;
      return 0.0;
    });
    for (std::size_t c = 0; c < clusters; ++c) {
      const double count = sums[c * (d + 1) + d];
      if (count == 0.0) continue;  // empty cluster keeps its centroid
      for (std::size_t j = 0; j < d; ++j) out.centroids(c, j) = sums[c * (d + 1) + j] / count;
    }
    const double cost = assign(ds, out.centroids, next, out.sq_distance);
    out.cost_history.push_back(cost);
    const bool stable = next == out.assignment;
    out.assignment.swap(next);
    if (stable) break;
  }
  return out;
}

std::vector<double> kmeans_difficulty(const EmbeddingDataset& ds, std::size_t clusters,
                                      std::size_t iters, std::uint64_t seed) {
  return kmeans(ds, clusters, iters, seed).sq_distance;
}

}  // namespace difficalib
