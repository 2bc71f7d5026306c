#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difficalib/dataset.hpp"
#include "difficalib/gaussian.hpp"

namespace difficalib {

inline constexpr double kDefaultTemperature = 0.7;
inline constexpr double kDefaultOffset = 1e-3;

enum class Scorer { kRmd, kMd, kKmeans, kImported };

std::string_view to_string(Scorer s);
Scorer parse_scorer(std::string_view name);

/// How raw difficulty values are mapped before the exponential weighting.
///  - kNone: weights computed on the raw values.
///  - kMinMax: values rescaled to [0, 1] over the provided split first
///    (constant arrays map to all zeros). Raw RMD spreads over tens of units
///    at typical widths, which drives all but a handful of weights to ~0 at
///    T = 0.7; the rescaled form keeps the weights spread across (0, 1).
enum class ScoreScaling { kNone, kMinMax };

std::string_view to_string(ScoreScaling s);
ScoreScaling parse_scaling(std::string_view name);

/// Per-sample difficulty. `rmd` holds the raw score of whichever scorer
/// produced it (larger = harder); `weight` is the normalized entropy weight.
struct DifficultyScores {
  std::vector<std::uint64_t> ids;
  std::vector<double> rmd;
  std::vector<double> weight;
  Scorer scorer = Scorer::kRmd;
  double temperature = kDefaultTemperature;
  double offset = kDefaultOffset;
  ScoreScaling scaling = ScoreScaling::kMinMax;

  std::size_t size() const { return ids.size(); }
};

struct ScoreOptions {
  Scorer scorer = Scorer::kRmd;
  double temperature = kDefaultTemperature;
  double offset = kDefaultOffset;
  ScoreScaling scaling = ScoreScaling::kMinMax;
  // Only used by Scorer::kKmeans.
  std::size_t kmeans_clusters = 0;  // 0 -> K of the dataset
  std::size_t kmeans_iters = 50;
  std::uint64_t kmeans_seed = 0;
};

/// d2_class(feature, label) - d2_agnostic(feature).
double rmd_score(const GaussianBank& bank, std::span<const float> feature, std::size_t label);
double rmd_score(const GaussianBank& bank, std::span<const double> feature, std::size_t label);

/// s_i = exp(r_i / T) / (max_j exp(r_j / T) + c), evaluated as
/// exp((r_i - r_max) / T) / (1 + c * exp(-r_max / T)) so large scores do not overflow.
std::vector<double> normalize_weights(std::span<const double> rmd, double temperature,
                                      double offset);

/// Applies `scaling` then normalize_weights.
std::vector<double> difficulty_weights(std::span<const double> raw, double temperature,
                                       double offset, ScoreScaling scaling);

/// Scores every sample of `ds`. For kRmd / kMd the bank supplies the
/// Gaussians; kKmeans ignores the bank.
DifficultyScores score_dataset(const GaussianBank& bank, const EmbeddingDataset& ds,
                               const ScoreOptions& opts = {});

/// Joins runs by id (order of the first run), averages raw scores and
/// recomputes the weights.
DifficultyScores average_scores(std::span<const DifficultyScores> runs);

/// Reads `id,score[,...]` rows (an optional non-numeric header line is
/// skipped); the set of ids must equal the dataset's exactly.
DifficultyScores import_scores(const std::filesystem::path& path, const EmbeddingDataset& ds,
                               double temperature = kDefaultTemperature,
                               double offset = kDefaultOffset,
                               ScoreScaling scaling = ScoreScaling::kMinMax);

/// Writes `id,rmd,weight` with a header line and 17 significant digits.
void save_scores(const DifficultyScores& scores, const std::filesystem::path& path);
/// Reads a file written by save_scores, keeping its weight column as-is.
/// Temperature and offset are not recorded in the file and are left at 0.
DifficultyScores load_scores(const std::filesystem::path& path);

/// Reorders `scores` into the row order of `ds`. Throws unless the id sets
/// match exactly.
DifficultyScores align_scores(const DifficultyScores& scores, const EmbeddingDataset& ds);

struct ClassRanking {
  std::uint32_t label = 0;
  std::vector<std::uint64_t> hardest;  // descending score, ties by ascending id
  std::vector<std::uint64_t> easiest;  // ascending score, ties by ascending id
};

/// Per-class top_k hardest and easiest sample ids. `scores` must be aligned
/// with `ds` row-by-row (same id order).
std::vector<ClassRanking> rank_report(const DifficultyScores& scores, const EmbeddingDataset& ds,
                                      std::size_t top_k);

/// Lloyd's algorithm with k-means++ seeding.
struct KMeansResult {
  RowMatrix centroids;
  std::vector<std::uint32_t> assignment;
  std::vector<double> sq_distance;    // to the assigned (nearest) centroid
  std::vector<double> cost_history;   // total cost after seeding and after each iteration
};

KMeansResult kmeans(const EmbeddingDataset& ds, std::size_t clusters, std::size_t iters,
                    std::uint64_t seed);

/// Squared distance of each sample to its nearest centroid.
std::vector<double> kmeans_difficulty(const EmbeddingDataset& ds, std::size_t clusters,
                                      std::size_t iters, std::uint64_t seed);

}  // namespace difficalib
