#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "difficalib/dataset.hpp"

namespace difficalib {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Default shrinkage strength for fit_gaussian_bank.
inline constexpr double kDefaultShrinkage = 1e-4;

/// Class-conditional Gaussians with a shared (pooled) covariance plus one
/// class-agnostic Gaussian, both stored as lower Cholesky factors of the
/// shrunk covariance.
class GaussianBank {
 public:
  GaussianBank(RowMatrix class_means, Eigen::MatrixXd pooled_chol, Eigen::VectorXd agn_mean,
               Eigen::MatrixXd agn_chol, double shrinkage, std::vector<std::uint64_t> class_counts);

  std::size_t num_classes() const { return static_cast<std::size_t>(class_means_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(class_means_.cols()); }
  double shrinkage() const { return shrinkage_; }

  const RowMatrix& class_means() const { return class_means_; }
  const Eigen::MatrixXd& pooled_chol() const { return pooled_chol_; }
  const Eigen::VectorXd& agn_mean() const { return agn_mean_; }
  const Eigen::MatrixXd& agn_chol() const { return agn_chol_; }
  const std::vector<std::uint64_t>& class_counts() const { return class_counts_; }

  /// Squared distance (f - mu_k)^T Sigma^{-1} (f - mu_k) under the pooled covariance.
  double mahalanobis_class(std::span<const double> feature, std::size_t k) const;
  double mahalanobis_class(std::span<const float> feature, std::size_t k) const;
  /// Squared distance to the class-agnostic Gaussian.
  double mahalanobis_agnostic(std::span<const double> feature) const;
  double mahalanobis_agnostic(std::span<const float> feature) const;

 private:
  RowMatrix class_means_;
  Eigen::MatrixXd pooled_chol_;
  Eigen::VectorXd agn_mean_;
  Eigen::MatrixXd agn_chol_;
  double shrinkage_;
  std::vector<std::uint64_t> class_counts_;
};

/// Unshrunk second moments produced while fitting; exposed for diagnostics
/// and tests.
struct ScatterMatrices {
  RowMatrix class_means;            // K x D
  Eigen::VectorXd agn_mean;         // D
  Eigen::MatrixXd pooled;           // (1/N) sum_i (x_i - mu_{y_i})(x_i - mu_{y_i})^T
  Eigen::MatrixXd agnostic;         // (1/N) sum_i (x_i - mu_agn)(x_i - mu_agn)^T
  std::vector<std::uint64_t> class_counts;
};

ScatterMatrices compute_scatter(const EmbeddingDataset& ds);

/// Sigma + lambda * (trace(Sigma) / D) * I. When the trace is zero (all
/// deviations vanish) the scale falls back to 1 so lambda still regularizes.
Eigen::MatrixXd shrink_covariance(const Eigen::MatrixXd& cov, double shrinkage);

/// Lower Cholesky factor; throws SingularityError when the matrix is not
/// numerically positive-definite.
Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov, const char* which);

GaussianBank fit_gaussian_bank(const EmbeddingDataset& ds, double shrinkage = kDefaultShrinkage);

void save_bank(const GaussianBank& bank, const std::filesystem::path& path);
GaussianBank load_bank(const std::filesystem::path& path);

}  // namespace difficalib
