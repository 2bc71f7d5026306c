#include "difficalib/gaussian.hpp"

#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "difficalib/error.hpp"
#include "difficalib/kernels.hpp"

namespace difficalib {

namespace {

constexpr std::string_view kMagic = "GBK1";
constexpr std::uint32_t kVersion = 1;

// A pivot this small relative to the largest diagonal entry is treated as a
// failed factorization: solves against it would be dominated by rounding.
constexpr double kPivotFloor = 1e-13;

double solve_norm(const Eigen::MatrixXd& chol, Eigen::VectorXd diff) {
  chol.triangularView<Eigen::Lower>().solveInPlace(diff);
  return diff.squaredNorm();
}

template <typename T>
Eigen::VectorXd to_vector(std::span<const T> feature) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(feature.size()));
  for (std::size_t j = 0; j < feature.size(); ++j) v[j] = static_cast<double>(feature[j]);
  return v;
}

// Accumulates the lower triangle of (x - c)(x - c)^T over all rows, where c is
// the row's center, then mirrors it.
Eigen::MatrixXd scatter_about(const EmbeddingDataset& ds, const RowMatrix& centers,
                              bool per_class) {
  const std::size_t d = ds.dim();
  std::vector<double> acc(d * d);
  kernels::omp::reduce_rows(ds.size(), acc, [&](std::size_t i, std::span<double> out) {
    const auto x = ds.row(i);
    const auto c = centers.row(per_class ? ds.labels()[i] : 0);
    std::vector<double> delta(d);
    for (std::size_t j = 0; j < d; ++j) delta[j] = static_cast<double>(x[j]) - c[j];
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t s = 0; s <= r; ++s) out[r * d + s] += delta[r] * delta[s];
    }
    return 0.0;
  });
  Eigen::MatrixXd m(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t s = 0; s <= r; ++s) {
      m(r, s) = acc[r * d + s];
      m(s, r) = acc[r * d + s];
    }
  }
  return m;
}

}  // namespace

GaussianBank::GaussianBank(RowMatrix class_means, Eigen::MatrixXd pooled_chol,
                           Eigen::VectorXd agn_mean, Eigen::MatrixXd agn_chol, double shrinkage,
                           std::vector<std::uint64_t> class_counts)
    : class_means_(std::move(class_means)),
      pooled_chol_(std::move(pooled_chol)),
      agn_mean_(std::move(agn_mean)),
      agn_chol_(std::move(agn_chol)),
      shrinkage_(shrinkage),
      class_counts_(std::move(class_counts)) {
  const auto d = class_means_.cols();
  if (class_means_.rows() < 2 || d < 1) throw ValidationError("bank needs K >= 2 and D >= 1");
  if (pooled_chol_.rows() != d || pooled_chol_.cols() != d || agn_chol_.rows() != d ||
      agn_chol_.cols() != d || agn_mean_.size() != d) {
    throw ValidationError("bank parameter shapes disagree with D = " + std::to_string(d));
  }
  if (class_counts_.size() != static_cast<std::size_t>(class_means_.rows())) {
    throw ValidationError("bank class_counts length != K");
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(pooled_chol_(j, j) > 0.0) || !(agn_chol_(j, j) > 0.0)) {
      throw ValidationError("bank Cholesky factor has non-positive diagonal");
    }
  }
}

double GaussianBank::mahalanobis_class(std::span<const double> feature, std::size_t k) const {
  if (k >= num_classes()) {
    throw IndexError("class index " + std::to_string(k) + " out of range for K = " +
                     std::to_string(num_classes()));
  }
  if (feature.size() != dim()) throw ValidationError("feature width != bank D");
  return solve_norm(pooled_chol_, to_vector(feature) - class_means_.row(k).transpose());
}

double GaussianBank::mahalanobis_class(std::span<const float> feature, std::size_t k) const {
  if (k >= num_classes()) {
    throw IndexError("class index " + std::to_string(k) + " out of range for K = " +
                     std::to_string(num_classes()));
  }
  if (feature.size() != dim()) throw ValidationError("feature width != bank D");
  return solve_norm(pooled_chol_, to_vector(feature) - class_means_.row(k).transpose());
}

double GaussianBank::mahalanobis_agnostic(std::span<const double> feature) const {
  if (feature.size() != dim()) throw ValidationError("feature width != bank D");
  return solve_norm(agn_chol_, to_vector(feature) - agn_mean_);
}

double GaussianBank::mahalanobis_agnostic(std::span<const float> feature) const {
  if (feature.size() != dim()) throw ValidationError("feature width != bank D");
  return solve_norm(agn_chol_, to_vector(feature) - agn_mean_);
}

ScatterMatrices compute_scatter(const EmbeddingDataset& ds) {
  const std::size_t k = ds.num_classes();
  const std::size_t d = ds.dim();
  const std::size_t n = ds.size();

  // Per-class sums in one pass; slot k*d + j, counts tracked separately.
  std::vector<double> sums(k * d);
  kernels::omp::reduce_rows(n, sums, [&](std::size_t i, std::span<double> out) {
    const auto x = ds.row(i);
    double* dst = out.data() + ds.labels()[i] * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] += static_cast<double>(x[j]);
    return 0.0;
  });

  ScatterMatrices sc;
  sc.class_counts.assign(k, 0);
  for (const auto y : ds.labels()) ++sc.class_counts[y];
  for (std::size_t c = 0; c < k; ++c) {
    if (sc.class_counts[c] == 0) {
      throw FitError("class " + std::to_string(c) + " has no samples; cannot fit its mean");
    }
  }

  sc.class_means.resize(k, d);
  sc.agn_mean = Eigen::VectorXd::Zero(d);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      sc.class_means(c, j) = sums[c * d + j] / static_cast<double>(sc.class_counts[c]);
      sc.agn_mean[j] += sums[c * d + j];
    }
  }
  sc.agn_mean /= static_cast<double>(n);

  sc.pooled = scatter_about(ds, sc.class_means, true) / static_cast<double>(n);
  RowMatrix agn_center = sc.agn_mean.transpose();
  sc.agnostic = scatter_about(ds, agn_center, false) / static_cast<double>(n);
  return sc;
}

Eigen::MatrixXd shrink_covariance(const Eigen::MatrixXd& cov, double shrinkage) {
  if (!(shrinkage >= 0.0) || !std::isfinite(shrinkage)) {
    throw ValidationError("shrinkage must be finite and >= 0");
  }
  const double trace = cov.trace();
  const double scale = trace > 0.0 ? trace / static_cast<double>(cov.rows()) : 1.0;
  Eigen::MatrixXd out = cov;
  out.diagonal().array() += shrinkage * scale;
  return out;
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov, const char* which) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double max_diag = cov.diagonal().maxCoeff();
  bool ok = llt.info() == Eigen::Success && max_diag > 0.0;
  Eigen::MatrixXd l;
  if (ok) {
    l = llt.matrixL();
    const double min_pivot = l.diagonal().minCoeff();
    ok = min_pivot > 0.0 && min_pivot * min_pivot > kPivotFloor * max_diag;
  }
  if (!ok) {
    throw SingularityError(std::string(which) +
                           " covariance is singular or not positive-definite after shrinkage; "
                           "increase the shrinkage parameter");
  }
  return l;
}

GaussianBank fit_gaussian_bank(const EmbeddingDataset& ds, double shrinkage) {
  if (!(shrinkage >= 0.0) || !std::isfinite(shrinkage)) {
    throw ValidationError("shrinkage must be finite and >= 0");
  }
  auto sc = compute_scatter(ds);
  auto pooled = cholesky_factor(shrink_covariance(sc.pooled, shrinkage), "pooled");
  auto agn = cholesky_factor(shrink_covariance(sc.agnostic, shrinkage), "class-agnostic");
  return GaussianBank(std::move(sc.class_means), std::move(pooled), std::move(sc.agn_mean),
                      std::move(agn), shrinkage, std::move(sc.class_counts));
}

void save_bank(const GaussianBank& bank, const std::filesystem::path& path) {
  const std::size_t k = bank.num_classes();
  const std::size_t d = bank.dim();
  detail::ByteWriter out;
  out.bytes(kMagic);
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(k));
  out.u32(static_cast<std::uint32_t>(d));
  out.f64(bank.shrinkage());
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) out.f64(bank.class_means()(c, j));
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s) out.f64(bank.pooled_chol()(r, s));
  for (std::size_t j = 0; j < d; ++j) out.f64(bank.agn_mean()[j]);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s) out.f64(bank.agn_chol()(r, s));
  for (const auto n : bank.class_counts()) out.f64(static_cast<double>(n));
  detail::write_file(path, out.data());
}

GaussianBank load_bank(const std::filesystem::path& path) {
  detail::ByteReader in(detail::read_file(path));
  if (in.size() < 24) throw FormatError(path.string() + ": file too short for GBK1 header");
  if (in.bytes(4) != kMagic) throw FormatError(path.string() + ": bad magic, not a GBK1 file");
  const auto version = in.u32();
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported GBK1 version " + std::to_string(version));
  }
  const std::size_t k = in.u32();
  const std::size_t d = in.u32();
  const std::size_t expected = 24 + 8 * (k * d + 2 * d * d + d + k);
  if (in.size() != expected) {
    throw CorruptionError(path.string() + ": expected " + std::to_string(expected) +
                          " bytes from header, found " + std::to_string(in.size()));
  }
  const double shrinkage = in.f64();
  RowMatrix means(k, d);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) means(c, j) = in.f64();
  Eigen::MatrixXd pooled(d, d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s) pooled(r, s) = in.f64();
  Eigen::VectorXd agn_mean(d);
  for (std::size_t j = 0; j < d; ++j) agn_mean[j] = in.f64();
  Eigen::MatrixXd agn(d, d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s) agn(r, s) = in.f64();
  std::vector<std::uint64_t> counts(k);
  for (auto& n : counts) {
    const double v = in.f64();
    if (!(v >= 1.0) || v != std::floor(v)) throw CorruptionError(path.string() + ": bad class count");
    n = static_cast<std::uint64_t>(v);
  }
  return GaussianBank(std::move(means), std::move(pooled), std::move(agn_mean), std::move(agn),
                      shrinkage, std::move(counts));
}

}  // namespace difficalib
