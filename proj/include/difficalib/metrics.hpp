#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "difficalib/difficulty.hpp"
#include "difficalib/gaussian.hpp"

namespace difficalib {

inline constexpr std::size_t kDefaultEceBins = 15;

std::vector<std::uint32_t> argmax_rows(const RowMatrix& m);
double accuracy(const RowMatrix& probs, std::span<const std::uint32_t> labels);
/// Mean -ln p_y; probabilities are floored at the smallest normal double.
double nll(const RowMatrix& probs, std::span<const std::uint32_t> labels);

struct CalibrationBin {
  double confidence = 0.0;  // mean top-1 confidence
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct EceResult {
  double ece = 0.0;
  std::vector<CalibrationBin> bins;
};

/// Equal-mass ECE over top-1 confidences. Samples are sorted by confidence
/// ascending (ties by id, or by row when `ids` is empty) and cut into `bins`
/// contiguous groups whose sizes differ by at most one, larger groups first.
EceResult ece_from_confidence(std::span<const double> confidence,
                              std::span<const std::uint8_t> correct, std::size_t bins,
                              std::span<const std::uint64_t> ids = {});
EceResult ece(const RowMatrix& probs, std::span<const std::uint32_t> labels,
              std::size_t bins = kDefaultEceBins, std::span<const std::uint64_t> ids = {});

struct DetectionMetrics {
  double auroc = 0.0;
  double aupr = 0.0;
  double fpr_at_95_tpr = 0.0;
};

/// Positives are the events to detect; larger score means "more positive".
/// AUROC counts ties as one half; AUPR is the step-wise average precision
/// over descending distinct thresholds; FPR-95 is the false-positive rate at
/// the first (highest) threshold whose TPR reaches 0.95.
DetectionMetrics detection_metrics(std::span<const double> scores,
                                   std::span<const std::uint8_t> positives);
double auroc(std::span<const double> scores, std::span<const std::uint8_t> positives);
double aupr(std::span<const double> scores, std::span<const std::uint8_t> positives);
double fpr_at_tpr(std::span<const double> scores, std::span<const std::uint8_t> positives,
                  double tpr = 0.95);

enum class UncertaintyKind { kMsp, kEntropy, kMaxLogit };
inline constexpr UncertaintyKind kAllUncertaintyKinds[] = {
    UncertaintyKind::kMsp, UncertaintyKind::kEntropy, UncertaintyKind::kMaxLogit};
std::string_view to_string(UncertaintyKind kind);
UncertaintyKind parse_uncertainty(std::string_view name);

/// All three oriented so that larger = more uncertain.
struct UncertaintyScores {
  std::vector<double> msp_negated;
  std::vector<double> entropy;
  std::vector<double> maxlogit_negated;

  const std::vector<double>& get(UncertaintyKind kind) const;
};

UncertaintyScores uncertainty_scores(const RowMatrix& logits);

struct RiskCoveragePoint {
  double rejection_rate = 0.0;
  double accuracy = 0.0;  // NaN when every sample is rejected
  std::size_t kept = 0;
};

/// {0.00, 0.05, ..., 0.95}
std::vector<double> default_rejection_grid();

/// For each rate r drops the ceil(r*N) most uncertain samples (ties: lower id
/// dropped first) and reports accuracy on the rest.
std::vector<RiskCoveragePoint> risk_coverage(const RowMatrix& probs,
                                             std::span<const std::uint32_t> labels,
                                             std::span<const double> uncertainty,
                                             std::span<const double> grid,
                                             std::span<const std::uint64_t> ids = {});

struct BucketError {
  std::size_t first_rank = 0;  // 1-based rank of the hardest sample in the bucket
  std::size_t last_rank = 0;   // inclusive
  std::size_t count = 0;
  std::size_t errors = 0;
  double error_rate = 0.0;
};

/// Ranks samples by descending score (ties by id) and reports the
/// misclassification rate of consecutive buckets of `bucket_size`.
/// `predictions` and `labels` are aligned with `scores.ids`.
std::vector<BucketError> bucket_error(const DifficultyScores& scores,
                                      std::span<const std::uint32_t> predictions,
                                      std::span<const std::uint32_t> labels,
                                      std::size_t bucket_size);

using DetectionBlock = std::map<std::string, DetectionMetrics>;

struct EvalReport {
  double accuracy = 0.0;
  double ece = 0.0;
  double nll = 0.0;
  std::size_t num_samples = 0;
  std::vector<CalibrationBin> bins;
  std::optional<DetectionBlock> misclassification;  // positives = errors
  std::optional<DetectionBlock> ood;                // positives = OOD samples
  std::optional<std::vector<RiskCoveragePoint>> risk_coverage;
  std::optional<std::vector<BucketError>> bucket_errors;
};

struct EvalOptions {
  std::size_t bins = kDefaultEceBins;
  bool misclassification = true;
  bool risk_coverage = true;
  UncertaintyKind rejection_score = UncertaintyKind::kEntropy;
};

/// Accuracy, ECE, NLL and (optionally) misclassification detection and the
/// risk-coverage curve from a logit matrix.
EvalReport evaluate_logits(const RowMatrix& logits, std::span<const std::uint32_t> labels,
                           std::span<const std::uint64_t> ids, const EvalOptions& opts = {});

/// OOD detection per uncertainty kind: in-distribution rows are negatives,
/// OOD rows positives.
DetectionBlock ood_detection(const RowMatrix& in_logits, const RowMatrix& ood_logits);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const DetectionBlock& block);

/// Flat `metric,value` rows.
std::string report_csv(const EvalReport& report);
/// `bin,confidence,accuracy,count`
std::string reliability_csv(const std::vector<CalibrationBin>& bins);
/// `rejection_rate,accuracy,kept`
std::string risk_coverage_csv(const std::vector<RiskCoveragePoint>& points);
/// `first_rank,last_rank,count,errors,error_rate`
std::string bucket_error_csv(const std::vector<BucketError>& buckets);

}  // namespace difficalib
