#include "difficalib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "difficalib/classifier.hpp"
#include "difficalib/error.hpp"

namespace difficalib {

namespace {

void check_labels(const RowMatrix& m, std::span<const std::uint32_t> labels) {
  if (static_cast<std::size_t>(m.rows()) != labels.size()) {
    throw ValidationError("prediction rows (" + std::to_string(m.rows()) + ") != label count (" +
                          std::to_string(labels.size()) + ")");
  }
  for (const auto y : labels) {
    if (y >= static_cast<std::size_t>(m.cols())) {
      throw ValidationError("label " + std::to_string(y) + " >= number of columns");
    }
  }
}

void check_ids(std::span<const std::uint64_t> ids, std::size_t n) {
  if (!ids.empty() && ids.size() != n) {
    throw ValidationError("id count (" + std::to_string(ids.size()) + ") != sample count (" +
                          std::to_string(n) + ")");
  }
}

std::uint64_t tie_key(std::span<const std::uint64_t> ids, std::size_t i) {
  return ids.empty() ? i : ids[i];
}

struct Counts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

Counts check_detection(std::span<const double> scores, std::span<const std::uint8_t> positives) {
  if (scores.size() != positives.size()) {
    throw ValidationError("score count != label count in detection metrics");
  }
  Counts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw ValidationError("NaN detection score at index " + std::to_string(i));
    if (positives[i] != 0) {
      ++c.positives;
    } else {
      ++c.negatives;
    }
  }
  if (c.positives == 0 || c.negatives == 0) {
    throw ValidationError("detection metrics need at least one positive and one negative");
  }
  return c;
}

// Indices sorted by descending score; equal scores form contiguous groups.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

nlohmann::json detection_json(const DetectionMetrics& m) {
  return {{"auroc", m.auroc}, {"aupr", m.aupr}, {"fpr_at_95_tpr", m.fpr_at_95_tpr}};
}

}  // namespace

std::vector<std::uint32_t> argmax_rows(const RowMatrix& m) {
  std::vector<std::uint32_t> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index arg = 0;
    m.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(arg);
  }
  return out;
}

double accuracy(const RowMatrix& probs, std::span<const std::uint32_t> labels) {
  check_labels(probs, labels);
  if (labels.empty()) throw ValidationError("accuracy of an empty set");
  const auto pred = argmax_rows(probs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double nll(const RowMatrix& probs, std::span<const std::uint32_t> labels) {
  check_labels(probs, labels);
  if (labels.empty()) throw ValidationError("NLL of an empty set");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::max(probs(static_cast<Eigen::Index>(i), labels[i]),
                              std::numeric_limits<double>::min());
    total -= std::log(p);
  }
  return total / static_cast<double>(labels.size());
}

EceResult ece_from_confidence(std::span<const double> confidence,
                              std::span<const std::uint8_t> correct, std::size_t bins,
                              std::span<const std::uint64_t> ids) {
  const std::size_t n = confidence.size();
  if (correct.size() != n) throw ValidationError("confidence and correctness lengths differ");
  check_ids(ids, n);
  if (bins < 1) throw ValidationError("ECE needs at least one bin");
  if (n < bins) {
    throw ValidationError("ECE with " + std::to_string(bins) + " equal-mass bins needs N >= bins, got N = " +
                          std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (confidence[a] != confidence[b]) return confidence[a] < confidence[b];
    return tie_key(ids, a) < tie_key(ids, b);
  });

  EceResult out;
  const std::size_t base = n / bins;
  const std::size_t extra = n % bins;
  std::size_t at = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    double conf = 0.0;
    double acc = 0.0;
    for (std::size_t i = at; i < at + size; ++i) {
      conf += confidence[order[i]];
      acc += correct[order[i]] != 0 ? 1.0 : 0.0;
    }
    at += size;
    CalibrationBin bin;
    bin.count = size;
    bin.confidence = conf / static_cast<double>(size);
    bin.accuracy = acc / static_cast<double>(size);
    out.ece += static_cast<double>(size) / static_cast<double>(n) *
               std::abs(bin.accuracy - bin.confidence);
    out.bins.push_back(bin);
  }
  return out;
}

EceResult ece(const RowMatrix& probs, std::span<const std::uint32_t> labels, std::size_t bins,
              std::span<const std::uint64_t> ids) {
  check_labels(probs, labels);
  const auto pred = argmax_rows(probs);
  std::vector<double> confidence(labels.size());
  std::vector<std::uint8_t> correct(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    confidence[i] = probs(static_cast<Eigen::Index>(i), pred[i]);
    correct[i] = pred[i] == labels[i] ? 1 : 0;
  }
  return ece_from_confidence(confidence, correct, bins, ids);
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> positives) {
  const auto counts = check_detection(scores, positives);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with mid-ranks; every partial sum is a half-integer, so
  // the numerator is exact.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (positives[order[t]] != 0) rank_sum += mid_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(counts.positives);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(counts.negatives));
}

double aupr(std::span<const double> scores, std::span<const std::uint8_t> positives) {
  const auto counts = check_detection(scores, positives);
  const auto order = descending(scores);
  double tp = 0.0;
  double fp = 0.0;
  double area = 0.0;
  const double np = static_cast<double>(counts.positives);
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    const double prev_tp = tp;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positives[order[j]] != 0 ? tp : fp) += 1.0;
      ++j;
    }
    area += (tp - prev_tp) / np * (tp / (tp + fp));
    i = j;
  }
  return area;
}

double fpr_at_tpr(std::span<const double> scores, std::span<const std::uint8_t> positives,
                  double tpr) {
  const auto counts = check_detection(scores, positives);
  if (!(tpr > 0.0 && tpr <= 1.0)) throw ValidationError("target TPR must be in (0, 1]");
  const auto order = descending(scores);
  const double np = static_cast<double>(counts.positives);
  double tp = 0.0;
  double fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positives[order[j]] != 0 ? tp : fp) += 1.0;
      ++j;
    }
    if (tp >= tpr * np - 1e-9) return fp / static_cast<double>(counts.negatives);
    i = j;
  }
  return 1.0;  // unreachable: the lowest threshold flags everything
}

DetectionMetrics detection_metrics(std::span<const double> scores,
                                   std::span<const std::uint8_t> positives) {
  return {auroc(scores, positives), aupr(scores, positives), fpr_at_tpr(scores, positives, 0.95)};
}

std::string_view to_string(UncertaintyKind kind) {
  switch (kind) {
    case UncertaintyKind::kMsp: return "msp";
    case UncertaintyKind::kEntropy: return "entropy";
    case UncertaintyKind::kMaxLogit: return "maxlogit";
  }
  return "unknown";
}

UncertaintyKind parse_uncertainty(std::string_view name) {
  for (const auto kind : kAllUncertaintyKinds) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown uncertainty score '" + std::string(name) +
                    "' (expected msp, entropy, maxlogit)");
}

const std::vector<double>& UncertaintyScores::get(UncertaintyKind kind) const {
  switch (kind) {
    case UncertaintyKind::kMsp: return msp_negated;
    case UncertaintyKind::kEntropy: return entropy;
    case UncertaintyKind::kMaxLogit: return maxlogit_negated;
  }
  return entropy;
}

UncertaintyScores uncertainty_scores(const RowMatrix& logits) {
  const RowMatrix probs = softmax(logits);
  UncertaintyScores out;
  out.entropy = entropy(probs);
  out.msp_negated.resize(out.entropy.size());
  out.maxlogit_negated.resize(out.entropy.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out.msp_negated[static_cast<std::size_t>(i)] = -probs.row(i).maxCoeff();
    out.maxlogit_negated[static_cast<std::size_t>(i)] = -logits.row(i).maxCoeff();
  }
  return out;
}

std::vector<double> default_rejection_grid() {
  std::vector<double> grid;
  for (int k = 0; k < 20; ++k) grid.push_back(static_cast<double>(k) / 20.0);
  return grid;
}

std::vector<RiskCoveragePoint> risk_coverage(const RowMatrix& probs,
                                             std::span<const std::uint32_t> labels,
                                             std::span<const double> uncertainty,
                                             std::span<const double> grid,
                                             std::span<const std::uint64_t> ids) {
  check_labels(probs, labels);
  const std::size_t n = labels.size();
  if (uncertainty.size() != n) throw ValidationError("uncertainty length != sample count");
  check_ids(ids, n);
  const auto pred = argmax_rows(probs);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (uncertainty[a] != uncertainty[b]) return uncertainty[a] > uncertainty[b];
    return tie_key(ids, a) < tie_key(ids, b);
  });
  // dropped_correct[m] = correct predictions among the m most uncertain.
  std::vector<std::size_t> dropped_correct(n + 1, 0);
  for (std::size_t m = 0; m < n; ++m) {
    dropped_correct[m + 1] = dropped_correct[m] + (pred[order[m]] == labels[order[m]] ? 1 : 0);
  }

  std::vector<RiskCoveragePoint> out;
  for (const double r : grid) {
    if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("rejection rate must be in [0, 1]");
    // The epsilon keeps grid values like 0.15 from rounding up a whole sample.
    const auto drop = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) - 1e-9)));
    RiskCoveragePoint pt;
    pt.rejection_rate = r;
    pt.kept = n - drop;
    pt.accuracy = pt.kept == 0 ? std::numeric_limits<double>::quiet_NaN()
                               : static_cast<double>(dropped_correct[n] - dropped_correct[drop]) /
                                     static_cast<double>(pt.kept);
    out.push_back(pt);
  }
  return out;
}

std::vector<BucketError> bucket_error(const DifficultyScores& scores,
                                      std::span<const std::uint32_t> predictions,
                                      std::span<const std::uint32_t> labels,
                                      std::size_t bucket_size) {
  if (bucket_size < 1) throw ValidationError("bucket size must be >= 1");
  const std::size_t n = scores.size();
  if (predictions.size() != n || labels.size() != n || scores.rmd.size() != n) {
    throw ValidationError("scores, predictions and labels must have equal length");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores.rmd[a] != scores.rmd[b]) return scores.rmd[a] > scores.rmd[b];
    return scores.ids[a] < scores.ids[b];
  });
  std::vector<BucketError> out;
  for (std::size_t start = 0; start < n; start += bucket_size) {
    const std::size_t end = std::min(n, start + bucket_size);
    BucketError b;
    b.first_rank = start + 1;
    b.last_rank = end;
    b.count = end - start;
    for (std::size_t i = start; i < end; ++i) b.errors += predictions[order[i]] != labels[order[i]];
    b.error_rate = static_cast<double>(b.errors) / static_cast<double>(b.count);
    out.push_back(b);
  }
  return out;
}

EvalReport evaluate_logits(const RowMatrix& logits, std::span<const std::uint32_t> labels,
                           std::span<const std::uint64_t> ids, const EvalOptions& opts) {
  check_labels(logits, labels);
  const RowMatrix probs = softmax(logits);
  EvalReport report;
  report.num_samples = labels.size();
  report.accuracy = accuracy(probs, labels);
  const auto calib = ece(probs, labels, opts.bins, ids);
  report.ece = calib.ece;
  report.bins = calib.bins;
  report.nll = nll(probs, labels);

  const auto unc = uncertainty_scores(logits);
  if (opts.misclassification) {
    const auto pred = argmax_rows(probs);
    std::vector<std::uint8_t> wrong(labels.size());
    std::size_t errors = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      wrong[i] = pred[i] != labels[i] ? 1 : 0;
      errors += wrong[i];
    }
    // Undefined when every prediction is right (or wrong); omitted then.
    if (errors > 0 && errors < labels.size()) {
      DetectionBlock block;
      for (const auto kind : kAllUncertaintyKinds) {
        block.emplace(std::string(to_string(kind)), detection_metrics(unc.get(kind), wrong));
      }
      report.misclassification = std::move(block);
    }
  }
  if (opts.risk_coverage) {
    const auto grid = default_rejection_grid();
    report.risk_coverage = risk_coverage(probs, labels, unc.get(opts.rejection_score), grid, ids);
  }
  return report;
}

DetectionBlock ood_detection(const RowMatrix& in_logits, const RowMatrix& ood_logits) {
  if (in_logits.cols() != ood_logits.cols()) {
    throw ValidationError("in-distribution and OOD logits have different class counts");
  }
  RowMatrix all(in_logits.rows() + ood_logits.rows(), in_logits.cols());
  all << in_logits, ood_logits;
  std::vector<std::uint8_t> is_ood(static_cast<std::size_t>(all.rows()), 0);
  std::fill(is_ood.begin() + in_logits.rows(), is_ood.end(), 1);
  const auto unc = uncertainty_scores(all);
  DetectionBlock block;
  for (const auto kind : kAllUncertaintyKinds) {
    block.emplace(std::string(to_string(kind)), detection_metrics(unc.get(kind), is_ood));
  }
  return block;
}

nlohmann::json to_json(const DetectionBlock& block) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, m] : block) j[name] = detection_json(m);
  return j;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["accuracy"] = report.accuracy;
  j["ece"] = report.ece;
  j["nll"] = report.nll;
  j["num_samples"] = report.num_samples;
  auto bins = nlohmann::json::array();
  for (const auto& b : report.bins) {
    bins.push_back({{"confidence", b.confidence}, {"accuracy", b.accuracy}, {"count", b.count}});
  }
  j["bins"] = std::move(bins);
  if (report.misclassification) j["misclassification"] = to_json(*report.misclassification);
  if (report.ood) j["ood"] = to_json(*report.ood);
  if (report.risk_coverage) {
    auto pts = nlohmann::json::array();
    for (const auto& p : *report.risk_coverage) {
      pts.push_back({{"rejection_rate", p.rejection_rate}, {"accuracy", p.accuracy}, {"kept", p.kept}});
    }
    j["risk_coverage"] = std::move(pts);
  }
  if (report.bucket_errors) {
    auto rows = nlohmann::json::array();
    for (const auto& b : *report.bucket_errors) {
      rows.push_back({{"first_rank", b.first_rank},
                      {"last_rank", b.last_rank},
                      {"count", b.count},
                      {"errors", b.errors},
                      {"error_rate", b.error_rate}});
    }
    j["bucket_errors"] = std::move(rows);
  }
  return j;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "metric,value\n";
  char buf[160];
  const auto row = [&](const std::string& name, double v) {
    std::snprintf(buf, sizeof buf, "%s,%.17g\n", name.c_str(), v);
    out += buf;
  };
  row("accuracy", report.accuracy);
  row("ece", report.ece);
  row("nll", report.nll);
  const auto block = [&](const char* prefix, const std::optional<DetectionBlock>& b) {
    if (!b) return;
    for (const auto& [name, m] : *b) {
      row(std::string(prefix) + "." + name + ".auroc", m.auroc);
      row(std::string(prefix) + "." + name + ".aupr", m.aupr);
      row(std::string(prefix) + "." + name + ".fpr_at_95_tpr", m.fpr_at_95_tpr);
    }
  };
  block("misclassification", report.misclassification);
  block("ood", report.ood);
  return out;
}

std::string reliability_csv(const std::vector<CalibrationBin>& bins) {
  std::string out = "bin,confidence,accuracy,count\n";
  char buf[128];
  for (std::size_t b = 0; b < bins.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%zu\n", b, bins[b].confidence, bins[b].accuracy,
                  bins[b].count);
    out += buf;
  }
  return out;
}

std::string risk_coverage_csv(const std::vector<RiskCoveragePoint>& points) {
  std::string out = "rejection_rate,accuracy,kept\n";
  char buf[128];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu\n", p.rejection_rate, p.accuracy, p.kept);
    out += buf;
  }
  return out;
}

std::string bucket_error_csv(const std::vector<BucketError>& buckets) {
  std::string out = "first_rank,last_rank,count,errors,error_rate\n";
  char buf[128];
  for (const auto& b : buckets) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%.17g\n", b.first_rank, b.last_rank, b.count,
                  b.errors, b.error_rate);
    out += buf;
  }
  return out;
}

}  // namespace difficalib
