#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difficalib/dataset.hpp"
#include "difficalib/difficulty.hpp"
#include "difficalib/gaussian.hpp"

namespace difficalib {

enum class LossKind { kCe, kLs, kFocal, kL1Norm, kErConst, kPoly1, kDifficultyEr };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);
inline constexpr LossKind kAllLossKinds[] = {LossKind::kCe,     LossKind::kLs,
                                             LossKind::kFocal,  LossKind::kL1Norm,
                                             LossKind::kErConst, LossKind::kPoly1,
                                             LossKind::kDifficultyEr};

/// Entropy-regularization strength: 0.3 for up to 100 classes, 0.2 beyond.
double default_alpha(std::size_t num_classes);

// Baseline defaults are common conventions for these losses, not tuned values.
struct LossConfig {
  LossKind kind = LossKind::kCe;
  double alpha = 0.3;         // entropy weight for er_const / difficulty_er
  double ls_epsilon = 0.1;    // label smoothing mass
  double focal_gamma = 3.0;
  double l1_coeff = 0.01;     // weight on mean |logit|
  double poly_epsilon = 2.0;  // Poly-1 coefficient on (1 - p_y)

  void validate() const;
};

struct LrSchedule {
  double initial = 0.05;
  std::vector<std::size_t> decay_epochs;  // multiply by decay_factor at each listed epoch
  double decay_factor = 0.1;

  double at(std::size_t epoch) const;
};

struct OptimConfig {
  LrSchedule lr;
  double momentum = 0.9;
  double weight_decay = 1e-4;  // L2 added to weight gradients; biases are not decayed
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Fully connected softmax head: ReLU on hidden layers, linear logits.
/// Parameters live in one flat vector, per layer W (out x in, row-major)
/// followed by b (out).
class ClassifierModel {
 public:
  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) keyed by seed; biases zero.
  static ClassifierModel initialize(std::vector<std::size_t> layer_sizes, std::uint64_t seed);
  static ClassifierModel from_parameters(std::vector<std::size_t> layer_sizes,
                                         std::vector<double> parameters);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t num_classes() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }

  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + sizes_[layer] * sizes_[layer + 1];
  }
  /// True for weight entries, false for biases.
  std::vector<bool> decay_mask() const;

  /// Logits for one input row (length input_dim()).
  std::vector<double> logits(std::span<const float> x) const;

  friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;

 private:
  ClassifierModel(std::vector<std::size_t> sizes, std::vector<double> params);

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Per-sample objective on one logit vector. Writes d(loss)/d(logits) into
/// `dlogits` and returns the loss. `weight` is the difficulty weight s and is
/// only read for kDifficultyEr.
double logit_loss(std::span<const double> logits, std::uint32_t label, double weight,
                  const LossConfig& cfg, std::span<double> dlogits);

struct LossGrad {
  double loss = 0.0;          // batch mean
  std::vector<double> grad;   // parameter-shaped, batch mean
};

/// Mean loss and exact gradient over `rows` of `ds`. `weights` is aligned
/// with `rows` and required only for kDifficultyEr (may be empty otherwise).
LossGrad loss_and_grad(const ClassifierModel& model, const EmbeddingDataset& ds,
                       std::span<const std::size_t> rows, std::span<const double> weights,
                       const LossConfig& cfg);
/// Serial reference for loss_and_grad.
LossGrad loss_and_grad_serial(const ClassifierModel& model, const EmbeddingDataset& ds,
                              std::span<const std::size_t> rows, std::span<const double> weights,
                              const LossConfig& cfg);

struct Predictions {
  RowMatrix logits;  // N x K
  RowMatrix probs;   // N x K, softmax with max subtraction
};

Predictions predict(const ClassifierModel& model, const EmbeddingDataset& ds);
Predictions predict(const ClassifierModel& model, std::span<const float> features,
                    std::size_t dim);

/// Softmax of a logit matrix, row-wise.
RowMatrix softmax(const RowMatrix& logits);

/// Shannon entropy in nats per row; 0 * ln 0 is taken as 0. Rows must sum
/// to 1 within 1e-6.
std::vector<double> entropy(const RowMatrix& probs);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;  // NaN without a validation split
  double val_ece = 0.0;  // NaN without a validation split
};

struct TrainResult {
  ClassifierModel model;
  std::vector<EpochLog> log;
};

/// Mini-batch SGD with momentum. `scores` must cover every id of `ds` when
/// the loss is kDifficultyEr and is ignored otherwise. `hidden` lists hidden
/// layer widths (empty = linear head).
TrainResult train(const EmbeddingDataset& ds, const DifficultyScores* scores,
                  const LossConfig& lcfg, const OptimConfig& ocfg,
                  const std::vector<std::size_t>& hidden = {},
                  const EmbeddingDataset* validation = nullptr);

void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

/// CSV `epoch,train_loss,val_acc,val_ece`.
void save_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace difficalib
