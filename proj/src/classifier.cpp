#include "difficalib/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "binary_io.hpp"
#include "difficalib/error.hpp"
#include "difficalib/kernels.hpp"
#include "difficalib/metrics.hpp"
#include "difficalib/rng.hpp"

namespace difficalib {

namespace {

constexpr std::string_view kMagic = "MDL1";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kInitStream = 0x696E6974;     // "init"
constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"

std::vector<std::size_t> layer_offsets(const std::vector<std::size_t>& sizes) {
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    offsets.push_back(at);
    at += sizes[l] * sizes[l + 1] + sizes[l + 1];
  }
  offsets.push_back(at);  // total
  return offsets;
}

void check_sizes(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw ValidationError("model needs at least input and output sizes");
  for (const auto s : sizes) {
    if (s == 0) throw ValidationError("layer sizes must be >= 1");
  }
  if (sizes.back() < 2) throw ValidationError("model needs at least 2 output classes");
}

// Forward pass keeping every layer's pre-activation; returns the logits.
// pre[l] is the pre-activation of layer l (output side).
struct Trace {
  std::vector<std::vector<double>> pre;
};

void forward(const ClassifierModel& model, std::span<const float> x, Trace& trace) {
  const auto& sizes = model.layer_sizes();
  const auto params = model.parameters();
  const std::size_t layers = model.num_layers();
  trace.pre.resize(layers);

  std::vector<double> input(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes[l];
    const std::size_t out = sizes[l + 1];
    const double* w = params.data() + model.weight_offset(l);
    const double* b = params.data() + model.bias_offset(l);
    auto& z = trace.pre[l];
    z.assign(out, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      double acc = b[r];
      const double* wr = w + r * in;
      for (std::size_t c = 0; c < in; ++c) acc += wr[c] * input[c];
      z[r] = acc;
    }
    if (l + 1 < layers) {
      input.resize(out);
      for (std::size_t r = 0; r < out; ++r) input[r] = std::max(z[r], 0.0);
    }
  }
}

// Per-sample loss and gradient accumulation into `grad`.
double sample_loss_grad(const ClassifierModel& model, std::span<const float> x,
                        std::uint32_t label, double weight, const LossConfig& cfg,
                        std::span<double> grad) {
  const auto& sizes = model.layer_sizes();
  const auto params = model.parameters();
  const std::size_t layers = model.num_layers();

  Trace trace;
  forward(model, x, trace);
  std::vector<double> delta(sizes.back());
  const double loss = logit_loss(trace.pre.back(), label, weight, cfg, delta);

  std::vector<double> input;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = sizes[l];
    const std::size_t out = sizes[l + 1];
    // Activation feeding layer l.
    if (l == 0) {
      input.assign(x.begin(), x.end());
    } else {
      const auto& z = trace.pre[l - 1];
      input.resize(in);
      for (std::size_t c = 0; c < in; ++c) input[c] = std::max(z[c], 0.0);
    }
    double* gw = grad.data() + model.weight_offset(l);
    double* gb = grad.data() + model.bias_offset(l);
    for (std::size_t r = 0; r < out; ++r) {
      const double d = delta[r];
      gb[r] += d;
      if (d == 0.0) continue;
      double* gwr = gw + r * in;
      for (std::size_t c = 0; c < in; ++c) gwr[c] += d * input[c];
    }
    if (l == 0) break;
    const double* w = params.data() + model.weight_offset(l);
    const auto& z_prev = trace.pre[l - 1];
    std::vector<double> next(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* wr = w + r * in;
      for (std::size_t c = 0; c < in; ++c) next[c] += wr[c] * d;
    }
    for (std::size_t c = 0; c < in; ++c) {
      if (!(z_prev[c] > 0.0)) next[c] = 0.0;
    }
    delta.swap(next);
  }
  return loss;
}

void check_batch(const ClassifierModel& model, const EmbeddingDataset& ds,
                 std::span<const std::size_t> rows, std::span<const double> weights,
                 const LossConfig& cfg) {
  cfg.validate();
  if (rows.empty()) throw ValidationError("batch is empty");
  if (ds.dim() != model.input_dim()) {
    throw ValidationError("dataset D = " + std::to_string(ds.dim()) + " but model input width = " +
                          std::to_string(model.input_dim()));
  }
  if (ds.num_classes() > model.num_classes()) {
    throw ValidationError("dataset K exceeds model output width");
  }
  if (cfg.kind == LossKind::kDifficultyEr && weights.size() != rows.size()) {
    throw ValidationError("difficulty weight vector has length " + std::to_string(weights.size()) +
                          ", batch has " + std::to_string(rows.size()));
  }
  for (const auto r : rows) {
    if (r >= ds.size()) throw IndexError("batch row " + std::to_string(r) + " out of range");
  }
}

template <typename Reduce>
LossGrad batch_loss_grad(const ClassifierModel& model, const EmbeddingDataset& ds,
                         std::span<const std::size_t> rows, std::span<const double> weights,
                         const LossConfig& cfg, Reduce reduce) {
  check_batch(model, ds, rows, weights, cfg);
  const bool weighted = cfg.kind == LossKind::kDifficultyEr;
  LossGrad out;
  out.grad.assign(model.parameters().size(), 0.0);
  const double total = reduce(rows.size(), std::span<double>(out.grad),
                              [&](std::size_t i, std::span<double> acc) {
                                const std::size_t r = rows[i];
                                return sample_loss_grad(model, ds.row(r), ds.labels()[r],
                                                        weighted ? weights[i] : 1.0, cfg, acc);
                              });
  const double n = static_cast<double>(rows.size());
  out.loss = total / n;
  for (auto& g : out.grad) g /= n;
  return out;
}

}  // namespace

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCe: return "ce";
    case LossKind::kLs: return "ls";
    case LossKind::kFocal: return "focal";
    case LossKind::kL1Norm: return "l1norm";
    case LossKind::kErConst: return "er_const";
    case LossKind::kPoly1: return "poly1";
    case LossKind::kDifficultyEr: return "difficulty_er";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  for (const auto kind : kAllLossKinds) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown loss kind '" + std::string(name) +
                    "' (expected ce, ls, focal, l1norm, er_const, poly1, difficulty_er)");
}

double default_alpha(std::size_t num_classes) { return num_classes <= 100 ? 0.3 : 0.2; }

void LossConfig::validate() const {
  const auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError(std::string(name) + " must be finite and >= 0");
    }
  };
  check(alpha, "alpha");
  check(ls_epsilon, "ls_epsilon");
  check(focal_gamma, "focal_gamma");
  check(l1_coeff, "l1_coeff");
  check(poly_epsilon, "poly_epsilon");
  if (ls_epsilon > 1.0) throw ConfigError("ls_epsilon must be <= 1");
}

double LrSchedule::at(std::size_t epoch) const {
  double lr = initial;
  for (const auto e : decay_epochs) {
    if (epoch >= e) lr *= decay_factor;
  }
  return lr;
}

void OptimConfig::validate() const {
  if (!(lr.initial > 0.0) || !std::isfinite(lr.initial)) {
    throw ConfigError("learning rate must be finite and > 0");
  }
  if (!(lr.decay_factor > 0.0) || !std::isfinite(lr.decay_factor)) {
    throw ConfigError("learning-rate decay factor must be finite and > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("weight decay must be finite and >= 0");
  }
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

ClassifierModel::ClassifierModel(std::vector<std::size_t> sizes, std::vector<double> params)
    : sizes_(std::move(sizes)), offsets_(layer_offsets(sizes_)), params_(std::move(params)) {}

ClassifierModel ClassifierModel::initialize(std::vector<std::size_t> layer_sizes,
                                            std::uint64_t seed) {
  check_sizes(layer_sizes);
  const auto offsets = layer_offsets(layer_sizes);
  std::vector<double> params(offsets.back(), 0.0);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer_sizes[l]));
    const std::size_t count = layer_sizes[l] * layer_sizes[l + 1];
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t idx = offsets[l] + i;
      params[idx] = bound * (2.0 * rng::uniform(seed, kInitStream, 0, idx) - 1.0);
    }
  }
  return ClassifierModel(std::move(layer_sizes), std::move(params));
}

ClassifierModel ClassifierModel::from_parameters(std::vector<std::size_t> layer_sizes,
                                                 std::vector<double> parameters) {
  check_sizes(layer_sizes);
  const auto offsets = layer_offsets(layer_sizes);
  if (parameters.size() != offsets.back()) {
    throw ValidationError("parameter count " + std::to_string(parameters.size()) +
                          " does not match layer sizes (expected " +
                          std::to_string(offsets.back()) + ")");
  }
  for (const double p : parameters) {
    if (!std::isfinite(p)) throw ValidationError("model parameters must be finite");
  }
  return ClassifierModel(std::move(layer_sizes), std::move(parameters));
}

std::vector<bool> ClassifierModel::decay_mask() const {
  std::vector<bool> mask(params_.size(), false);
  for (std::size_t l = 0; l < num_layers(); ++l) {
    std::fill(mask.begin() + static_cast<std::ptrdiff_t>(weight_offset(l)),
              mask.begin() + static_cast<std::ptrdiff_t>(bias_offset(l)), true);
  }
  return mask;
}

std::vector<double> ClassifierModel::logits(std::span<const float> x) const {
  if (x.size() != input_dim()) {
    throw ValidationError("input width " + std::to_string(x.size()) + " != model input width " +
                          std::to_string(input_dim()));
  }
  Trace trace;
  forward(*this, x, trace);
  return trace.pre.back();
}

double logit_loss(std::span<const double> logits, std::uint32_t label, double weight,
                  const LossConfig& cfg, std::span<double> dlogits) {
  const std::size_t k = logits.size();
  if (label >= k) throw IndexError("label " + std::to_string(label) + " >= K");
  if (dlogits.size() != k) throw ValidationError("gradient buffer length != K");

  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (const double z : logits) sum += std::exp(z - top);
  const double lse = top + std::log(sum);

  std::vector<double> logp(k);
  std::vector<double> p(k);
  for (std::size_t j = 0; j < k; ++j) {
    logp[j] = logits[j] - lse;
    p[j] = std::exp(logp[j]);
  }
  const double py = p[label];
  const double ce = -logp[label];

  // Start from the cross-entropy gradient p - e_y.
  for (std::size_t j = 0; j < k; ++j) dlogits[j] = p[j];
  dlogits[label] -= 1.0;

  switch (cfg.kind) {
    case LossKind::kCe:
      return ce;

    case LossKind::kErConst:
    case LossKind::kDifficultyEr: {
      const double s = cfg.kind == LossKind::kErConst ? 1.0 : weight;
      double h = 0.0;
      for (std::size_t j = 0; j < k; ++j) h -= p[j] * logp[j];
      // dH/dz_j = -p_j (ln p_j + H); the loss subtracts alpha * s * H.
      const double scale = cfg.alpha * s;
      for (std::size_t j = 0; j < k; ++j) dlogits[j] += scale * p[j] * (logp[j] + h);
      return ce - scale * h;
    }

    case LossKind::kLs: {
      const double eps = cfg.ls_epsilon;
      const double uniform = eps / static_cast<double>(k);
      double loss = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double q = (j == label ? 1.0 - eps : 0.0) + uniform;
        loss -= q * logp[j];
        dlogits[j] = p[j] - q;
      }
      return loss;
    }

    case LossKind::kFocal: {
      const double gamma = cfg.focal_gamma;
      const double u = 1.0 - py;
      const double u_gamma = std::pow(u, gamma);
      // d/dp_y of -(1-p_y)^gamma ln p_y
      const double du = (gamma == 0.0 || u == 0.0) ? 0.0 : gamma * std::pow(u, gamma - 1.0) * logp[label];
      const double dloss_dpy = du - u_gamma / py;
      for (std::size_t j = 0; j < k; ++j) {
        const double dpy_dz = py * ((j == label ? 1.0 : 0.0) - p[j]);
        dlogits[j] = dloss_dpy * dpy_dz;
      }
      return u_gamma * ce;
    }

    case LossKind::kL1Norm: {
      double abs_sum = 0.0;
      const double coeff = cfg.l1_coeff / static_cast<double>(k);
      for (std::size_t j = 0; j < k; ++j) {
        abs_sum += std::abs(logits[j]);
        const double sign = logits[j] > 0.0 ? 1.0 : (logits[j] < 0.0 ? -1.0 : 0.0);
        dlogits[j] += coeff * sign;
      }
      return ce + cfg.l1_coeff * abs_sum / static_cast<double>(k);
    }

    case LossKind::kPoly1: {
      // d(1 - p_y)/dz_j = -p_y (delta_jy - p_j)
      const double eps = cfg.poly_epsilon;
      for (std::size_t j = 0; j < k; ++j) {
        dlogits[j] -= eps * py * ((j == label ? 1.0 : 0.0) - p[j]);
      }
      return ce + eps * (1.0 - py);
    }
  }
  throw ConfigError("unknown loss kind");
}

LossGrad loss_and_grad(const ClassifierModel& model, const EmbeddingDataset& ds,
                       std::span<const std::size_t> rows, std::span<const double> weights,
                       const LossConfig& cfg) {
  return batch_loss_grad(model, ds, rows, weights, cfg,
                         [](std::size_t n, std::span<double> out, const kernels::RowAccumulator& fn) {
                           return kernels::omp::reduce_rows(n, out, fn);
                         });
}

LossGrad loss_and_grad_serial(const ClassifierModel& model, const EmbeddingDataset& ds,
                              std::span<const std::size_t> rows, std::span<const double> weights,
                              const LossConfig& cfg) {
  return batch_loss_grad(model, ds, rows, weights, cfg,
                         [](std::size_t n, std::span<double> out, const kernels::RowAccumulator& fn) {
                           return kernels::serial::reduce_rows(n, out, fn);
                         });
}

RowMatrix softmax(const RowMatrix& logits) {
  RowMatrix probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      probs(i, j) = std::exp(logits(i, j) - top);
      sum += probs(i, j);
    }
    probs.row(i) /= sum;
  }
  return probs;
}

Predictions predict(const ClassifierModel& model, std::span<const float> features,
                    std::size_t dim) {
  if (dim != model.input_dim()) {
    throw ValidationError("feature width " + std::to_string(dim) + " != model input width " +
                          std::to_string(model.input_dim()));
  }
  if (features.size() % dim != 0) throw ValidationError("feature buffer is not a multiple of D");
  const std::size_t n = features.size() / dim;
  const std::size_t k = model.num_classes();
  Predictions out;
  out.logits.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto z = model.logits(features.subspan(static_cast<std::size_t>(i) * dim, dim));
    for (std::size_t j = 0; j < k; ++j) out.logits(i, static_cast<Eigen::Index>(j)) = z[j];
  }
  out.probs = softmax(out.logits);
  return out;
}

Predictions predict(const ClassifierModel& model, const EmbeddingDataset& ds) {
  return predict(model, ds.features(), ds.dim());
}

std::vector<double> entropy(const RowMatrix& probs) {
  std::vector<double> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double total = 0.0;
    double h = 0.0;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      const double p = probs(i, j);
      if (!(p >= 0.0)) {
        throw ValidationError("row " + std::to_string(i) + " has a negative or NaN probability");
      }
      total += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw ValidationError("row " + std::to_string(i) + " sums to " + std::to_string(total) +
                            ", not 1");
    }
    out[static_cast<std::size_t>(i)] = h;
  }
  return out;
}

TrainResult train(const EmbeddingDataset& ds, const DifficultyScores* scores,
                  const LossConfig& lcfg, const OptimConfig& ocfg,
                  const std::vector<std::size_t>& hidden, const EmbeddingDataset* validation) {
  lcfg.validate();
  ocfg.validate();
  const std::size_t n = ds.size();

  // Frozen per-sample weights aligned with dataset rows.
  std::vector<double> row_weight;
  if (lcfg.kind == LossKind::kDifficultyEr) {
    if (scores == nullptr) throw ConfigError("difficulty_er requires difficulty scores");
    std::unordered_map<std::uint64_t, double> by_id;
    by_id.reserve(scores->size());
    for (std::size_t i = 0; i < scores->size(); ++i) by_id.emplace(scores->ids[i], scores->weight[i]);
    row_weight.reserve(n);
    for (const auto id : ds.ids()) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw ValidationError("difficulty scores have no entry for sample id " + std::to_string(id));
      }
      row_weight.push_back(it->second);
    }
  }

  std::vector<std::size_t> sizes{ds.dim()};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(ds.num_classes());
  TrainResult result{ClassifierModel::initialize(sizes, ocfg.seed), {}};
  auto& model = result.model;
  const auto mask = model.decay_mask();
  std::vector<double> velocity(model.parameters().size(), 0.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng::Stream shuffle(ocfg.seed, kShuffleStream);
  std::vector<double> batch_weight;

  for (std::size_t epoch = 0; epoch < ocfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    const double lr = ocfg.lr.at(epoch);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < n; start += ocfg.batch_size) {
      const std::size_t end = std::min(n, start + ocfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      batch_weight.clear();
      for (const auto r : rows) {
        if (!row_weight.empty()) batch_weight.push_back(row_weight[r]);
      }
      auto lg = loss_and_grad(model, ds, rows, batch_weight, lcfg);
      loss_sum += lg.loss * static_cast<double>(rows.size());

      auto params = model.parameters();
      for (std::size_t j = 0; j < params.size(); ++j) {
        double g = lg.grad[j];
        if (mask[j]) g += ocfg.weight_decay * params[j];
        velocity[j] = ocfg.momentum * velocity[j] + g;
        params[j] -= lr * velocity[j];
      }
    }

    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.train_loss = loss_sum / static_cast<double>(n);
    entry.val_acc = std::numeric_limits<double>::quiet_NaN();
    entry.val_ece = std::numeric_limits<double>::quiet_NaN();
    if (validation != nullptr) {
      const auto pred = predict(model, *validation);
      entry.val_acc = accuracy(pred.probs, validation->labels());
      if (validation->size() >= kDefaultEceBins) {
        entry.val_ece = ece(pred.probs, validation->labels(), kDefaultEceBins, validation->ids()).ece;
      }
    }
    result.log.push_back(entry);
  }
  for (const double p : model.parameters()) {
    if (!std::isfinite(p)) {
      throw ValidationError("training diverged (non-finite parameters); lower the learning rate");
    }
  }
  return result;
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.bytes(kMagic);
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(model.layer_sizes().size()));
  for (const auto s : model.layer_sizes()) out.u32(static_cast<std::uint32_t>(s));
  for (const double p : model.parameters()) out.f64(p);
  detail::write_file(path, out.data());
}

ClassifierModel load_model(const std::filesystem::path& path) {
  detail::ByteReader in(detail::read_file(path));
  if (in.size() < 12) throw FormatError(path.string() + ": file too short for MDL1 header");
  if (in.bytes(4) != kMagic) throw FormatError(path.string() + ": bad magic, not an MDL1 file");
  const auto version = in.u32();
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported MDL1 version " + std::to_string(version));
  }
  const std::size_t count = in.u32();
  if (count < 2 || count > 64) throw FormatError(path.string() + ": implausible layer count");
  std::vector<std::size_t> sizes(count);
  for (auto& s : sizes) s = in.u32();
  check_sizes(sizes);
  const std::size_t params = layer_offsets(sizes).back();
  if (in.remaining() != params * 8) {
    throw CorruptionError(path.string() + ": expected " + std::to_string(params * 8) +
                          " parameter bytes, found " + std::to_string(in.remaining()));
  }
  std::vector<double> values(params);
  for (auto& v : values) v = in.f64();
  return ClassifierModel::from_parameters(std::move(sizes), std::move(values));
}

void save_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::string out = "epoch,train_loss,val_acc,val_ece\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_acc,
                  e.val_ece);
    out += buf;
  }
  detail::write_file(path, out);
}

}  // namespace difficalib
