#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace difficalib {

/// N embedding rows of width D with class labels in [0, K) and unique ids.
///
/// Immutable once constructed; the only way to obtain one is through
/// `create`, which enforces every invariant (finite features, labels < K,
/// unique ids, N >= 1, D >= 1, K >= 2).
class EmbeddingDataset {
 public:
  static EmbeddingDataset create(std::vector<float> features, std::vector<std::uint32_t> labels,
                                 std::vector<std::uint64_t> ids, std::uint32_t dim,
                                 std::uint32_t num_classes);

  std::size_t size() const { return labels_.size(); }
  std::uint32_t dim() const { return dim_; }
  std::uint32_t num_classes() const { return num_classes_; }

  std::span<const float> features() const { return features_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(features_).subspan(i * dim_, dim_);
  }
  std::span<const std::uint32_t> labels() const { return labels_; }
  std::span<const std::uint64_t> ids() const { return ids_; }

  /// Samples per class; zero entries mark empty classes.
  std::vector<std::size_t> class_counts() const;

  friend bool operator==(const EmbeddingDataset&, const EmbeddingDataset&) = default;

 private:
  EmbeddingDataset() = default;

  std::vector<float> features_;
  std::vector<std::uint32_t> labels_;
  std::vector<std::uint64_t> ids_;
  std::uint32_t dim_ = 0;
  std::uint32_t num_classes_ = 0;
};

/// Size in bytes of the fixed EMB1 header (magic, version, N, D, K).
inline constexpr std::size_t kEmb1HeaderBytes = 24;

EmbeddingDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path);

/// Parses rows of `id,label,f_0,...,f_{D-1}`. Blank lines are skipped.
EmbeddingDataset import_csv(const std::filesystem::path& path, std::uint32_t num_classes);
/// Writes the import_csv layout with 9 significant digits, enough to recover
/// every float32 exactly.
void export_csv(const EmbeddingDataset& ds, const std::filesystem::path& path);

/// Rows selected by index, in the given order.
EmbeddingDataset subset(const EmbeddingDataset& ds, std::span<const std::size_t> rows);

}  // namespace difficalib
