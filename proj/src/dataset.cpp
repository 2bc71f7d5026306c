#include "difficalib/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>

#include "binary_io.hpp"
#include "difficalib/error.hpp"

namespace difficalib {

namespace detail {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return data;
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

namespace {

constexpr std::string_view kMagic = "EMB1";
constexpr std::uint32_t kVersion = 1;

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                    : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    fields.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, std::size_t row, const char* what) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw ParseError("row " + std::to_string(row) + ": cannot parse " + what + " '" +
                     std::string(field) + "'");
  }
  return value;
}

}  // namespace

EmbeddingDataset EmbeddingDataset::create(std::vector<float> features,
                                          std::vector<std::uint32_t> labels,
                                          std::vector<std::uint64_t> ids, std::uint32_t dim,
                                          std::uint32_t num_classes) {
  const std::size_t n = labels.size();
  if (n == 0) throw ValidationError("dataset must contain at least one sample");
  if (dim == 0) throw ValidationError("feature width D must be >= 1");
  if (num_classes < 2) throw ValidationError("class count K must be >= 2");
  if (ids.size() != n) {
    throw ValidationError("ids length " + std::to_string(ids.size()) + " != labels length " +
                          std::to_string(n));
  }
  if (features.size() != n * dim) {
    throw ValidationError("features length " + std::to_string(features.size()) + " != N*D = " +
                          std::to_string(n * dim));
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!std::isfinite(features[i])) {
      throw ValidationError("non-finite feature at row " + std::to_string(i / dim) + ", column " +
                            std::to_string(i % dim));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= num_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " is not < K = " + std::to_string(num_classes));
    }
  }
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(n);
  for (const auto id : ids) {
    if (!seen.insert(id).second) throw ValidationError("duplicate sample id " + std::to_string(id));
  }

  EmbeddingDataset ds;
  ds.features_ = std::move(features);
  ds.labels_ = std::move(labels);
  ds.ids_ = std::move(ids);
  ds.dim_ = dim;
  ds.num_classes_ = num_classes;
  return ds;
}

std::vector<std::size_t> EmbeddingDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes_, 0);
  for (const auto y : labels_) ++counts[y];
  return counts;
}

EmbeddingDataset load_dataset(const std::filesystem::path& path) {
  detail::ByteReader in(detail::read_file(path));
  if (in.size() < kEmb1HeaderBytes) {
    throw FormatError(path.string() + ": file too short for EMB1 header (" +
                      std::to_string(in.size()) + " bytes)");
  }
  if (in.bytes(4) != kMagic) throw FormatError(path.string() + ": bad magic, not an EMB1 file");
  const auto version = in.u32();
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported EMB1 version " + std::to_string(version));
  }
  const std::uint64_t n = in.u64();
  const std::uint32_t dim = in.u32();
  const std::uint32_t k = in.u32();

  // Guard the multiplication before trusting the header.
  const unsigned __int128 expected = static_cast<unsigned __int128>(n) * dim * 4 +
                                     static_cast<unsigned __int128>(n) * (4 + 8) +
                                     kEmb1HeaderBytes;
  if (expected != in.size()) {
    const auto shown = expected > static_cast<unsigned __int128>(UINT64_MAX)
                           ? std::string("> 2^64")
                           : std::to_string(static_cast<std::uint64_t>(expected));
    throw CorruptionError(path.string() + ": expected " + shown + " bytes from header, found " +
                          std::to_string(in.size()));
  }

  std::vector<float> features(n * dim);
  for (auto& f : features) f = in.f32();
  std::vector<std::uint32_t> labels(n);
  for (auto& y : labels) y = in.u32();
  std::vector<std::uint64_t> ids(n);
  for (auto& id : ids) id = in.u64();
  return EmbeddingDataset::create(std::move(features), std::move(labels), std::move(ids), dim, k);
}

void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.bytes(kMagic);
  out.u32(kVersion);
  out.u64(ds.size());
  out.u32(ds.dim());
  out.u32(ds.num_classes());
  for (const float f : ds.features()) out.f32(f);
  for (const auto y : ds.labels()) out.u32(y);
  for (const auto id : ds.ids()) out.u64(id);
  detail::write_file(path, out.data());
}

EmbeddingDataset import_csv(const std::filesystem::path& path, std::uint32_t num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");

  std::vector<float> features;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint64_t> ids;
  std::size_t dim = 0;
  std::size_t row = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() < 3) {
      throw FormatError("row " + std::to_string(row) + ": expected id,label and at least one feature");
    }
    const std::size_t width = fields.size() - 2;
    if (dim == 0) {
      dim = width;
    } else if (width != dim) {
      throw FormatError("row " + std::to_string(row) + ": has " + std::to_string(width) +
                        " features, expected " + std::to_string(dim));
    }
    ids.push_back(parse_number<std::uint64_t>(fields[0], row, "id"));
    labels.push_back(parse_number<std::uint32_t>(fields[1], row, "label"));
    for (std::size_t j = 0; j < width; ++j) {
      features.push_back(parse_number<float>(fields[j + 2], row, "feature"));
    }
  }
  return EmbeddingDataset::create(std::move(features), std::move(labels), std::move(ids),
                                  static_cast<std::uint32_t>(dim), num_classes);
}

void export_csv(const EmbeddingDataset& ds, const std::filesystem::path& path) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += std::to_string(ds.ids()[i]);
    out += ',';
    out += std::to_string(ds.labels()[i]);
    for (const float f : ds.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(f));
      out += buf;
    }
    out += '\n';
  }
  detail::write_file(path, out);
}

EmbeddingDataset subset(const EmbeddingDataset& ds, std::span<const std::size_t> rows) {
  std::vector<float> features;
  features.reserve(rows.size() * ds.dim());
  std::vector<std::uint32_t> labels;
  std::vector<std::uint64_t> ids;
  for (const auto r : rows) {
    if (r >= ds.size()) throw IndexError("row " + std::to_string(r) + " out of range");
    const auto f = ds.row(r);
    features.insert(features.end(), f.begin(), f.end());
    labels.push_back(ds.labels()[r]);
    ids.push_back(ds.ids()[r]);
  }
  return EmbeddingDataset::create(std::move(features), std::move(labels), std::move(ids), ds.dim(),
                                  ds.num_classes());
}

}  // namespace difficalib
