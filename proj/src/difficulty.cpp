#include "difficalib/difficulty.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "binary_io.hpp"
#include "difficalib/error.hpp"
#include "difficalib/kernels.hpp"

namespace difficalib {

namespace {

void check_weight_params(double temperature, double offset) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("temperature T must be finite and > 0");
  }
  if (!(offset > 0.0) || !std::isfinite(offset)) {
    throw ValidationError("offset c must be finite and > 0");
  }
}

std::vector<double> scale_scores(std::span<const double> raw, ScoreScaling scaling) {
  std::vector<double> out(raw.begin(), raw.end());
  if (scaling == ScoreScaling::kNone || out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double low = *lo;
  const double range = *hi - *lo;
  for (auto& v : out) v = range > 0.0 ? (v - low) / range : 0.0;
  return out;
}

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

// Rows of comma-separated fields; an optional first line whose first field is
// not a number is treated as a header and dropped.
std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(trim(std::string_view(line).substr(
          start, comma == std::string::npos ? std::string::npos : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      first = false;
      const auto& f = fields.front();
      if (!f.empty() && !std::isdigit(static_cast<unsigned char>(f.front()))) continue;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

template <typename T>
T parse_field(const std::string& field, std::size_t row, const char* what) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw ParseError("scores row " + std::to_string(row) + ": cannot parse " + what + " '" + field +
                     "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(Scorer s) {
  switch (s) {
    case Scorer::kRmd: return "rmd";
    case Scorer::kMd: return "md";
    case Scorer::kKmeans: return "kmeans";
    case Scorer::kImported: return "imported";
  }
  return "unknown";
}

Scorer parse_scorer(std::string_view name) {
  if (name == "rmd") return Scorer::kRmd;
  if (name == "md") return Scorer::kMd;
  if (name == "kmeans") return Scorer::kKmeans;
  if (name == "imported") return Scorer::kImported;
  throw ConfigError("unknown scorer '" + std::string(name) + "' (expected rmd, md, kmeans, imported)");
}

std::string_view to_string(ScoreScaling s) {
  return s == ScoreScaling::kNone ? "none" : "minmax";
}

ScoreScaling parse_scaling(std::string_view name) {
  if (name == "none") return ScoreScaling::kNone;
  if (name == "minmax") return ScoreScaling::kMinMax;
  throw ConfigError("unknown score scaling '" + std::string(name) + "' (expected none, minmax)");
}

double rmd_score(const GaussianBank& bank, std::span<const float> feature, std::size_t label) {
  return bank.mahalanobis_class(feature, label) - bank.mahalanobis_agnostic(feature);
}

double rmd_score(const GaussianBank& bank, std::span<const double> feature, std::size_t label) {
  return bank.mahalanobis_class(feature, label) - bank.mahalanobis_agnostic(feature);
}

std::vector<double> normalize_weights(std::span<const double> rmd, double temperature,
                                      double offset) {
  check_weight_params(temperature, offset);
  if (rmd.empty()) throw ValidationError("cannot normalize an empty score array");
  for (std::size_t i = 0; i < rmd.size(); ++i) {
    if (!std::isfinite(rmd[i])) {
      throw ValidationError("non-finite difficulty score at index " + std::to_string(i));
    }
  }
  const double top = *std::max_element(rmd.begin(), rmd.end());
  // exp(-top / T) may overflow to +inf for very negative maxima; the weights
  // then underflow to 0, which is the correct limit of the formula.
  const double denom = 1.0 + offset * std::exp(-top / temperature);
  std::vector<double> out(rmd.size());
  for (std::size_t i = 0; i < rmd.size(); ++i) {
    out[i] = std::exp((rmd[i] - top) / temperature) / denom;
  }
  return out;
}

std::vector<double> difficulty_weights(std::span<const double> raw, double temperature,
                                       double offset, ScoreScaling scaling) {
  return normalize_weights(scale_scores(raw, scaling), temperature, offset);
}

DifficultyScores score_dataset(const GaussianBank& bank, const EmbeddingDataset& ds,
                               const ScoreOptions& opts) {
  check_weight_params(opts.temperature, opts.offset);
  DifficultyScores out;
  out.scorer = opts.scorer;
  out.temperature = opts.temperature;
  out.offset = opts.offset;
  out.scaling = opts.scaling;
  out.ids.assign(ds.ids().begin(), ds.ids().end());
  out.rmd.assign(ds.size(), 0.0);

  switch (opts.scorer) {
    case Scorer::kRmd:
    case Scorer::kMd: {
      if (ds.dim() != bank.dim()) {
        throw ValidationError("dataset D = " + std::to_string(ds.dim()) + " but bank D = " +
                              std::to_string(bank.dim()));
      }
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels()[i] >= bank.num_classes()) {
          throw ValidationError("label " + std::to_string(ds.labels()[i]) + " at row " +
                                std::to_string(i) + " exceeds bank K = " +
                                std::to_string(bank.num_classes()));
        }
      }
      const bool relative = opts.scorer == Scorer::kRmd;
      kernels::omp::map_rows(ds.size(), out.rmd, [&](std::size_t i) {
        const auto x = ds.row(i);
        const double d_class = bank.mahalanobis_class(x, ds.labels()[i]);
        return relative ? d_class - bank.mahalanobis_agnostic(x) : d_class;
      });
      break;
    }
    case Scorer::kKmeans: {
      const std::size_t clusters = opts.kmeans_clusters == 0 ? ds.num_classes() : opts.kmeans_clusters;
      out.rmd = kmeans_difficulty(ds, clusters, opts.kmeans_iters, opts.kmeans_seed);
      break;
    }
    case Scorer::kImported:
      throw ConfigError("imported scores come from import_scores, not score_dataset");
  }
  out.weight = difficulty_weights(out.rmd, opts.temperature, opts.offset, opts.scaling);
  return out;
}

DifficultyScores average_scores(std::span<const DifficultyScores> runs) {
  if (runs.empty()) throw ValidationError("average_scores needs at least one run");
  const auto& first = runs.front();
  std::unordered_map<std::uint64_t, std::size_t> index;
  index.reserve(first.size());
  for (std::size_t i = 0; i < first.size(); ++i) index.emplace(first.ids[i], i);
  if (index.size() != first.size()) throw ValidationError("run 0 contains duplicate ids");

  // Running mean, so averaging identical runs returns them unchanged.
  std::vector<double> mean(first.rmd);
  for (std::size_t r = 1; r < runs.size(); ++r) {
    const auto& run = runs[r];
    if (run.temperature != first.temperature || run.offset != first.offset ||
        run.scaling != first.scaling) {
      throw ValidationError("run " + std::to_string(r) + " uses different T, c or scaling than run 0");
    }
    if (run.size() != first.size()) {
      throw ValidationError("run " + std::to_string(r) + " has " + std::to_string(run.size()) +
                            " ids, run 0 has " + std::to_string(first.size()));
    }
    std::vector<bool> seen(first.size(), false);
    for (std::size_t i = 0; i < run.size(); ++i) {
      const auto it = index.find(run.ids[i]);
      if (it == index.end() || seen[it->second]) {
        throw ValidationError("run " + std::to_string(r) + ": id " + std::to_string(run.ids[i]) +
                              " does not match run 0's id set");
      }
      seen[it->second] = true;
      mean[it->second] += (run.rmd[i] - mean[it->second]) / static_cast<double>(r + 1);
    }
  }

  DifficultyScores out;
  out.ids = first.ids;
  out.scorer = first.scorer;
  out.temperature = first.temperature;
  out.offset = first.offset;
  out.scaling = first.scaling;
  out.rmd = std::move(mean);
  out.weight = difficulty_weights(out.rmd, out.temperature, out.offset, out.scaling);
  return out;
}

DifficultyScores import_scores(const std::filesystem::path& path, const EmbeddingDataset& ds,
                               double temperature, double offset, ScoreScaling scaling) {
  check_weight_params(temperature, offset);
  const auto rows = read_csv_rows(path);

  std::unordered_map<std::uint64_t, double> by_id;
  by_id.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() < 2) {
      throw FormatError("scores row " + std::to_string(r + 1) + ": expected id,score");
    }
    const auto id = parse_field<std::uint64_t>(f[0], r + 1, "id");
    const auto score = parse_field<double>(f[1], r + 1, "score");
    if (!std::isfinite(score)) {
      throw ValidationError("scores row " + std::to_string(r + 1) + ": non-finite score");
    }
    if (!by_id.emplace(id, score).second) {
      throw ValidationError("scores file lists id " + std::to_string(id) + " twice");
    }
  }

  DifficultyScores out;
  out.scorer = Scorer::kImported;
  out.temperature = temperature;
  out.offset = offset;
  out.scaling = scaling;
  out.ids.assign(ds.ids().begin(), ds.ids().end());
  out.rmd.reserve(ds.size());
  for (const auto id : ds.ids()) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw ValidationError("scores file is missing dataset id " + std::to_string(id));
    }
    out.rmd.push_back(it->second);
  }
  if (by_id.size() != ds.size()) {
    const std::unordered_set<std::uint64_t> known(ds.ids().begin(), ds.ids().end());
    for (const auto& row : rows) {
      const auto id = parse_field<std::uint64_t>(row[0], 0, "id");
      if (!known.contains(id)) {
        throw ValidationError("scores file has id " + std::to_string(id) + " not in the dataset");
      }
    }
  }
  out.weight = difficulty_weights(out.rmd, temperature, offset, scaling);
  return out;
}

void save_scores(const DifficultyScores& scores, const std::filesystem::path& path) {
  std::string out = "id,rmd,weight\n";
  char buf[96];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g\n",
                  static_cast<unsigned long long>(scores.ids[i]), scores.rmd[i], scores.weight[i]);
    out += buf;
  }
  detail::write_file(path, out);
}

DifficultyScores load_scores(const std::filesystem::path& path) {
  const auto rows = read_csv_rows(path);
  DifficultyScores out;
  out.scorer = Scorer::kImported;
  out.temperature = 0.0;
  out.offset = 0.0;
  std::unordered_set<std::uint64_t> seen;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 3) {
      throw FormatError("scores row " + std::to_string(r + 1) + ": expected id,rmd,weight");
    }
    const auto id = parse_field<std::uint64_t>(f[0], r + 1, "id");
    if (!seen.insert(id).second) {
      throw ValidationError("scores file lists id " + std::to_string(id) + " twice");
    }
    const auto w = parse_field<double>(f[2], r + 1, "weight");
    if (!(w >= 0.0 && w < 1.0)) {
      throw ValidationError("scores row " + std::to_string(r + 1) + ": weight outside [0, 1)");
    }
    out.ids.push_back(id);
    out.rmd.push_back(parse_field<double>(f[1], r + 1, "rmd"));
    out.weight.push_back(w);
  }
  if (out.ids.empty()) throw ValidationError(path.string() + ": no scores");
  return out;
}

std::vector<ClassRanking> rank_report(const DifficultyScores& scores, const EmbeddingDataset& ds,
                                      std::size_t top_k) {
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  if (scores.size() != ds.size() ||
      !std::equal(scores.ids.begin(), scores.ids.end(), ds.ids().begin())) {
    throw ValidationError("scores are not aligned with the dataset ids");
  }
  std::vector<std::vector<std::size_t>> members(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) members[ds.labels()[i]].push_back(i);

  std::vector<ClassRanking> out;
  out.reserve(ds.num_classes());
  for (std::uint32_t k = 0; k < ds.num_classes(); ++k) {
    auto rows = members[k];
    const auto by_id = [&](std::size_t a, std::size_t b) { return ds.ids()[a] < ds.ids()[b]; };
    ClassRanking ranking;
    ranking.label = k;
    const std::size_t take = std::min(top_k, rows.size());

    std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      if (scores.rmd[a] != scores.rmd[b]) return scores.rmd[a] > scores.rmd[b];
      return by_id(a, b);
    });
    for (std::size_t i = 0; i < take; ++i) ranking.hardest.push_back(ds.ids()[rows[i]]);

    std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      if (scores.rmd[a] != scores.rmd[b]) return scores.rmd[a] < scores.rmd[b];
      return by_id(a, b);
    });
    for (std::size_t i = 0; i < take; ++i) ranking.easiest.push_back(ds.ids()[rows[i]]);
    out.push_back(std::move(ranking));
  }
  return out;
}

DifficultyScores align_scores(const DifficultyScores& scores, const EmbeddingDataset& ds) {
  std::unordered_map<std::uint64_t, std::size_t> index;
  index.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) index.emplace(scores.ids[i], i);
  if (scores.size() != ds.size() || index.size() != scores.size()) {
    throw ValidationError("scores cover " + std::to_string(scores.size()) + " ids but the dataset has " +
                          std::to_string(ds.size()) + " samples");
  }
  DifficultyScores out = scores;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto it = index.find(ds.ids()[i]);
    if (it == index.end()) {
      throw ValidationError("scores have no entry for dataset id " + std::to_string(ds.ids()[i]));
    }
    out.ids[i] = scores.ids[it->second];
    out.rmd[i] = scores.rmd[it->second];
    out.weight[i] = scores.weight[it->second];
  }
  return out;
}

}  // namespace difficalib
