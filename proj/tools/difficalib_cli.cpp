// difficalib: command-line front end over the library.
//
// Every subcommand prints one JSON line summarizing what it did, including
// every default it used. Library errors exit 1, usage errors exit 2.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "difficalib/difficalib.hpp"

namespace dc = difficalib;
using nlohmann::json;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dc::IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw dc::IoError("failed writing " + path);
}

void emit(const json& summary) { std::cout << summary.dump() << '\n'; }

// ---------------------------------------------------------------------------

struct SynthArgs {
  dc::MixtureSpec spec = dc::canonical_mixture();
  double label_noise = 0.0;
  double feature_noise = 0.0;
  std::uint64_t noise_seed = 0;
  std::string out;
};

void run_synth(const SynthArgs& a) {
  auto ds = dc::generate_mixture(a.spec);
  if (a.label_noise > 0.0) ds = dc::inject_label_noise(ds, a.label_noise, a.noise_seed);
  if (a.feature_noise > 0.0) ds = dc::inject_feature_noise(ds, a.feature_noise, a.noise_seed);
  dc::save_dataset(ds, a.out);
  json spec{{"classes", a.spec.num_classes}, {"dim", a.spec.dim},
            {"per_class", a.spec.samples_per_class}, {"separation", a.spec.separation},
            {"seed", a.spec.seed}, {"id_offset", a.spec.id_offset},
            {"label_noise", a.label_noise}, {"feature_noise", a.feature_noise},
            {"noise_seed", a.noise_seed}};
  write_text(a.out + ".json", spec.dump(2) + "\n");
  emit({{"command", "synth"}, {"out", a.out}, {"samples", ds.size()}, {"spec", spec}});
}

struct ImportArgs {
  std::string csv;
  std::uint32_t classes = 0;
  std::string out;
};

void run_import(const ImportArgs& a) {
  const auto ds = dc::import_csv(a.csv, a.classes);
  dc::save_dataset(ds, a.out);
  emit({{"command", "import-csv"}, {"out", a.out}, {"samples", ds.size()}, {"dim", ds.dim()},
        {"classes", ds.num_classes()}});
}

struct FitArgs {
  std::string data;
  double shrinkage = dc::kDefaultShrinkage;
  std::string out;
};

void run_fit(const FitArgs& a) {
  const auto ds = dc::load_dataset(a.data);
  const auto bank = dc::fit_gaussian_bank(ds, a.shrinkage);
  dc::save_bank(bank, a.out);
  emit({{"command", "fit"}, {"out", a.out}, {"classes", bank.num_classes()}, {"dim", bank.dim()},
        {"shrinkage", a.shrinkage}});
}

struct ScoreArgs {
  std::string data;
  std::vector<std::string> banks;
  std::string scorer = "rmd";
  std::string import_path;
  double temperature = dc::kDefaultTemperature;
  double offset = dc::kDefaultOffset;
  std::string scaling = "minmax";
  std::size_t kmeans_clusters = 0;
  std::size_t kmeans_iters = 50;
  std::uint64_t seed = 0;
  std::string out;
};

void run_score(const ScoreArgs& a) {
  const auto ds = dc::load_dataset(a.data);
  const auto scorer = dc::parse_scorer(a.scorer);
  const auto scaling = dc::parse_scaling(a.scaling);
  dc::DifficultyScores scores;
  if (scorer == dc::Scorer::kImported) {
    if (a.import_path.empty()) throw dc::ConfigError("scorer imported requires --import");
    scores = dc::import_scores(a.import_path, ds, a.temperature, a.offset, scaling);
  } else {
    dc::ScoreOptions opts;
    opts.scorer = scorer;
    opts.temperature = a.temperature;
    opts.offset = a.offset;
    opts.scaling = scaling;
    opts.kmeans_clusters = a.kmeans_clusters;
    opts.kmeans_iters = a.kmeans_iters;
    opts.kmeans_seed = a.seed;
    if (scorer == dc::Scorer::kKmeans) {
      // The k-means scorer does not use a bank; a throwaway fit keeps one code path.
      scores = dc::score_dataset(dc::fit_gaussian_bank(ds), ds, opts);
    } else {
      if (a.banks.empty()) throw dc::ConfigError("scorer " + a.scorer + " requires --bank");
      std::vector<dc::DifficultyScores> runs;
      for (const auto& path : a.banks) runs.push_back(dc::score_dataset(dc::load_bank(path), ds, opts));
      scores = runs.size() == 1 ? std::move(runs.front()) : dc::average_scores(runs);
    }
  }
  dc::save_scores(scores, a.out);
  emit({{"command", "score"}, {"out", a.out}, {"scorer", dc::to_string(scores.scorer)},
        {"banks", a.banks.size()}, {"T", a.temperature}, {"c", a.offset},
        {"scaling", dc::to_string(scaling)}, {"samples", scores.size()}});
}

struct RankArgs {
  std::string data;
  std::string scores;
  std::size_t top_k = 10;
  std::string out;
};

void run_rank(const RankArgs& a) {
  const auto ds = dc::load_dataset(a.data);
  const auto report = dc::rank_report(dc::load_scores(a.scores), ds, a.top_k);
  json classes = json::array();
  for (const auto& r : report) {
    classes.push_back({{"label", r.label}, {"hardest", r.hardest}, {"easiest", r.easiest}});
  }
  write_text(a.out, json{{"top_k", a.top_k}, {"classes", classes}}.dump(2) + "\n");
  emit({{"command", "rank"}, {"out", a.out}, {"top_k", a.top_k}, {"classes", report.size()}});
}

struct TrainArgs {
  std::string data;
  std::string scores;
  std::string validation;
  std::string loss = "ce";
  double alpha = -1.0;  // negative: pick by class count
  dc::LossConfig lcfg;
  dc::OptimConfig ocfg;
  std::vector<std::size_t> hidden;
  std::string log;
  std::string out;
};

void run_train(TrainArgs a) {
  a.lcfg.kind = dc::parse_loss_kind(a.loss);
  if (a.lcfg.kind == dc::LossKind::kDifficultyEr && a.scores.empty()) {
    throw dc::ConfigError("difficulty_er requires --scores");
  }
  const auto ds = dc::load_dataset(a.data);
  a.lcfg.alpha = a.alpha < 0.0 ? dc::default_alpha(ds.num_classes()) : a.alpha;
  std::optional<dc::DifficultyScores> scores;
  if (!a.scores.empty()) scores = dc::load_scores(a.scores);
  std::optional<dc::EmbeddingDataset> val;
  if (!a.validation.empty()) val = dc::load_dataset(a.validation);
  const auto result = dc::train(ds, scores ? &*scores : nullptr, a.lcfg, a.ocfg, a.hidden,
                                val ? &*val : nullptr);
  dc::save_model(result.model, a.out);
  if (!a.log.empty()) dc::save_training_log(result.log, a.log);
  const dc::EpochLog last = result.log.empty() ? dc::EpochLog{0, NAN, NAN, NAN} : result.log.back();
  const auto or_null = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  emit({{"command", "train"},
        {"out", a.out},
        {"loss", dc::to_string(a.lcfg.kind)},
        {"alpha", a.lcfg.alpha},
        {"ls_epsilon", a.lcfg.ls_epsilon},
        {"focal_gamma", a.lcfg.focal_gamma},
        {"l1_coeff", a.lcfg.l1_coeff},
        {"poly_epsilon", a.lcfg.poly_epsilon},
        {"lr", a.ocfg.lr.initial},
        {"lr_decay_epochs", a.ocfg.lr.decay_epochs},
        {"lr_decay_factor", a.ocfg.lr.decay_factor},
        {"momentum", a.ocfg.momentum},
        {"weight_decay", a.ocfg.weight_decay},
        {"batch_size", a.ocfg.batch_size},
        {"epochs", a.ocfg.epochs},
        {"hidden", a.hidden},
        {"seed", a.ocfg.seed},
        {"final_train_loss", or_null(last.train_loss)},
        {"val_acc", or_null(last.val_acc)},
        {"val_ece", or_null(last.val_ece)}});
}

struct EvalArgs {
  std::string data;
  std::vector<std::string> models;
  std::size_t bins = dc::kDefaultEceBins;
  std::string rejection_score = "entropy";
  bool csv = false;
  std::string reliability;
  std::string out;
};

dc::EvalReport evaluate_model(const std::string& model_path, const dc::EmbeddingDataset& ds,
                              const EvalArgs& a) {
  const auto model = dc::load_model(model_path);
  dc::EvalOptions opts;
  opts.bins = a.bins;
  opts.rejection_score = dc::parse_uncertainty(a.rejection_score);
  return dc::evaluate_logits(dc::predict(model, ds).logits, ds.labels(), ds.ids(), opts);
}

void run_eval(const EvalArgs& a) {
  const auto ds = dc::load_dataset(a.data);
  if (a.models.size() == 1) {
    const auto report = evaluate_model(a.models.front(), ds, a);
    write_text(a.out, a.csv ? dc::report_csv(report) : dc::to_json(report).dump(2) + "\n");
    if (!a.reliability.empty()) write_text(a.reliability, dc::reliability_csv(report.bins));
    emit({{"command", "eval"}, {"out", a.out}, {"model", a.models.front()},
          {"accuracy", report.accuracy}, {"ece", report.ece}, {"nll", report.nll},
          {"bins", a.bins}, {"rejection_score", a.rejection_score}});
    return;
  }
  // Compare mode: one row per model file.
  std::string table = "model,acc,ece,nll\n";
  json rows = json::array();
  for (const auto& path : a.models) {
    const auto report = evaluate_model(path, ds, a);
    char line[512];
    std::snprintf(line, sizeof line, "%s,%.2f,%.2f,%.4f\n", path.c_str(), 100.0 * report.accuracy,
                  100.0 * report.ece, report.nll);
    table += line;
    rows.push_back({{"model", path}, {"accuracy", report.accuracy}, {"ece", report.ece}});
  }
  write_text(a.out, table);
  emit({{"command", "eval"}, {"mode", "compare"}, {"out", a.out}, {"bins", a.bins}, {"models", rows}});
}

struct SelectiveArgs {
  std::string data;
  std::string model;
  std::string score = "entropy";
  std::vector<double> grid;
  std::string out;
};

void run_selective(const SelectiveArgs& a) {
  const auto ds = dc::load_dataset(a.data);
  const auto pred = dc::predict(dc::load_model(a.model), ds);
  const auto unc = dc::uncertainty_scores(pred.logits).get(dc::parse_uncertainty(a.score));
  const auto grid = a.grid.empty() ? dc::default_rejection_grid() : a.grid;
  const auto points = dc::risk_coverage(pred.probs, ds.labels(), unc, grid, ds.ids());
  write_text(a.out, dc::risk_coverage_csv(points));
  emit({{"command", "selective"}, {"out", a.out}, {"score", a.score}, {"points", points.size()}});
}

struct OodArgs {
  std::string in_data;
  std::string ood_data;
  std::string model;
  std::string out;
};

void run_ood(const OodArgs& a) {
  const auto model = dc::load_model(a.model);
  const auto in = dc::predict(model, dc::load_dataset(a.in_data)).logits;
  const auto ood = dc::predict(model, dc::load_dataset(a.ood_data)).logits;
  const auto block = dc::ood_detection(in, ood);
  write_text(a.out, dc::to_json(block).dump(2) + "\n");
  emit({{"command", "ood"}, {"out", a.out}, {"metrics", dc::to_json(block)}});
}

struct HoldOutArgs {
  std::string data;
  std::uint32_t ood_class = 0;
  std::string in_out;
  std::string ood_out;
};

void run_hold_out(const HoldOutArgs& a) {
  const auto split = dc::hold_out_class(dc::load_dataset(a.data), a.ood_class);
  dc::save_dataset(split.in_distribution, a.in_out);
  dc::save_dataset(split.ood, a.ood_out);
  emit({{"command", "hold-out"}, {"ood_class", a.ood_class}, {"in", a.in_out},
        {"ood", a.ood_out}, {"in_samples", split.in_distribution.size()},
        {"ood_samples", split.ood.size()}});
}

struct BucketArgs {
  std::string data;
  std::string model;
  std::string scores;
  std::size_t bucket_size = 500;
  std::string out;
};

void run_bucket(const BucketArgs& a) {
  const auto ds = dc::load_dataset(a.data);
  const auto preds = dc::argmax_rows(dc::predict(dc::load_model(a.model), ds).logits);
  const auto scores = dc::align_scores(dc::load_scores(a.scores), ds);
  const auto buckets = dc::bucket_error(scores, preds, ds.labels(), a.bucket_size);
  write_text(a.out, dc::bucket_error_csv(buckets));
  emit({{"command", "bucket-error"}, {"out", a.out}, {"bucket_size", a.bucket_size},
        {"buckets", buckets.size()}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Difficulty-aware calibration toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "difficalib 0.1.0");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a Gaussian-mixture dataset (EMB1)");
  s->add_option("--classes", synth.spec.num_classes, "number of classes")->capture_default_str();
  s->add_option("--dim", synth.spec.dim, "feature width")->capture_default_str();
  s->add_option("--per-class", synth.spec.samples_per_class)->capture_default_str();
  s->add_option("--separation", synth.spec.separation)->capture_default_str();
  s->add_option("--seed", synth.spec.seed)->capture_default_str();
  s->add_option("--id-offset", synth.spec.id_offset, "first sample id")->capture_default_str();
  s->add_option("--label-noise", synth.label_noise, "fraction of labels to flip")->capture_default_str();
  s->add_option("--feature-noise", synth.feature_noise, "stddev of added noise")->capture_default_str();
  s->add_option("--noise-seed", synth.noise_seed)->capture_default_str();
  s->add_option("--out", synth.out)->required();
  s->callback([&] { run_synth(synth); });

  ImportArgs import;
  auto* im = app.add_subcommand("import-csv", "Convert id,label,features... CSV to EMB1");
  im->add_option("--csv", import.csv)->required()->check(CLI::ExistingFile);
  im->add_option("--classes", import.classes)->required();
  im->add_option("--out", import.out)->required();
  im->callback([&] { run_import(import); });

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit class-conditional Gaussians (GBK1)");
  f->add_option("--data", fit.data)->required()->check(CLI::ExistingFile);
  f->add_option("--shrinkage", fit.shrinkage)->capture_default_str();
  f->add_option("--out", fit.out)->required();
  f->callback([&] { run_fit(fit); });

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "Score per-sample difficulty");
  sc->add_option("--data", score.data)->required()->check(CLI::ExistingFile);
  sc->add_option("--bank", score.banks, "repeat to average over several fits")->check(CLI::ExistingFile);
  sc->add_option("--scorer", score.scorer, "rmd, md, kmeans or imported")->capture_default_str();
  sc->add_option("--import", score.import_path, "id,score CSV for --scorer imported")
      ->check(CLI::ExistingFile);
  sc->add_option("--T", score.temperature)->capture_default_str();
  sc->add_option("--c", score.offset)->capture_default_str();
  sc->add_option("--scaling", score.scaling, "minmax or none")->capture_default_str();
  sc->add_option("--clusters", score.kmeans_clusters, "k-means clusters (0 = classes)")->capture_default_str();
  sc->add_option("--kmeans-iters", score.kmeans_iters)->capture_default_str();
  sc->add_option("--seed", score.seed)->capture_default_str();
  sc->add_option("--out", score.out)->required();
  sc->callback([&] { run_score(score); });

  RankArgs rank;
  auto* r = app.add_subcommand("rank", "Per-class hardest and easiest ids");
  r->add_option("--data", rank.data)->required()->check(CLI::ExistingFile);
  r->add_option("--scores", rank.scores)->required()->check(CLI::ExistingFile);
  r->add_option("--top-k", rank.top_k)->capture_default_str();
  r->add_option("--out", rank.out)->required();
  r->callback([&] { run_rank(rank); });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a softmax head (MDL1)");
  t->add_option("--data", tr.data)->required()->check(CLI::ExistingFile);
  t->add_option("--scores", tr.scores)->check(CLI::ExistingFile);
  t->add_option("--val", tr.validation)->check(CLI::ExistingFile);
  t->add_option("--loss", tr.loss, "ce, ls, focal, l1norm, er_const, poly1, difficulty_er")
      ->capture_default_str();
  t->add_option("--alpha", tr.alpha, "entropy weight (default 0.3 for <= 100 classes, else 0.2)");
  t->add_option("--ls-epsilon", tr.lcfg.ls_epsilon)->capture_default_str();
  t->add_option("--focal-gamma", tr.lcfg.focal_gamma)->capture_default_str();
  t->add_option("--l1-coeff", tr.lcfg.l1_coeff)->capture_default_str();
  t->add_option("--poly-epsilon", tr.lcfg.poly_epsilon)->capture_default_str();
  t->add_option("--lr", tr.ocfg.lr.initial)->capture_default_str();
  t->add_option("--lr-decay-epochs", tr.ocfg.lr.decay_epochs)->delimiter(',');
  t->add_option("--lr-decay-factor", tr.ocfg.lr.decay_factor)->capture_default_str();
  t->add_option("--momentum", tr.ocfg.momentum)->capture_default_str();
  t->add_option("--weight-decay", tr.ocfg.weight_decay)->capture_default_str();
  t->add_option("--batch-size", tr.ocfg.batch_size)->capture_default_str();
  t->add_option("--epochs", tr.ocfg.epochs)->capture_default_str();
  t->add_option("--hidden", tr.hidden, "hidden widths, e.g. 64 or 128,128")->delimiter(',');
  t->add_option("--seed", tr.ocfg.seed)->capture_default_str();
  t->add_option("--log", tr.log, "per-epoch CSV");
  t->add_option("--out", tr.out)->required();
  t->callback([&] { run_train(tr); });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Accuracy, ECE, NLL, detection and risk-coverage");
  e->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
  e->add_option("--model", ev.models, "repeat to emit a comparison table")->required()->check(CLI::ExistingFile);
  e->add_option("--bins", ev.bins)->capture_default_str();
  e->add_option("--rejection-score", ev.rejection_score, "msp, entropy or maxlogit")->capture_default_str();
  e->add_flag("--csv", ev.csv, "flat metric,value rows instead of JSON");
  e->add_option("--reliability", ev.reliability, "reliability-diagram CSV");
  e->add_option("--out", ev.out)->required();
  e->callback([&] { run_eval(ev); });

  SelectiveArgs sel;
  auto* se = app.add_subcommand("selective", "Risk-coverage curve");
  se->add_option("--data", sel.data)->required()->check(CLI::ExistingFile);
  se->add_option("--model", sel.model)->required()->check(CLI::ExistingFile);
  se->add_option("--score", sel.score, "msp, entropy or maxlogit")->capture_default_str();
  se->add_option("--grid", sel.grid, "rejection rates (default 0, 0.05, ..., 0.95)")->delimiter(',');
  se->add_option("--out", sel.out)->required();
  se->callback([&] { run_selective(sel); });

  OodArgs ood;
  auto* o = app.add_subcommand("ood", "OOD detection metrics");
  o->add_option("--in", ood.in_data)->required()->check(CLI::ExistingFile);
  o->add_option("--ood", ood.ood_data)->required()->check(CLI::ExistingFile);
  o->add_option("--model", ood.model)->required()->check(CLI::ExistingFile);
  o->add_option("--out", ood.out)->required();
  o->callback([&] { run_ood(ood); });

  HoldOutArgs hold;
  auto* h = app.add_subcommand("hold-out", "Split one class off as an OOD set");
  h->add_option("--data", hold.data)->required()->check(CLI::ExistingFile);
  h->add_option("--ood-class", hold.ood_class)->required();
  h->add_option("--in-out", hold.in_out)->required();
  h->add_option("--ood-out", hold.ood_out)->required();
  h->callback([&] { run_hold_out(hold); });

  BucketArgs bucket;
  auto* b = app.add_subcommand("bucket-error", "Error rate per difficulty bucket");
  b->add_option("--data", bucket.data)->required()->check(CLI::ExistingFile);
  b->add_option("--model", bucket.model)->required()->check(CLI::ExistingFile);
  b->add_option("--scores", bucket.scores)->required()->check(CLI::ExistingFile);
  b->add_option("--bucket-size", bucket.bucket_size)->capture_default_str();
  b->add_option("--out", bucket.out)->required();
  b->callback([&] { run_bucket(bucket); });

  try {
    dc::apply_thread_cap_from_env();
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  } catch (const dc::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
