#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "wsseg/data/groups.hpp"
#include "wsseg/data/io.hpp"
#include "wsseg/data/preprocess.hpp"
#include "wsseg/data/synth.hpp"
#include "wsseg/eval/metrics.hpp"
#include "wsseg/eval/plots.hpp"
#include "wsseg/model/checkpoint.hpp"
#include "wsseg/training/curriculum.hpp"
#include "wsseg/training/run_io.hpp"

namespace wsseg::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr const char* kPretrainedEnv = "WSSEG_PRETRAINED_WEIGHTS";

/// Bad invocation or configuration; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flags shared by every command; unset optionals leave the config file value alone.
struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::optional<long long> seed;
  int jobs = 1;
  bool force = false;
  std::vector<std::string> sets;  // raw key=value overrides
  std::optional<std::string> n_fs;
  std::optional<int> k;
  std::optional<int> group;  // percent: 1, 5 or 10
  std::optional<std::string> order;
  bool no_cls_pretrain = false;
  std::optional<std::string> backbone;
  std::optional<std::string> pretrained;
  std::string log_level = "info";
  // command specific
  std::string input;
  int patients = 10;
  int folds = 5;
  std::string values;
  std::string init;
  std::string checkpoint;
  std::string fs_checkpoint;
  std::string mil_checkpoint;
  std::string run;
  std::string split = "test";
  std::string metrics;
  int limit = 0;
};

/// defaults < config file < environment (pretrained weights only) < flags.
inline KeyValueConfig resolve_config(const Options& o) {
  KeyValueConfig kv;
  if (!o.config.empty()) kv = KeyValueConfig::load(o.config);
  if (const char* env = std::getenv(kPretrainedEnv); env && *env) kv.set("pretrained_weights", env);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    kv.merge(KeyValueConfig::parse(s, "--set"));
  }
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  if (o.n_fs) kv.set("n_fs", *o.n_fs);
  if (o.k) kv.set("k", std::to_string(*o.k));
  if (o.group) {
    if (*o.group != 1 && *o.group != 5 && *o.group != 10) throw UsageError("--group must be 1, 5 or 10");
    kv.set("group_threshold", format_double(*o.group / 100.0));
  }
  if (o.order) kv.set("order", *o.order);
  if (o.no_cls_pretrain) kv.set("use_cls_pretrain", "false");
  if (o.backbone) kv.set("backbone", *o.backbone);
  if (o.pretrained) kv.set("pretrained_weights", *o.pretrained);
  if (!o.data.empty()) kv.set("data", o.data);
  return kv;
}

inline training::CurriculumConfig curriculum_config(const KeyValueConfig& kv) {
  try {
    auto cfg = training::CurriculumConfig::from_config(kv);
    if (cfg.backbone.id != "tiny" && cfg.backbone.id != "reference")
      throw UsageError("backbone must be tiny or reference, got '" + cfg.backbone.id + "'");
    return cfg;
  } catch (const ConfigParseError& e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

/// Resolved curriculum config plus the non-curriculum keys the CLI understands.
inline KeyValueConfig snapshot(const training::CurriculumConfig& cfg, const KeyValueConfig& kv) {
  KeyValueConfig out = cfg.to_config();
  for (const auto& key : {"data"})
    if (kv.contains(key)) out.set(key, kv.get_string(key, ""));
  return out;
}

/// Creates the output directory; an existing non-empty one needs --force.
inline fs::path prepare_out(const Options& o, const std::vector<fs::path>& inputs = {}) {
  if (o.out.empty()) throw UsageError("--out is required");
  const fs::path out = fs::absolute(o.out).lexically_normal();
  for (const auto& in : inputs)
    if (!in.empty() && fs::exists(in) && fs::equivalent(in, out))
      throw UsageError("output directory must differ from input " + in.string());
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!o.force) throw UsageError(out.string() + " exists and is not empty; pass --force to overwrite");
    fs::remove_all(out);
  }
  fs::create_directories(out);
  return out;
}

inline std::string data_dir(const KeyValueConfig& kv) {
  const std::string d = kv.get_string("data", "");
  if (d.empty()) throw UsageError("--data (or a 'data' config key) is required");
  return d;
}

inline std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(what + ": '" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw UsageError(what + " needs at least one value");
  return out;
}

inline model::SegModel load_model(const training::CurriculumConfig& cfg, const std::string& ckpt) {
  model::SegModel m(cfg.backbone);
  if (!ckpt.empty()) model::load_checkpoint(m, ckpt);
  return m;
}

inline std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_synth(const Options& o, std::ostream& out) {
  KeyValueConfig kv;
  if (!o.config.empty()) kv = KeyValueConfig::load(o.config);
  for (const auto& s : o.sets) kv.merge(KeyValueConfig::parse(s));
  data::SynthConfig sc;
  try {
    sc = data::SynthConfig::from_config(kv);
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.patients < 1) throw UsageError("--patients must be >= 1");
  const auto dir = prepare_out(o);
  const std::uint64_t seed = static_cast<std::uint64_t>(o.seed.value_or(0));
  auto snap = sc.to_config();
  snap.set("patients", std::to_string(o.patients));
  snap.set("seed", std::to_string(seed));
  snap.save(dir / "config.cfg");
  std::size_t slices = 0;
  for (const auto& series : data::synth_generate(sc, o.patients, seed)) {
    const auto samples = data::preprocess_series(series);
    data::write_cache(dir / (series.patient_id + data::kCacheExtension), series.patient_id, samples);
    slices += samples.size();
  }
  out << "synth: " << o.patients << " patients, " << slices << " slices -> " << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_preprocess(const Options& o, std::ostream& out) {
  if (o.input.empty()) throw UsageError("--input is required");
  if (!fs::is_directory(o.input)) throw UsageError("--input must be a directory: " + o.input);
  KeyValueConfig kv;
  if (!o.config.empty()) kv = KeyValueConfig::load(o.config);
  for (const auto& s : o.sets) kv.merge(KeyValueConfig::parse(s));
  data::PreprocessOptions po;
  po.bright_threshold = kv.get_double("bright_threshold", po.bright_threshold);
  po.min_bright_pixels = static_cast<int>(kv.get_int("min_bright_pixels", po.min_bright_pixels));
  const auto dir = prepare_out(o, {o.input});
  KeyValueConfig snap;
  snap.set("input", fs::absolute(o.input).lexically_normal().string());
  snap.set("bright_threshold", format_double(po.bright_threshold));
  snap.set("min_bright_pixels", std::to_string(po.min_bright_pixels));
  snap.save(dir / "config.cfg");
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(o.input))
    if (e.is_directory() || data::detail::is_nifti(e.path())) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  std::size_t patients = 0, slices = 0;
  for (const auto& p : entries) {
    const auto series = data::load_volume(p);
    const auto samples = data::preprocess_series(series, po);
    data::write_cache(dir / (series.patient_id + data::kCacheExtension), series.patient_id, samples);
    ++patients;
    slices += samples.size();
  }
  if (patients == 0) throw std::runtime_error(o.input + ": no patient volumes found");
  out << "preprocess: " << patients << " patients, " << slices << " slices -> " << dir.string() << "\n";
  return kExitOk;
}

enum class OnlyStep { all, cls, fs, ws };

/// pretrain / train-fs / finetune-ws / curriculum: one run on a patient-level split.
inline int cmd_run(const Options& o, OnlyStep only, std::ostream& out) {
  const auto kv = resolve_config(o);
  auto cfg = curriculum_config(kv);
  const std::string data_path = data_dir(kv);
  const auto dir = prepare_out(o, {data_path});
  snapshot(cfg, kv).save(dir / "config.cfg");
  const auto samples = data::load_dataset(data_path);
  const auto split =
      training::split_patients(training::patient_ids(samples), cfg.val_fraction, cfg.test_fraction, cfg.seed);
  const auto d = training::build_run_data(cfg, samples, split);
  auto m = load_model(cfg, o.init);
  training::RunRecord r;
  if (only == OnlyStep::all) {
    r = training::run_curriculum_on(m, cfg, d, split);
  } else {
    r.config = cfg;
    r.split = split;
    r.n_fs = d.n_fs;
    std::tie(r.alpha_fs, r.alpha_ws) = training::lr_heuristic(d.n_fs, cfg.order);
    r.alpha_fs = cfg.alpha_fs.value_or(r.alpha_fs);
    r.alpha_ws = cfg.alpha_ws.value_or(r.alpha_ws);
    training::StepRecord s;
    if (only == OnlyStep::cls) s = training::pretrain_classification(m, {d.ws_train, d.val}, cfg);
    if (only == OnlyStep::fs) s = training::train_fs(m, {d.fs_train, d.val}, cfg, r.alpha_fs);
    if (only == OnlyStep::ws) s = training::train_ws(m, {d.ws_train, d.val}, cfg, r.alpha_ws);
    if (only != OnlyStep::cls && !d.test.empty()) s.test_dice = training::dice_losses(m, d.test);
    r.steps.push_back(std::move(s));
  }
  training::write_run(dir, r);
  std::string line = "run:";
  for (const auto& s : r.steps) {
    line += " " + s.step + " val_loss=" + fmt4(s.final_val_loss);
    if (s.val_accuracy) line += " val_acc=" + fmt4(*s.val_accuracy);
    if (!s.test_dice.empty())
      line += " test_dice_loss=" + fmt4(std::accumulate(s.test_dice.begin(), s.test_dice.end(), 0.0) /
                                        static_cast<double>(s.test_dice.size()));
    if (s.flagged) line += " (flagged)";
  }
  out << line << " -> " << dir.string() << "\n";
  return kExitOk;
}

/// Writes fold runs, the metrics table and a per-step aggregate; returns the metric rows.
inline std::vector<eval::MetricRow> write_crossval(const fs::path& dir, const std::vector<training::RunRecord>& runs) {
  for (const auto& r : runs) training::write_run(dir / ("fold_" + std::to_string(r.fold)), r);
  const auto rows = training::metric_rows(runs);
  eval::write_metrics_table(dir / "metrics.csv", rows);
  return rows;
}

inline std::string aggregate_line(const std::vector<eval::MetricRow>& rows) {
  std::string line;
  for (const auto& p : eval::aggregate_curves(rows))
    line += " " + p.step + "(n_fs=" + std::to_string(p.n_fs) + ")=" + fmt4(p.mean) + "+-" + fmt4(p.ci95);
  return line;
}

inline int cmd_crossval(const Options& o, std::ostream& out) {
  const auto kv = resolve_config(o);
  const auto cfg = curriculum_config(kv);
  if (o.folds < 2) throw UsageError("--folds must be >= 2");
  const std::string data_path = data_dir(kv);
  const auto dir = prepare_out(o, {data_path});
  auto snap = snapshot(cfg, kv);
  snap.set("folds", std::to_string(o.folds));
  snap.save(dir / "config.cfg");
  const auto samples = data::load_dataset(data_path);
  const auto runs = training::crossval(cfg, samples, o.folds, o.jobs);
  const auto rows = write_crossval(dir, runs);
  std::ofstream(dir / "summary.csv") << eval::curve_table(eval::aggregate_curves(rows));
  out << "crossval: " << o.folds << " folds" << aggregate_line(rows) << " -> " << dir.string() << "\n";
  return kExitOk;
}

/// Cross-validation at several values of one config key; jobs fan out over (value, fold).
inline std::vector<training::RunRecord> sweep(const training::CurriculumConfig& base,
                                              const std::vector<data::SliceSample>& samples,
                                              const std::vector<int>& values, int folds, int jobs,
                                              void (*apply)(training::CurriculumConfig&, int)) {
  const auto partition = training::kfold_partition(training::patient_ids(samples), folds, base.seed);
  const int n = static_cast<int>(values.size()) * folds;
  return training::parallel_map<training::RunRecord>(n, jobs, [&](int i) {
    auto cfg = base;
    apply(cfg, values[static_cast<std::size_t>(i / folds)]);
    const int f = i % folds;
    return training::run_curriculum(cfg, samples, training::fold_split(partition, f, cfg.val_fraction, cfg.seed), f);
  });
}

inline int cmd_sweep_nfs(const Options& o, std::ostream& out) {
  const auto kv = resolve_config(o);
  const auto cfg = curriculum_config(kv);
  const auto values = parse_int_list(o.values, "--values");
  for (int v : values)
    if (v < 1) throw UsageError("--values: n_fs must be >= 1");
  if (o.folds < 2) throw UsageError("--folds must be >= 2");
  const std::string data_path = data_dir(kv);
  const auto dir = prepare_out(o, {data_path});
  auto snap = snapshot(cfg, kv);
  snap.set("values", o.values);
  snap.set("folds", std::to_string(o.folds));
  snap.save(dir / "config.cfg");
  const auto samples = data::load_dataset(data_path);
  const auto runs = sweep(cfg, samples, values, o.folds, o.jobs, [](training::CurriculumConfig& c, int v) {
    c.n_fs = v;
    c.n_fs_all = false;
  });
  for (const auto& r : runs)
    training::write_run(dir / ("nfs_" + std::to_string(r.n_fs)) / ("fold_" + std::to_string(r.fold)), r);
  const auto rows = training::metric_rows(runs);
  eval::write_metrics_table(dir / "metrics.csv", rows);
  const auto charts = eval::plot_learning_curves(rows, dir);
  out << "sweep-nfs: " << values.size() << " points x " << o.folds << " folds, " << charts.size() << " chart(s)"
      << aggregate_line(rows) << " -> " << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_sweep_k(const Options& o, std::ostream& out) {
  const auto kv = resolve_config(o);
  const auto cfg = curriculum_config(kv);
  const auto values = parse_int_list(o.values, "--values");
  for (int v : values)
    if (v < 1 || v > 12) throw UsageError("--values: K must be in [1, 12]");
  if (o.folds < 2) throw UsageError("--folds must be >= 2");
  const std::string data_path = data_dir(kv);
  const auto dir = prepare_out(o, {data_path});
  auto snap = snapshot(cfg, kv);
  snap.set("values", o.values);
  snap.set("folds", std::to_string(o.folds));
  snap.save(dir / "config.cfg");
  const auto samples = data::load_dataset(data_path);
  const auto runs =
      sweep(cfg, samples, values, o.folds, o.jobs, [](training::CurriculumConfig& c, int v) { c.k = v; });
  std::ofstream table(dir / "sweep_k.csv");
  table.precision(17);
  table << "k,step,fold,mean_dice_loss\n";
  for (const auto& r : runs) {
    training::write_run(dir / ("k_" + std::to_string(r.config.k)) / ("fold_" + std::to_string(r.fold)), r);
    for (const auto& row : training::metric_rows({r}))
      table << r.config.k << "," << row.step << "," << row.fold << "," << row.mean_dice_loss << "\n";
  }
  std::string line;
  for (int v : values) {
    std::vector<training::RunRecord> at;
    for (const auto& r : runs)
      if (r.config.k == v) at.push_back(r);
    const auto m = training::fold_means(at, training::kStepWs);
    if (m.size() >= 2) line += " K=" + std::to_string(v) + ":MIL=" + fmt4(eval::ci95(m).first);
  }
  out << "sweep-k: " << values.size() << " values x " << o.folds << " folds" << line << " -> " << dir.string() << "\n";
  return kExitOk;
}

/// Balanced masked samples of the chosen patients (all patients without --run).
inline std::vector<data::SliceSample> evaluation_set(const Options& o, const training::CurriculumConfig& cfg,
                                                     const std::vector<data::SliceSample>& samples) {
  const auto group = data::build_group(samples, cfg.group_threshold);
  if (o.run.empty()) return data::balance_masked(group, cfg.seed);
  const auto split = training::read_split(fs::path(o.run) / "split.csv");
  const auto& ids = o.split == "test" ? split.test : o.split == "val" ? split.val : split.train;
  if (ids.empty()) throw std::runtime_error("run split has no " + o.split + " patients");
  return data::balance_masked(data::filter_patients(group, std::set<std::string>(ids.begin(), ids.end())), cfg.seed);
}

inline int cmd_evaluate(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (o.split != "test" && o.split != "val" && o.split != "train") throw UsageError("--split must be test, val or train");
  const auto kv = resolve_config(o);
  const auto cfg = curriculum_config(kv);
  const std::string data_path = data_dir(kv);
  const auto dir = prepare_out(o, {data_path});
  snapshot(cfg, kv).save(dir / "config.cfg");
  const auto m = load_model(cfg, o.checkpoint);
  const auto set = evaluation_set(o, cfg, data::load_dataset(data_path));
  std::ofstream csv(dir / "eval.csv");
  csv.precision(17);
  csv << "patient_id,slice_index,label,dice_loss\n";
  std::vector<double> v;
  for (const auto& s : set) {
    v.push_back(eval::sample_dice_loss(m, s));
    csv << s.patient_id << "," << s.slice_index << "," << s.label << "," << v.back() << "\n";
  }
  const auto summary = eval::MetricSummary::from_values(v);
  out << "evaluate: " << v.size() << " samples mean_dice_loss=" << fmt4(summary.mean) << " ci95=" << fmt4(summary.ci95)
      << " -> " << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_plot(const Options& o, std::ostream& out) {
  if (o.metrics.empty()) throw UsageError("--metrics is required");
  const auto rows = eval::read_metrics_table(o.metrics);
  const auto dir = prepare_out(o);
  const auto charts = eval::plot_learning_curves(rows, dir);
  out << "plot: " << charts.size() << " chart(s) from " << rows.size() << " rows -> " << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_overlays(const Options& o, std::ostream& out) {
  if (o.fs_checkpoint.empty() || o.mil_checkpoint.empty()) throw UsageError("--fs and --mil checkpoints are required");
  const auto kv = resolve_config(o);
  const auto cfg = curriculum_config(kv);
  const std::string data_path = data_dir(kv);
  const auto dir = prepare_out(o, {data_path});
  snapshot(cfg, kv).save(dir / "config.cfg");
  const auto fs_model = load_model(cfg, o.fs_checkpoint);
  const auto mil_model = load_model(cfg, o.mil_checkpoint);
  auto set = evaluation_set(o, cfg, data::load_dataset(data_path));
  if (o.limit > 0 && set.size() > static_cast<std::size_t>(o.limit)) set.resize(static_cast<std::size_t>(o.limit));
  const auto files = eval::render_overlays(fs_model, mil_model, set, dir);
  out << "overlays: " << files.size() << " files -> " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline void add_common(CLI::App* c, Options& o, bool training_flags) {
  c->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  c->add_option("--out", o.out, "output directory (created; never overwritten without --force)");
  c->add_option("--seed", o.seed, "master seed");
  c->add_flag("--force", o.force, "replace a non-empty output directory");
  c->add_option("--set", o.sets, "config override key=value (repeatable)");
  c->add_option("--log-level", o.log_level, "trace|debug|info|warn|error|off");
  if (!training_flags) return;
  c->add_option("--data", o.data, "directory of preprocessed .wsc files");
  c->add_option("--jobs", o.jobs, "parallel workers for folds / sweep points")->check(CLI::PositiveNumber);
  c->add_option("--n-fs", o.n_fs, "annotated positives in the FS subset (integer or 'all')");
  c->add_option("--k", o.k, "MIL top-K");
  c->add_option("--group", o.group, "minimal lesion percentage group: 1, 5 or 10");
  c->add_option("--order", o.order, "fs-mil or mil-fs")->check(CLI::IsMember({"fs-mil", "mil-fs"}));
  c->add_flag("--no-cls-pretrain", o.no_cls_pretrain, "skip classification pretraining");
  c->add_option("--backbone", o.backbone, "tiny or reference")->check(CLI::IsMember({"tiny", "reference"}));
  c->add_option("--pretrained", o.pretrained, std::string("backbone weights file (overrides $") + kPretrainedEnv + ")");
}

/// Entry point: returns the process exit code. Progress logs go to stderr, the one-line
/// summary to `out`.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Weakly supervised segmentation with a fusion decoder and top-K MIL"};
  app.require_subcommand(1);
  Options o;
  std::map<std::string, CLI::App*> cmd;
  auto sub = [&](const std::string& name, const std::string& help, bool training_flags) {
    cmd[name] = app.add_subcommand(name, help);
    add_common(cmd[name], o, training_flags);
    return cmd[name];
  };
  sub("synth", "generate a synthetic preprocessed dataset", false)
      ->add_option("--patients", o.patients, "number of patients");
  sub("preprocess", "load raw volumes and write preprocessed caches", false)
      ->add_option("--input", o.input, "directory with one entry per patient");
  sub("pretrain", "classification pretraining only", true)->add_option("--init", o.init, "initial checkpoint");
  sub("train-fs", "fully supervised Dice step only", true)->add_option("--init", o.init, "initial checkpoint");
  sub("finetune-ws", "weakly supervised MIL step only", true)->add_option("--init", o.init, "initial checkpoint");
  sub("curriculum", "full curriculum on one patient split", true)->add_option("--init", o.init, "initial checkpoint");
  sub("crossval", "patient-level k-fold cross-validation", true)->add_option("--folds", o.folds, "number of folds");
  auto* nfs = sub("sweep-nfs", "cross-validation at several n_fs values, with learning curves", true);
  nfs->add_option("--values", o.values, "comma-separated n_fs values")->required();
  nfs->add_option("--folds", o.folds, "number of folds");
  auto* ks = sub("sweep-k", "cross-validation at several K values", true);
  ks->add_option("--values", o.values, "comma-separated K values")->required();
  ks->add_option("--folds", o.folds, "number of folds");
  auto* ev = sub("evaluate", "Dice loss of a checkpoint on masked samples", true);
  ev->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  ev->add_option("--run", o.run, "run directory whose split.csv selects patients");
  ev->add_option("--split", o.split, "patients of --run to use: test, val or train");
  sub("plot", "learning-curve charts from a metrics table", false)->add_option("--metrics", o.metrics, "metrics.csv");
  auto* ov = sub("overlays", "FS vs MIL contour overlays", true);
  ov->add_option("--fs", o.fs_checkpoint, "FS-step checkpoint");
  ov->add_option("--mil", o.mil_checkpoint, "MIL-step checkpoint");
  ov->add_option("--run", o.run, "run directory whose split.csv selects patients");
  ov->add_option("--split", o.split, "patients of --run to use: test, val or train");
  ov->add_option("--limit", o.limit, "maximum number of samples (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  auto logger = spdlog::stderr_color_mt("wsseg-" + std::to_string(reinterpret_cast<std::uintptr_t>(&o)));
  logger->set_pattern("%H:%M:%S %l %v");
  const auto previous = spdlog::default_logger();
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(o.log_level));
  struct Restore {
    std::shared_ptr<spdlog::logger> prev;
    std::string name;
    ~Restore() {
      spdlog::set_default_logger(prev);
      spdlog::drop(name);
    }
  } restore{previous, logger->name()};

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "synth") return cmd_synth(o, out);
    if (name == "preprocess") return cmd_preprocess(o, out);
    if (name == "pretrain") return cmd_run(o, OnlyStep::cls, out);
    if (name == "train-fs") return cmd_run(o, OnlyStep::fs, out);
    if (name == "finetune-ws") return cmd_run(o, OnlyStep::ws, out);
    if (name == "curriculum") return cmd_run(o, OnlyStep::all, out);
    if (name == "crossval") return cmd_crossval(o, out);
    if (name == "sweep-nfs") return cmd_sweep_nfs(o, out);
    if (name == "sweep-k") return cmd_sweep_k(o, out);
    if (name == "evaluate") return cmd_evaluate(o, out);
    if (name == "plot") return cmd_plot(o, out);
    if (name == "overlays") return cmd_overlays(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << cmd[name]->help();
    return kExitUsage;
  } catch (const ConfigParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << "error: unknown command " << name << "\n";
  return kExitUsage;
}

}  // namespace wsseg::cli
