#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "wsseg/data/groups.hpp"
#include "wsseg/model/seg_model.hpp"
#include "wsseg/training/config.hpp"
#include "wsseg/training/splits.hpp"
#include "wsseg/training/steps.hpp"

namespace wsseg::training {

/// Every artifact of one curriculum run (one fold in cross-validation).
struct RunRecord {
  int fold = -1;  // -1 = single train/val/test split
  CurriculumConfig config;
  PatientSplit split;
  int n_fs = 0;  // annotated positives actually used
  double alpha_fs = 0.0;
  double alpha_ws = 0.0;
  std::vector<StepRecord> steps;
  double seconds = 0.0;

  const StepRecord* find(const std::string& step) const {
    for (const auto& s : steps)
      if (s.step == step) return &s;
    return nullptr;
  }
};

/// The sample sets of one run, drawn from the patients of a split.
struct RunData {
  std::vector<data::SliceSample> fs_train;  // n_fs(+n_fs), masks
  std::vector<data::SliceSample> ws_train;  // balanced, labels only
  std::vector<data::SliceSample> val;       // balanced, masks
  std::vector<data::SliceSample> test;      // balanced, masks; empty without test patients
  int n_fs = 0;
};

inline std::uint64_t run_seed(const CurriculumConfig& cfg, int fold, std::uint64_t salt) {
  return detail::derive_seed({cfg.seed, static_cast<std::uint64_t>(fold + 1), salt});
}

inline RunData build_run_data(const CurriculumConfig& cfg, const std::vector<data::SliceSample>& samples,
                              const PatientSplit& split, int fold = -1) {
  const auto group = data::build_group(samples, cfg.group_threshold);
  auto part = [&](const std::vector<std::string>& ids) {
    return data::filter_patients(group, std::set<std::string>(ids.begin(), ids.end()));
  };
  const auto train = part(split.train);
  RunData d;
  if (cfg.n_fs_all) {
    d.n_fs = static_cast<int>(std::count_if(train.positives.begin(), train.positives.end(),
                                            [](const data::SliceSample& s) { return s.has_mask(); }));
    if (d.n_fs == 0) throw TrainingError("n_fs=all: no annotated training positives");
  } else {
    d.n_fs = cfg.n_fs;
  }
  d.fs_train = data::sample_fs_subset(train, d.n_fs, run_seed(cfg, fold, 1));
  d.ws_train = data::balance_ws(train, run_seed(cfg, fold, 2));
  d.val = data::balance_masked(part(split.val), run_seed(cfg, fold, 3));
  if (!split.test.empty()) d.test = data::balance_masked(part(split.test), run_seed(cfg, fold, 4));
  return d;
}

/// Per-sample Dice losses of the model on `set`.
inline std::vector<double> dice_losses(const model::SegModel& m, const std::vector<data::SliceSample>& set) {
  std::vector<double> out;
  out.reserve(set.size());
  const auto loss = detail::fs_loss();
  for (const auto& s : set) out.push_back(loss(m, s, 0.0, nullptr));
  return out;
}

/// Runs [cls?] then FS and MIL in the configured order, threading weights between steps.
/// `model` is trained in place; the record keeps each step's final weights.
inline RunRecord run_curriculum_on(model::SegModel& model, const CurriculumConfig& cfg, const RunData& d,
                                   const PatientSplit& split, int fold = -1) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord r;
  r.fold = fold;
  r.config = cfg;
  r.split = split;
  r.n_fs = d.n_fs;
  const auto [h_fs, h_ws] = lr_heuristic(d.n_fs, cfg.order);
  r.alpha_fs = cfg.alpha_fs.value_or(h_fs);
  r.alpha_ws = cfg.alpha_ws.value_or(h_ws);
  spdlog::info("run fold={} order={} n_fs={} alpha_fs={:.3g} alpha_ws={:.3g} train_patients={} val_patients={} "
               "test_patients={}",
               fold, to_string(cfg.order), d.n_fs, r.alpha_fs, r.alpha_ws, split.train.size(), split.val.size(),
               split.test.size());
  auto finish = [&](StepRecord s) {
    if (!d.test.empty() && s.step != kStepCls) s.test_dice = dice_losses(model, d.test);
    r.steps.push_back(std::move(s));
  };
  if (cfg.use_cls_pretrain) finish(pretrain_classification(model, {d.ws_train, d.val}, cfg));
  auto fs = [&] { finish(train_fs(model, {d.fs_train, d.val}, cfg, r.alpha_fs)); };
  auto ws = [&] {
    if (cfg.ws_enabled) finish(train_ws(model, {d.ws_train, d.val}, cfg, r.alpha_ws));
  };
  if (cfg.order == StepOrder::fs_then_mil) {
    fs();
    ws();
  } else {
    ws();
    fs();
  }
  r.seconds = detail::seconds_since(t0);
  return r;
}

inline RunRecord run_curriculum(const CurriculumConfig& cfg, const std::vector<data::SliceSample>& samples,
                                const PatientSplit& split, int fold = -1) {
  cfg.validate();
  const RunData d = build_run_data(cfg, samples, split, fold);
  model::SegModel model(cfg.backbone);
  return run_curriculum_on(model, cfg, d, split, fold);
}

/// Single run with a random patient-level train/val/test split (80/20 by default).
inline RunRecord run_curriculum(const CurriculumConfig& cfg, const std::vector<data::SliceSample>& samples) {
  const auto split = split_patients(patient_ids(samples), cfg.val_fraction, cfg.test_fraction, cfg.seed);
  return run_curriculum(cfg, samples, split);
}

/// Runs `count` independent jobs on up to `jobs` threads; results keep index order and
/// the first failure is rethrown after all workers stop.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(int count, int jobs, Fn fn) {
  std::vector<Result> out(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        out[static_cast<std::size_t>(i)] = fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n = std::clamp(jobs, 1, std::max(1, count));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return out;
}

/// Patient-level k-fold cross-validation; each fold is the test set exactly once.
inline std::vector<RunRecord> crossval(const CurriculumConfig& cfg, const std::vector<data::SliceSample>& samples,
                                       int folds = 5, int jobs = 1) {
  cfg.validate();
  const auto partition = kfold_partition(patient_ids(samples), folds, cfg.seed);
  return parallel_map<RunRecord>(folds, jobs, [&](int f) {
    return run_curriculum(cfg, samples, fold_split(partition, f, cfg.val_fraction, cfg.seed), f);
  });
}

/// Mean test Dice loss of `step` in each record (records without that step are skipped).
inline std::vector<double> fold_means(const std::vector<RunRecord>& runs, const std::string& step) {
  std::vector<double> out;
  for (const auto& r : runs)
    if (const auto* s = r.find(step); s && !s->test_dice.empty())
      out.push_back(std::accumulate(s->test_dice.begin(), s->test_dice.end(), 0.0) /
                    static_cast<double>(s->test_dice.size()));
  return out;
}

}  // namespace wsseg::training
