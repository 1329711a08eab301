#pragma once

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsseg/eval/metrics.hpp"
#include "wsseg/eval/plots.hpp"
#include "wsseg/model/checkpoint.hpp"
#include "wsseg/training/curriculum.hpp"

namespace wsseg::training {

namespace fs = std::filesystem;

inline constexpr const char* kEpochHeader = "step,epoch,train_loss,val_loss,lr";
inline constexpr const char* kSummaryHeader =
    "step,lr,epochs,initial_val_loss,best_val_loss,final_val_loss,val_dice_loss,val_accuracy,test_dice_loss,"
    "test_dice_ci95,test_samples,restarted,flagged,seconds";

inline std::string checkpoint_name(const std::string& step) { return step + ".ckpt"; }

/// Writes one run as a directory:
///   config.cfg, metrics.csv (per epoch), summary.csv (per step), split.csv,
///   checkpoints/<step>.ckpt, loss_curves.png
inline void write_run(const fs::path& dir, const RunRecord& r) {
  fs::create_directories(dir / "checkpoints");
  r.config.to_config().save(dir / "config.cfg");

  std::ofstream metrics(dir / "metrics.csv");
  metrics.precision(17);
  metrics << kEpochHeader << "\n";
  for (const auto& s : r.steps)
    for (std::size_t i = 0; i < s.epochs.size(); ++i) {
      const auto& e = s.epochs[i];
      metrics << s.step << "," << i + 1 << "," << e.train_loss << "," << e.val_loss << "," << e.lr << "\n";
    }
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());

  std::ofstream summary(dir / "summary.csv");
  summary.precision(17);
  summary << kSummaryHeader << "\n";
  for (const auto& s : r.steps) {
    double test_mean = 0.0, test_ci = 0.0;
    if (s.test_dice.size() >= 2)
      std::tie(test_mean, test_ci) = eval::ci95(s.test_dice);
    else if (!s.test_dice.empty())
      test_mean = s.test_dice.front();
    auto num = [](double v) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      return os.str();
    };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    summary << s.step << "," << s.lr << "," << s.epochs.size() << "," << s.initial_val_loss << "," << s.best_val_loss
            << "," << s.final_val_loss << "," << opt(s.val_dice) << "," << opt(s.val_accuracy) << ","
            << (s.test_dice.empty() ? std::string() : num(test_mean)) << ","
            << (s.test_dice.empty() ? std::string() : num(test_ci)) << "," << s.test_dice.size() << ","
            << s.restarted << "," << s.flagged << "," << s.seconds << "\n";
  }

  std::ofstream split(dir / "split.csv");
  split << "patient_id,role\n";
  for (const auto& [ids, role] : {std::pair{&r.split.train, "train"}, {&r.split.val, "val"}, {&r.split.test, "test"}})
    for (const auto& id : *ids) split << id << "," << role << "\n";

  if (!r.steps.empty()) {
    model::SegModel m(r.config.backbone);
    for (const auto& s : r.steps) {
      m.params().restore(s.weights);
      model::save_checkpoint(m, dir / "checkpoints" / checkpoint_name(s.step));
    }
    std::vector<eval::LossSeries> series;
    for (const auto& s : r.steps) {
      eval::LossSeries ls{s.step, {s.initial_val_loss}};
      for (const auto& e : s.epochs) ls.val_loss.push_back(e.val_loss);
      series.push_back(std::move(ls));
    }
    eval::plot_loss_curves(series, dir / "loss_curves.png");
  }
}

/// Reads split.csv back into a PatientSplit.
inline PatientSplit read_split(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  PatientSplit s;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) continue;
    const std::string id = line.substr(0, comma), role = line.substr(comma + 1);
    (role == "train" ? s.train : role == "val" ? s.val : s.test).push_back(id);
  }
  return s;
}

/// Group label used in metrics tables: the threshold in percent ("10" for 0.10).
inline std::string group_label(double threshold) {
  const double pct = threshold * 100.0;
  const long rounded = std::lround(pct);
  return std::abs(pct - static_cast<double>(rounded)) < 1e-9 ? std::to_string(rounded) : format_double(pct);
}

/// One metrics-table row per (run, FS/MIL step) with test Dice.
inline std::vector<eval::MetricRow> metric_rows(const std::vector<RunRecord>& runs) {
  std::vector<eval::MetricRow> rows;
  for (const auto& r : runs)
    for (const auto& s : r.steps) {
      if (s.step == kStepCls || s.test_dice.empty()) continue;
      rows.push_back({group_label(r.config.group_threshold), r.n_fs, s.step, std::max(r.fold, 0),
                      std::accumulate(s.test_dice.begin(), s.test_dice.end(), 0.0) /
                          static_cast<double>(s.test_dice.size())});
    }
  return rows;
}

}  // namespace wsseg::training
