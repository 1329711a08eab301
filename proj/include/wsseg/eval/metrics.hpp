#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wsseg/data/types.hpp"
#include "wsseg/losses/dice.hpp"
#include "wsseg/model/seg_model.hpp"

namespace wsseg::eval {

/// (mean, 1.96 * sample sd / sqrt(n)).
inline std::pair<double, double> ci95(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("ci95: need at least 2 values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, 1.96 * sd / std::sqrt(n)};
}

struct MetricSummary {
  std::vector<double> values;  // per-sample (or per-fold) dice losses
  double mean = 0.0;
  double ci95 = 0.0;
  double group_threshold = 0.0;
  int n_fs = 0;
  std::string step;  // "FS" | "MIL"

  static MetricSummary from_values(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("MetricSummary: no values");
    MetricSummary m;
    if (v.size() >= 2) {
      std::tie(m.mean, m.ci95) = wsseg::eval::ci95(v);
    } else {
      m.mean = v.front();
    }
    m.values = std::move(v);
    return m;
  }
};

/// Dice loss of A3 (probabilities, no binarisation) against the downsampled mask.
inline double sample_dice_loss(const model::SegModel& m, const data::SliceSample& s) {
  const auto out = m.segment(s.image);
  const Mask small = losses::downsample_mask(*s.pixel_mask, out.a3.rows(), out.a3.cols());
  return losses::dice_loss(out.a3, losses::mask_to_map(small));
}

inline MetricSummary evaluate_dice(const model::SegModel& m, const std::vector<data::SliceSample>& samples) {
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& s : samples)
    if (s.pixel_mask) v.push_back(sample_dice_loss(m, s));
  if (v.empty()) throw std::invalid_argument("evaluate_dice: no samples with pixel masks");
  return MetricSummary::from_values(std::move(v));
}

/// One row of the metrics table.
struct MetricRow {
  std::string group;
  int n_fs = 0;
  std::string step;
  int fold = 0;
  double mean_dice_loss = 0.0;
};

inline constexpr const char* kMetricsHeader = "group,n_fs,step,fold,mean_dice_loss";

inline void write_metrics_table(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kMetricsHeader << "\n";
  out.precision(17);
  for (const auto& r : rows) out << r.group << "," << r.n_fs << "," << r.step << "," << r.fold << "," << r.mean_dice_loss << "\n";
}

inline std::vector<MetricRow> read_metrics_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw std::runtime_error(path.string() + ": unexpected metrics header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    MetricRow r;
    std::string f;
    try {
      std::getline(ss, r.group, ',');
      std::getline(ss, f, ',');
      r.n_fs = std::stoi(f);
      std::getline(ss, r.step, ',');
      std::getline(ss, f, ',');
      r.fold = std::stoi(f);
      std::getline(ss, f, ',');
      r.mean_dice_loss = std::stod(f);
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ": malformed row: " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace wsseg::eval
