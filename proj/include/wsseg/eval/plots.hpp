#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <string>
#include <vector>

#include "wsseg/data/types.hpp"
#include "wsseg/eval/canvas.hpp"
#include "wsseg/eval/metrics.hpp"
#include "wsseg/losses/dice.hpp"
#include "wsseg/model/seg_model.hpp"

namespace wsseg::eval {

/// One plotted point: fold-level means aggregated to mean and 95% half-width.
struct CurvePoint {
  std::string group;
  int n_fs = 0;
  std::string step;
  double mean = 0.0;
  double ci95 = 0.0;  // 0 when fewer than two folds
  int folds = 0;
};

inline constexpr const char* kCurveHeader = "group,n_fs,step,mean_dice_loss,ci95_low,ci95_high,folds";

/// Groups metric rows by (group, step, n_fs) and aggregates the fold means.
inline std::vector<CurvePoint> aggregate_curves(const std::vector<MetricRow>& rows) {
  std::map<std::tuple<std::string, std::string, int>, std::vector<double>> buckets;
  for (const auto& r : rows) buckets[{r.group, r.step, r.n_fs}].push_back(r.mean_dice_loss);
  std::vector<CurvePoint> out;
  for (const auto& [key, v] : buckets) {
    CurvePoint p{std::get<0>(key), std::get<2>(key), std::get<1>(key), 0.0, 0.0, static_cast<int>(v.size())};
    if (v.size() >= 2)
      std::tie(p.mean, p.ci95) = ci95(v);
    else
      p.mean = v.front();
    out.push_back(p);
  }
  return out;
}

inline std::string curve_table(const std::vector<CurvePoint>& pts) {
  std::ostringstream os;
  os.precision(17);
  os << kCurveHeader << "\n";
  for (const auto& p : pts)
    os << p.group << "," << p.n_fs << "," << p.step << "," << p.mean << "," << p.mean - p.ci95 << ","
       << p.mean + p.ci95 << "," << p.folds << "\n";
  return os.str();
}

namespace detail {

inline Rgb step_color(const std::string& step) { return step == "FS" ? kRed : step == "MIL" ? kBlue : kBlack; }

inline std::string fmt(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

struct Axes {
  int x0 = 70, y0 = 40, x1 = 0, y1 = 0;  // plot box in pixels
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  int px(double x) const { return x0 + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (x1 - x0))); }
  int py(double y) const { return y1 - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (y1 - y0))); }
};

inline void draw_frame(Canvas& c, const Axes& a, const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, const std::vector<double>& xticks) {
  c.line(a.x0, a.y1, a.x1, a.y1, kBlack);
  c.line(a.x0, a.y0, a.x0, a.y1, kBlack);
  for (int i = 0; i <= 4; ++i) {
    const double y = a.ymin + (a.ymax - a.ymin) * i / 4.0;
    c.line(a.x0 - 4, a.py(y), a.x0, a.py(y), kBlack);
    c.text(a.x0 - 40, a.py(y) - 3, fmt(y), kBlack);
  }
  for (double x : xticks) {
    c.line(a.px(x), a.y1, a.px(x), a.y1 + 4, kBlack);
    std::ostringstream os;
    os << x;
    c.text(a.px(x) - 3 * static_cast<int>(os.str().size()), a.y1 + 8, os.str(), kBlack);
  }
  c.text(a.x0, 12, title, kBlack, 2);
  c.text((a.x0 + a.x1) / 2 - 3 * static_cast<int>(xlabel.size()), a.y1 + 22, xlabel, kBlack);
  c.text(4, a.y0 - 14, ylabel, kBlack);
}

}  // namespace detail

/// One chart per dataset group: mean Dice loss vs n_fs with shaded CI bands, one curve
/// per step. Writes learning_curves_<group>.png and the .csv sidecar holding exactly the
/// plotted numbers (also embedded in the PNG as the "data" text chunk).
inline std::vector<std::filesystem::path> plot_learning_curves(const std::vector<MetricRow>& rows,
                                                               const std::filesystem::path& out_dir) {
  if (rows.empty()) throw std::invalid_argument("plot_learning_curves: no metric rows");
  const auto pts = aggregate_curves(rows);
  std::map<std::string, std::vector<CurvePoint>> by_group;
  for (const auto& p : pts) by_group[p.group].push_back(p);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [group, gp] : by_group) {
    std::vector<std::string> steps;
    std::vector<double> xs;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : gp) {
      if (std::find(steps.begin(), steps.end(), p.step) == steps.end()) steps.push_back(p.step);
      if (std::find(xs.begin(), xs.end(), p.n_fs) == xs.end()) xs.push_back(p.n_fs);
      lo = std::min(lo, p.mean - p.ci95);
      hi = std::max(hi, p.mean + p.ci95);
    }
    std::sort(xs.begin(), xs.end());
    Canvas c(640, 420);
    detail::Axes a;
    a.x1 = c.width() - 30;
    a.y1 = c.height() - 50;
    a.xmin = xs.front() - (xs.size() > 1 ? 0.05 * (xs.back() - xs.front()) : 1.0);
    a.xmax = xs.back() + (xs.size() > 1 ? 0.05 * (xs.back() - xs.front()) : 1.0);
    a.ymin = std::max(0.0, std::floor(lo * 10.0) / 10.0);
    a.ymax = std::min(1.0, std::ceil(hi * 10.0) / 10.0);
    if (a.ymax <= a.ymin) a.ymax = a.ymin + 0.1;
    detail::draw_frame(c, a, "group " + group + "%", "N_FS", "DICE LOSS", xs);
    std::string legend;
    for (std::size_t si = 0; si < steps.size(); ++si) {
      const auto& step = steps[si];
      std::vector<CurvePoint> curve;
      for (const auto& p : gp)
        if (p.step == step) curve.push_back(p);
      std::sort(curve.begin(), curve.end(), [](const auto& l, const auto& r) { return l.n_fs < r.n_fs; });
      const Rgb col = detail::step_color(step);
      // Band: vertical spans interpolated between consecutive points.
      for (std::size_t i = 0; i < curve.size(); ++i) {
        const auto& p = curve[i];
        c.fill_rect(a.px(p.n_fs) - 1, a.py(p.mean + p.ci95), a.px(p.n_fs) + 1, a.py(p.mean - p.ci95),
                    Rgb{static_cast<std::uint8_t>((col.r + 510) / 3), static_cast<std::uint8_t>((col.g + 510) / 3),
                        static_cast<std::uint8_t>((col.b + 510) / 3)});
        if (i + 1 == curve.size()) break;
        const auto& q = curve[i + 1];
        for (int x = a.px(p.n_fs); x <= a.px(q.n_fs); ++x) {
          const double t = (x - a.px(p.n_fs)) / static_cast<double>(std::max(1, a.px(q.n_fs) - a.px(p.n_fs)));
          const double m = p.mean + t * (q.mean - p.mean), h = p.ci95 + t * (q.ci95 - p.ci95);
          for (int y = a.py(m + h); y <= a.py(m - h); ++y) c.blend(x, y, col, 0.2);
        }
      }
      for (std::size_t i = 0; i + 1 < curve.size(); ++i)
        c.line(a.px(curve[i].n_fs), a.py(curve[i].mean), a.px(curve[i + 1].n_fs), a.py(curve[i + 1].mean), col, 2);
      for (const auto& p : curve) c.fill_rect(a.px(p.n_fs) - 3, a.py(p.mean) - 3, a.px(p.n_fs) + 3, a.py(p.mean) + 3, col);
      const int ly = a.y0 + 4 + 14 * static_cast<int>(si);
      c.fill_rect(a.x1 - 70, ly, a.x1 - 58, ly + 6, col);
      c.text(a.x1 - 52, ly, step, kBlack);
      legend += (legend.empty() ? "" : ",") + step;
    }
    const std::string table = curve_table(gp);
    const auto png = out_dir / ("learning_curves_" + group + ".png");
    const auto csv = out_dir / ("learning_curves_" + group + ".csv");
    write_png(png, c, {{"Title", "Dice loss vs n_fs, group " + group}, {"legend", legend}, {"data", table}});
    std::ofstream(csv) << table;
    written.push_back(png);
  }
  return written;
}

/// Per-epoch validation loss curve of each step in one run.
struct LossSeries {
  std::string step;
  std::vector<double> val_loss;
};

inline void plot_loss_curves(const std::vector<LossSeries>& series, const std::filesystem::path& path) {
  if (series.empty()) throw std::invalid_argument("plot_loss_curves: no series");
  std::size_t longest = 1;
  double hi = 0.0;
  for (const auto& s : series) {
    longest = std::max(longest, s.val_loss.size());
    for (double v : s.val_loss) hi = std::max(hi, v);
  }
  Canvas c(640, 420);
  detail::Axes a;
  a.x1 = c.width() - 30;
  a.y1 = c.height() - 50;
  a.xmin = 0;
  a.xmax = static_cast<double>(longest);
  a.ymax = hi > 0 ? std::ceil(hi * 10.0) / 10.0 : 1.0;
  detail::draw_frame(c, a, "validation loss", "EPOCH", "LOSS", {0.0, static_cast<double>(longest)});
  const Rgb palette[] = {kBlack, kRed, kBlue, kGreen};
  std::string legend;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const Rgb col = s.step == "FS" || s.step == "MIL" ? detail::step_color(s.step) : palette[si % 4];
    for (std::size_t i = 0; i + 1 < s.val_loss.size(); ++i)
      c.line(a.px(static_cast<double>(i + 1)), a.py(s.val_loss[i]), a.px(static_cast<double>(i + 2)),
             a.py(s.val_loss[i + 1]), col, 2);
    const int ly = a.y0 + 4 + 14 * static_cast<int>(si);
    c.fill_rect(a.x1 - 70, ly, a.x1 - 58, ly + 6, col);
    c.text(a.x1 - 52, ly, s.step, kBlack);
    legend += (legend.empty() ? "" : ",") + s.step;
  }
  write_png(path, c, {{"Title", "validation loss per epoch"}, {"legend", legend}});
}

/// Boundary pixels of a binary mask: set pixels with a 4-neighbour outside the mask or
/// on the frame edge.
inline Mask contour(const Mask& m) {
  Mask out(m.rows(), m.cols());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      if (!m(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r == m.rows() - 1 || c == m.cols() - 1 || !m(r - 1, c) || !m(r + 1, c) ||
                        !m(r, c - 1) || !m(r, c + 1);
      out(r, c) = edge ? 1 : 0;
    }
  return out;
}

inline Mask binarize(const Map& p, double threshold = 0.5) {
  Mask out(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.size(); ++i) out.data()[i] = p.data()[i] >= threshold ? 1 : 0;
  return out;
}

inline constexpr int kOverlayScale = 4;  // A3 cells are drawn as 4x4 blocks

/// Three stacked panels: image with the ground-truth contour; FS prediction (>= 0.5) with
/// the downsampled ground-truth contour; MIL prediction likewise.
inline Canvas render_overlay(const data::SliceSample& s, const Map& fs_a3, const Map& mil_a3) {
  if (!s.pixel_mask) throw std::invalid_argument("render_overlay: sample has no mask");
  const Image& img = s.image;
  const int pw = std::max(img.cols(), fs_a3.cols() * kOverlayScale);
  const int ph1 = img.rows(), ph2 = fs_a3.rows() * kOverlayScale;
  Canvas c(pw, ph1 + 2 * ph2 + 4, kBlack);
  for (int r = 0; r < img.rows(); ++r)
    for (int col = 0; col < img.cols(); ++col) {
      const auto g = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(static_cast<double>(img(r, col)), 0.0, 1.0)));
      c.set(col, r, {g, g, g});
    }
  const Mask gt = contour(*s.pixel_mask);
  for (int r = 0; r < gt.rows(); ++r)
    for (int col = 0; col < gt.cols(); ++col)
      if (gt(r, col)) c.set(col, r, kGreen);
  const Mask small = contour(losses::downsample_mask(*s.pixel_mask, fs_a3.rows(), fs_a3.cols()));
  auto panel = [&](const Map& a3, int y0) {
    const Mask pred = binarize(a3);
    for (int r = 0; r < a3.rows(); ++r)
      for (int col = 0; col < a3.cols(); ++col) {
        const Rgb v = pred(r, col) ? kRed : Rgb{40, 40, 40};
        c.fill_rect(col * kOverlayScale, y0 + r * kOverlayScale, (col + 1) * kOverlayScale - 1,
                    y0 + (r + 1) * kOverlayScale - 1, v);
        if (small(r, col))
          c.fill_rect(col * kOverlayScale + 1, y0 + r * kOverlayScale + 1, (col + 1) * kOverlayScale - 2,
                      y0 + (r + 1) * kOverlayScale - 2, kGreen);
      }
  };
  panel(fs_a3, ph1 + 2);
  panel(mil_a3, ph1 + ph2 + 4);
  return c;
}

inline std::string overlay_filename(const data::SliceSample& s) {
  return "overlay_" + s.patient_id + "_slice" + std::to_string(s.slice_index) + ".png";
}

/// One PNG per masked sample; returns the written paths.
inline std::vector<std::filesystem::path> render_overlays(const model::SegModel& fs_model,
                                                          const model::SegModel& mil_model,
                                                          const std::vector<data::SliceSample>& samples,
                                                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> out;
  for (const auto& s : samples) {
    if (!s.pixel_mask) continue;
    const auto path = out_dir / overlay_filename(s);
    write_png(path, render_overlay(s, fs_model.segment(s.image).a3, mil_model.segment(s.image).a3),
              {{"patient_id", s.patient_id}, {"slice_index", std::to_string(s.slice_index)}});
    out.push_back(path);
  }
  return out;
}

}  // namespace wsseg::eval
