#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "wsseg/data/types.hpp"

namespace wsseg::data {

inline constexpr double kDefaultBrightThreshold = 0.1;
inline constexpr int kDefaultMinBrightPixels = 100;
inline constexpr int kSliceRows = 170;
inline constexpr int kSliceCols = 140;

struct PreprocessOptions {
  double bright_threshold = kDefaultBrightThreshold;  // fraction of the series max
  int min_bright_pixels = kDefaultMinBrightPixels;
  int rows = kSliceRows;
  int cols = kSliceCols;
};

inline float series_max(const VolumeSeries& s) {
  float m = 0.0f;
  for (const auto& img : s.slices)
    if (!img.empty()) m = std::max(m, grid_max(img));
  return m;
}

/// Drops slices with fewer than `min_bright_pixels` pixels above bright_threshold * series max.
inline VolumeSeries filter_boundary_slices(const VolumeSeries& series, double bright_threshold, int min_bright_pixels) {
  if (bright_threshold < 0 || min_bright_pixels < 0) throw std::invalid_argument("filter thresholds must be >= 0");
  series.validate();
  const double cut = bright_threshold * series_max(series);
  VolumeSeries out;
  out.patient_id = series.patient_id;
  if (series.masks) out.masks.emplace();
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& img = series.slices[i];
    const auto bright = std::count_if(img.begin(), img.end(), [&](float v) { return v > cut; });
    if (bright < min_bright_pixels) continue;
    out.slices.push_back(img);
    if (series.masks) out.masks->push_back((*series.masks)[i]);
    out.slice_indices.push_back(series.index_of(i));
  }
  if (out.slices.empty()) throw DataError(series.patient_id + ": every slice was removed as a boundary slice");
  return out;
}

/// Crops every slice (and mask) to the tightest box holding all pixels above
/// bright_threshold * series max across the series.
inline VolumeSeries align_and_crop(const VolumeSeries& series, double bright_threshold = kDefaultBrightThreshold) {
  series.validate();
  if (series.slices.empty()) throw DataError(series.patient_id + ": cannot crop an empty series");
  const double cut = bright_threshold * series_max(series);
  int r0 = 1 << 30, r1 = -1, c0 = 1 << 30, c1 = -1;
  for (const auto& img : series.slices)
    for (int r = 0; r < img.rows(); ++r)
      for (int c = 0; c < img.cols(); ++c)
        if (img(r, c) > cut) {
          r0 = std::min(r0, r);
          r1 = std::max(r1, r);
          c0 = std::min(c0, c);
          c1 = std::max(c1, c);
        }
  if (r1 < r0 || c1 < c0) throw DataError(series.patient_id + ": degenerate crop box (no bright pixels)");
  const int h = r1 - r0 + 1, w = c1 - c0 + 1;
  auto crop = [&](const auto& g) {
    std::remove_cvref_t<decltype(g)> out(h, w);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) out(r, c) = g(r + r0, c + c0);
    return out;
  };
  VolumeSeries out;
  out.patient_id = series.patient_id;
  out.slice_indices = series.slice_indices;
  for (const auto& img : series.slices) out.slices.push_back(crop(img));
  if (series.masks) {
    out.masks.emplace();
    for (const auto& m : *series.masks) out.masks->push_back(crop(m));
  }
  return out;
}

/// Min-max scales to [0, 1]; a constant image maps to zeros.
inline Image normalize_min_max(const Image& img) {
  Image out(img.rows(), img.cols());
  if (img.empty()) return out;
  const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
  const float range = *hi - *lo;
  if (range <= 0.0f) return out;
  for (std::size_t i = 0; i < img.size(); ++i) out.data()[i] = (img.data()[i] - *lo) / range;
  return out;
}

/// Bilinear resize with half-pixel centres and edge clamping.
inline Image resize_bilinear(const Image& src, int rows, int cols) {
  if (src.empty()) throw std::invalid_argument("resize_bilinear: empty source");
  Image out(rows, cols);
  const double sy = static_cast<double>(src.rows()) / rows;
  const double sx = static_cast<double>(src.cols()) / cols;
  for (int r = 0; r < rows; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.rows() - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.rows() - 1);
    const double wy = fy - y0;
    for (int c = 0; c < cols; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.cols() - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.cols() - 1);
      const double wx = fx - x0;
      const double top = src(y0, x0) * (1 - wx) + src(y0, x1) * wx;
      const double bot = src(y1, x0) * (1 - wx) + src(y1, x1) * wx;
      out(r, c) = static_cast<float>(top * (1 - wy) + bot * wy);
    }
  }
  return out;
}

/// Nearest-neighbour resize; output re-binarised to {0, 1}.
inline Mask resize_nearest(const Mask& src, int rows, int cols) {
  if (src.empty()) throw std::invalid_argument("resize_nearest: empty source");
  Mask out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const int y = std::min(src.rows() - 1, static_cast<int>((r + 0.5) * src.rows() / rows));
    for (int c = 0; c < cols; ++c) {
      const int x = std::min(src.cols() - 1, static_cast<int>((c + 0.5) * src.cols() / cols));
      out(r, c) = src(y, x) != 0 ? 1 : 0;
    }
  }
  return out;
}

/// Positive mask pixels over brain pixels (intensity above bright_threshold * image max).
inline double lesion_fraction(const Mask& mask, const Image& image, double bright_threshold = kDefaultBrightThreshold) {
  if (!mask.same_shape(image)) throw DataError("lesion_fraction: mask and image shapes differ");
  const std::size_t lesion = count_positive(mask);
  if (lesion == 0) return 0.0;
  const double cut = bright_threshold * grid_max(image);
  const auto brain = std::count_if(image.begin(), image.end(), [&](float v) { return v > cut; });
  if (brain == 0) throw DataError("lesion_fraction: image has no brain pixels");
  return std::min(1.0, static_cast<double>(lesion) / static_cast<double>(brain));
}

/// Normalises, resizes and labels every slice of a cropped series.
inline std::vector<SliceSample> resize_series(const VolumeSeries& series, int rows = kSliceRows, int cols = kSliceCols,
                                              double bright_threshold = kDefaultBrightThreshold) {
  series.validate();
  std::vector<SliceSample> out;
  out.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    SliceSample s;
    s.patient_id = series.patient_id;
    s.slice_index = series.index_of(i);
    s.image = resize_bilinear(normalize_min_max(series.slices[i]), rows, cols);
    if (series.masks) {
      s.pixel_mask = resize_nearest((*series.masks)[i], rows, cols);
      s.label = count_positive(*s.pixel_mask) > 0 ? 1 : 0;
      s.lesion_fraction = s.label == 1 ? lesion_fraction(*s.pixel_mask, s.image, bright_threshold) : 0.0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// filter -> crop -> normalise/resize.
inline std::vector<SliceSample> preprocess_series(const VolumeSeries& series, const PreprocessOptions& opts = {}) {
  auto filtered = filter_boundary_slices(series, opts.bright_threshold, opts.min_bright_pixels);
  auto cropped = align_and_crop(filtered, opts.bright_threshold);
  return resize_series(cropped, opts.rows, opts.cols, opts.bright_threshold);
}

}  // namespace wsseg::data
