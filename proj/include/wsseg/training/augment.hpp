#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "wsseg/data/types.hpp"
#include "wsseg/training/config.hpp"

namespace wsseg::training {

/// Rotates about the image centre by `angle_deg`, then translates by (shift_rows, shift_cols)
/// pixels. Image: bilinear with zero fill; mask: nearest neighbour, binary.
inline data::SliceSample apply_rigid_transform(const data::SliceSample& s, double angle_deg, double shift_rows,
                                               double shift_cols) {
  if (angle_deg == 0.0 && shift_rows == 0.0 && shift_cols == 0.0) return s;
  data::SliceSample out = s;
  const int rows = s.image.rows(), cols = s.image.cols();
  const double cy = (rows - 1) / 2.0, cx = (cols - 1) / 2.0;
  const double th = angle_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  // Inverse map: source = R^-1 (dest - centre - shift) + centre.
  auto source = [&](int r, int c) {
    const double y = r - cy - shift_rows, x = c - cx - shift_cols;
    return std::pair{ct * y + st * x + cy, -st * y + ct * x + cx};
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const auto [sy, sx] = source(r, c);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const double wy = sy - y0, wx = sx - x0;
      auto px = [&](int y, int x) -> double {
        return (y < 0 || y >= rows || x < 0 || x >= cols) ? 0.0 : s.image(y, x);
      };
      out.image(r, c) = static_cast<float>((px(y0, x0) * (1 - wx) + px(y0, x0 + 1) * wx) * (1 - wy) +
                                           (px(y0 + 1, x0) * (1 - wx) + px(y0 + 1, x0 + 1) * wx) * wy);
      if (s.pixel_mask) {
        const int my = static_cast<int>(std::lround(sy)), mx = static_cast<int>(std::lround(sx));
        (*out.pixel_mask)(r, c) =
            (my >= 0 && my < rows && mx >= 0 && mx < cols && (*s.pixel_mask)(my, mx) != 0) ? 1 : 0;
      }
    }
  if (out.pixel_mask) out.label = count_positive(*out.pixel_mask) > 0 ? 1 : 0;
  return out;
}

/// Random rotation in +-max_rotation_deg and translation in +-max_shift of each axis,
/// identical for image and mask; deterministic in `seed`.
inline data::SliceSample augment(const data::SliceSample& s, std::uint64_t seed, const AugmentConfig& cfg = {}) {
  if (!cfg.enabled) return s;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double angle = cfg.max_rotation_deg * unit(rng);
  const double dy = cfg.max_shift * s.image.rows() * unit(rng);
  const double dx = cfg.max_shift * s.image.cols() * unit(rng);
  return apply_rigid_transform(s, angle, dy, dx);
}

}  // namespace wsseg::training
