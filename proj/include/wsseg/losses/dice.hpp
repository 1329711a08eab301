#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wsseg/util/grid.hpp"

namespace wsseg::losses {

namespace detail {

inline void check_dice_inputs(const Map& p, const Map& t) {
  if (!p.same_shape(t))
    throw std::invalid_argument("dice: shape mismatch " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                                " vs " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
  for (double v : p)
    if (std::isnan(v)) throw std::invalid_argument("dice: NaN in prediction");
  for (double v : t)
    if (std::isnan(v)) throw std::invalid_argument("dice: NaN in target");
}

}  // namespace detail

/// Smoothed Dice index (2 sum(PT) + 1) / (sum(P^2) + sum(T^2) + 1).
inline double dice_index(const Map& p, const Map& t) {
  detail::check_dice_inputs(p, t);
  double pt = 0, pp = 0, tt = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p.data()[i], b = t.data()[i];
    pt += a * b;
    pp += a * a;
    tt += b * b;
  }
  return (2.0 * pt + 1.0) / (pp + tt + 1.0);
}

inline double dice_loss(const Map& p, const Map& t) { return 1.0 - dice_index(p, t); }

/// d(dice_loss)/dP.
inline Map dice_loss_grad(const Map& p, const Map& t) {
  detail::check_dice_inputs(p, t);
  double pt = 0, pp = 0, tt = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p.data()[i], b = t.data()[i];
    pt += a * b;
    pp += a * a;
    tt += b * b;
  }
  const double num = 2.0 * pt + 1.0;
  const double den = pp + tt + 1.0;
  Map g(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.size(); ++i)
    g.data()[i] = -(2.0 * t.data()[i] * den - num * 2.0 * p.data()[i]) / (den * den);
  return g;
}

/// Area-weighted downsampling of a binary mask onto a coarser grid; a cell is
/// positive when its covered fraction is at least one half.
inline Mask downsample_mask(const Mask& full, int rows, int cols) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("downsample_mask: target must be non-empty");
  Mask out(rows, cols);
  const double sy = static_cast<double>(full.rows()) / rows;
  const double sx = static_cast<double>(full.cols()) / cols;
  for (int i = 0; i < rows; ++i) {
    const double y0 = i * sy, y1 = (i + 1) * sy;
    for (int j = 0; j < cols; ++j) {
      const double x0 = j * sx, x1 = (j + 1) * sx;
      double covered = 0, area = 0;
      for (int r = static_cast<int>(std::floor(y0)); r < static_cast<int>(std::ceil(y1)) && r < full.rows(); ++r) {
        const double wy = std::min<double>(r + 1, y1) - std::max<double>(r, y0);
        if (wy <= 0) continue;
        for (int c = static_cast<int>(std::floor(x0)); c < static_cast<int>(std::ceil(x1)) && c < full.cols(); ++c) {
          const double wx = std::min<double>(c + 1, x1) - std::max<double>(c, x0);
          if (wx <= 0) continue;
          area += wy * wx;
          if (full(r, c) != 0) covered += wy * wx;
        }
      }
      out(i, j) = (area > 0 && covered / area >= 0.5 - 1e-12) ? 1 : 0;
    }
  }
  return out;
}

inline Map mask_to_map(const Mask& m) {
  Map out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = m.data()[i] != 0 ? 1.0 : 0.0;
  return out;
}

}  // namespace wsseg::losses
