#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsseg/util/grid.hpp"

namespace wsseg::losses {

inline constexpr double kDefaultLogClamp = 1e-7;

/// N pooled grids with image-level labels and the top-K positive count.
struct MILBatch {
  std::vector<Map> pooled;
  std::vector<int> labels;
  int k = 4;
};

namespace detail {

inline void check_batch(const MILBatch& b, double eps) {
  if (b.pooled.size() != b.labels.size()) throw std::invalid_argument("mil_loss: pooled/labels length mismatch");
  if (b.pooled.empty()) throw std::invalid_argument("mil_loss: empty batch");
  if (!(eps > 0.0)) throw std::invalid_argument("mil_loss: eps must be positive");
  const std::size_t cells = b.pooled.front().size();
  for (const auto& g : b.pooled)
    if (g.size() != cells) throw std::invalid_argument("mil_loss: grids differ in size");
  if (b.k < 1 || static_cast<std::size_t>(b.k) > cells)
    throw std::invalid_argument("mil_loss: K=" + std::to_string(b.k) + " outside [1, " + std::to_string(cells) + "]");
  for (int y : b.labels)
    if (y != 0 && y != 1) throw std::invalid_argument("mil_loss: labels must be 0 or 1");
}

inline double clamp_log(double x, double eps) { return std::log(std::clamp(x, eps, 1.0)); }

}  // namespace detail

/// Row-major indices of the grid sorted by value, descending; ties keep the smaller index first.
inline std::vector<std::size_t> descending_order(const Map& g) {
  std::vector<std::size_t> idx(g.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return g.data()[a] > g.data()[b]; });
  return idx;
}

/// Top-K multiple-instance loss, averaged over all pooled cells of the batch.
inline double mil_loss(const MILBatch& b, double eps = kDefaultLogClamp) {
  detail::check_batch(b, eps);
  double total = 0;
  std::size_t terms = 0;
  for (std::size_t n = 0; n < b.pooled.size(); ++n) {
    const Map& g = b.pooled[n];
    const auto order = descending_order(g);
    for (std::size_t j = 0; j < order.size(); ++j) {
      const double a = g.data()[order[j]];
      const bool positive = b.labels[n] == 1 && j < static_cast<std::size_t>(b.k);
      total -= positive ? detail::clamp_log(a, eps) : detail::clamp_log(1.0 - a, eps);
    }
    terms += order.size();
  }
  return total / static_cast<double>(terms);
}

/// Subgradient w.r.t. each pooled value with top-K membership fixed by the forward sort.
/// Clamped log arguments contribute zero gradient.
inline std::vector<Map> mil_loss_grad(const MILBatch& b, double eps = kDefaultLogClamp) {
  detail::check_batch(b, eps);
  const double scale = 1.0 / static_cast<double>(b.pooled.size() * b.pooled.front().size());
  std::vector<Map> grads;
  grads.reserve(b.pooled.size());
  for (std::size_t n = 0; n < b.pooled.size(); ++n) {
    const Map& g = b.pooled[n];
    Map d(g.rows(), g.cols());
    const auto order = descending_order(g);
    for (std::size_t j = 0; j < order.size(); ++j) {
      const double a = g.data()[order[j]];
      const bool positive = b.labels[n] == 1 && j < static_cast<std::size_t>(b.k);
      if (positive) {
        if (a > eps && a < 1.0) d.data()[order[j]] = -scale / a;
      } else {
        const double q = 1.0 - a;
        if (q > eps && q < 1.0) d.data()[order[j]] = scale / q;
      }
    }
    grads.push_back(std::move(d));
  }
  return grads;
}

/// Mean binary cross-entropy of probabilities against binary targets (same clamp).
inline double binary_cross_entropy(double p, int y, double eps = kDefaultLogClamp) {
  return y == 1 ? -detail::clamp_log(p, eps) : -detail::clamp_log(1.0 - p, eps);
}

}  // namespace wsseg::losses
