#pragma once

#include <stdexcept>
#include <string>

#include "wsseg/util/grid.hpp"

namespace wsseg::model {

inline constexpr int kPoolWindow = 10;

inline int pooled_extent(int in, int window = kPoolWindow) { return (in - window) / window + 1; }

/// Valid max pooling with a square window and equal stride; trailing rows and
/// columns beyond the last full window are dropped.
inline Map mil_pool(const Map& a3, int window = kPoolWindow) {
  if (window < 1) throw std::invalid_argument("mil_pool: window must be positive");
  if (a3.rows() < window || a3.cols() < window)
    throw std::invalid_argument("mil_pool: map " + std::to_string(a3.rows()) + "x" + std::to_string(a3.cols()) +
                                " is smaller than the " + std::to_string(window) + "x" + std::to_string(window) +
                                " window");
  Map out(pooled_extent(a3.rows(), window), pooled_extent(a3.cols(), window));
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) {
      double best = a3(i * window, j * window);
      for (int r = i * window; r < (i + 1) * window; ++r)
        for (int c = j * window; c < (j + 1) * window; ++c)
          if (a3(r, c) > best) best = a3(r, c);
      out(i, j) = best;
    }
  return out;
}

/// Routes pooled-cell gradients to the first (row-major) maximiser of each window.
inline Map mil_pool_backward(const Map& a3, const Map& d_pooled, int window = kPoolWindow) {
  Map d(a3.rows(), a3.cols());
  for (int i = 0; i < d_pooled.rows(); ++i)
    for (int j = 0; j < d_pooled.cols(); ++j) {
      int br = i * window, bc = j * window;
      for (int r = i * window; r < (i + 1) * window; ++r)
        for (int c = j * window; c < (j + 1) * window; ++c)
          if (a3(r, c) > a3(br, bc)) {
            br = r;
            bc = c;
          }
      d(br, bc) += d_pooled(i, j);
    }
  return d;
}

}  // namespace wsseg::model
