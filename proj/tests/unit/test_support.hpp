#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "wsseg/util/grid.hpp"

namespace wsseg::testing {

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Central difference of f around x[i] with step h (x restored afterwards).
template <typename Vec>
double central_difference(Vec& x, std::size_t i, double h, const std::function<double()>& f) {
  const double orig = x[i];
  x[i] = orig + h;
  const double up = f();
  x[i] = orig - h;
  const double down = f();
  x[i] = orig;
  return (up - down) / (2.0 * h);
}

inline Map random_map(int rows, int cols, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Map m(rows, cols);
  for (auto& v : m) v = d(rng);
  return m;
}

inline Map random_binary_map(int rows, int cols, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution d(p);
  Map m(rows, cols);
  for (auto& v : m) v = d(rng) ? 1.0 : 0.0;
  return m;
}

}  // namespace wsseg::testing
