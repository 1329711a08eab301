#pragma once

#include <span>

#include "wsseg/nn/params.hpp"

namespace wsseg::losses {

/// lambda * sum of squared kernel entries; bias-kind parameters are excluded.
/// When `only` is non-empty, just those parameter ids are considered.
inline double l2_kernel_penalty(const nn::ParamStore& ps, double lambda, std::span<const int> only = {}) {
  double s = 0;
  auto visit = [&](const nn::Param& p) {
    if (p.kind != nn::ParamKind::kernel) return;
    for (double v : p.value) s += v * v;
  };
  if (only.empty())
    for (const auto& p : ps.all()) visit(p);
  else
    for (int id : only) visit(ps[id]);
  return lambda * s;
}

inline void l2_kernel_penalty_grad(const nn::ParamStore& ps, double lambda, nn::Gradients& grads,
                                   std::span<const int> only = {}) {
  auto visit = [&](int id) {
    const auto& p = ps[id];
    if (p.kind != nn::ParamKind::kernel) return;
    auto g = grads[id];
    for (std::size_t i = 0; i < p.value.size(); ++i) g[i] += 2.0 * lambda * p.value[i];
  };
  if (only.empty())
    for (int id = 0; id < static_cast<int>(ps.count()); ++id) visit(id);
  else
    for (int id : only) visit(id);
}

}  // namespace wsseg::losses
