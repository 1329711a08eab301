#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsseg/nn/tensor.hpp"
#include "wsseg/util/grid.hpp"

namespace wsseg::model {

/// Backbone feature maps: M1 deepest (h x w), M2 at 2h x 2w, M3 at 4h x 4w.
struct FeaturePyramid {
  nn::Tensor m1;
  nn::Tensor m2;
  nn::Tensor m3;

  /// Throws when the 1:2:4 spatial contract or finiteness is violated.
  void validate() const {
    const auto& a = m1.shape();
    const auto& b = m2.shape();
    const auto& c = m3.shape();
    if (a.height < 1 || a.width < 1 || b.height != 2 * a.height || b.width != 2 * a.width ||
        c.height != 4 * a.height || c.width != 4 * a.width)
      throw std::invalid_argument("feature pyramid violates the 1:2:4 contract: " + nn::to_string(a) + " " +
                                  nn::to_string(b) + " " + nn::to_string(c));
    for (const auto* t : {&m1, &m2, &m3})
      for (double v : t->values())
        if (!std::isfinite(v)) throw std::invalid_argument("feature pyramid contains non-finite values");
  }
};

struct FusionWeights {
  std::vector<double> w1;
  std::vector<double> w2;
  std::vector<double> w3;
};

/// Non-owning view, used when the weights live in a ParamStore.
struct FusionWeightsView {
  std::span<const double> w1;
  std::span<const double> w2;
  std::span<const double> w3;

  FusionWeightsView() = default;
  FusionWeightsView(std::span<const double> a, std::span<const double> b, std::span<const double> c)
      : w1(a), w2(b), w3(c) {}
  FusionWeightsView(const FusionWeights& w) : w1(w.w1), w2(w.w2), w3(w.w3) {}  // NOLINT
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Nearest-neighbour x2 replication along both axes.
inline Map upsample2(const Map& a) {
  Map out(2 * a.rows(), 2 * a.cols());
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) = a(r / 2, c / 2);
  return out;
}

/// Adjoint of upsample2: sums each 2x2 block.
inline Map upsample2_adjoint(const Map& g) {
  Map out(g.rows() / 2, g.cols() / 2);
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) out(r / 2, c / 2) += g(r, c);
  return out;
}

inline Map channel_weighted_sum(const nn::Tensor& m, std::span<const double> w) {
  if (static_cast<int>(w.size()) != m.channels())
    throw std::invalid_argument("fusion weight length " + std::to_string(w.size()) + " does not match " +
                                std::to_string(m.channels()) + " channels");
  Map out(m.height(), m.width());
  const std::size_t plane = m.shape().plane();
  for (int i = 0; i < m.channels(); ++i) {
    const double* src = m.channel(i);
    const double wi = w[static_cast<std::size_t>(i)];
    for (std::size_t p = 0; p < plane; ++p) out.data()[p] += wi * src[p];
  }
  return out;
}

/// Intermediate maps of the three-step fusion, kept for the backward pass.
struct FusionTrace {
  Map a1;
  Map a2;
  Map z3;  // pre-sigmoid A3
  Map a3;
};

inline FusionTrace fuse_trace(const FeaturePyramid& pyr, FusionWeightsView w) {
  pyr.validate();
  FusionTrace t;
  t.a1 = channel_weighted_sum(pyr.m1, w.w1);
  t.a2 = channel_weighted_sum(pyr.m2, w.w2);
  const Map up1 = upsample2(t.a1);
  for (std::size_t i = 0; i < t.a2.size(); ++i) t.a2.data()[i] += up1.data()[i];
  t.z3 = channel_weighted_sum(pyr.m3, w.w3);
  const Map up2 = upsample2(t.a2);
  for (std::size_t i = 0; i < t.z3.size(); ++i) t.z3.data()[i] += up2.data()[i];
  t.a3 = Map(t.z3.rows(), t.z3.cols());
  for (std::size_t i = 0; i < t.z3.size(); ++i) t.a3.data()[i] = sigmoid(t.z3.data()[i]);
  return t;
}

/// Pre-sigmoid fused map; linear in each feature map for fixed weights.
inline Map fuse_pre(const FeaturePyramid& pyr, FusionWeightsView w) { return fuse_trace(pyr, w).z3; }

/// Dense probability map A3.
inline Map fuse(const FeaturePyramid& pyr, FusionWeightsView w) { return fuse_trace(pyr, w).a3; }

struct FusionGradients {
  std::vector<double> w1, w2, w3;
  nn::Tensor m1, m2, m3;
};

/// Back-propagates d(loss)/d(A3) through the sigmoid and the fusion recursion.
inline FusionGradients fuse_backward(const FeaturePyramid& pyr, FusionWeightsView w, const FusionTrace& t,
                                     const Map& d_a3) {
  if (!d_a3.same_shape(t.a3)) throw std::invalid_argument("fuse_backward: gradient shape mismatch");
  Map dz3(d_a3.rows(), d_a3.cols());
  for (std::size_t i = 0; i < dz3.size(); ++i) {
    const double s = t.a3.data()[i];
    dz3.data()[i] = d_a3.data()[i] * s * (1.0 - s);
  }
  FusionGradients g;
  auto level = [](const nn::Tensor& m, std::span<const double> wl, const Map& dz, std::vector<double>& dw,
                  nn::Tensor& dm) {
    const std::size_t plane = m.shape().plane();
    dw.assign(static_cast<std::size_t>(m.channels()), 0.0);
    dm = nn::Tensor(m.shape());
    for (int i = 0; i < m.channels(); ++i) {
      dw[static_cast<std::size_t>(i)] = nn::detail::dot(m.channel(i), dz.data(), plane);
      const double wi = wl[static_cast<std::size_t>(i)];
      double* dst = dm.channel(i);
      for (std::size_t p = 0; p < plane; ++p) dst[p] = wi * dz.data()[p];
    }
  };
  level(pyr.m3, w.w3, dz3, g.w3, g.m3);
  const Map da2 = upsample2_adjoint(dz3);
  level(pyr.m2, w.w2, da2, g.w2, g.m2);
  const Map da1 = upsample2_adjoint(da2);
  level(pyr.m1, w.w1, da1, g.w1, g.m1);
  return g;
}

}  // namespace wsseg::model
