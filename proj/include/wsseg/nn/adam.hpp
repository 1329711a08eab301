#pragma once

#include <cmath>
#include <vector>

#include "wsseg/nn/params.hpp"

namespace wsseg::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over a subset of a ParamStore. Moments start at zero for every new instance.
class Adam {
 public:
  Adam(const ParamStore& ps, std::vector<int> trainable, AdamOptions opts)
      : opts_(opts), trainable_(std::move(trainable)) {
    for (int id : trainable_) {
      m_.emplace_back(ps[id].value.size(), 0.0);
      v_.emplace_back(ps[id].value.size(), 0.0);
    }
  }

  const AdamOptions& options() const { return opts_; }
  long steps() const { return t_; }

  void step(ParamStore& ps, const Gradients& grads) {
    ++t_;
    const double lr = opts_.learning_rate;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < trainable_.size(); ++k) {
      const int id = trainable_[k];
      auto p = ps.values(id);
      auto g = grads[id];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
        const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts_.epsilon);
        if (update != 0.0) p[i] -= update;
      }
    }
  }

 private:
  AdamOptions opts_;
  std::vector<int> trainable_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

}  // namespace wsseg::nn
