#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace wsseg::nn {

/// Kernels carry the l2 penalty; biases (and per-channel affine terms) do not.
enum class ParamKind { kernel, bias };

inline const char* to_string(ParamKind k) { return k == ParamKind::kernel ? "kernel" : "bias"; }

struct Param {
  std::string name;
  ParamKind kind = ParamKind::kernel;
  std::vector<int> shape;
  std::vector<double> value;
};

/// Trainable-parameter registry (the model's theta).
class ParamStore {
 public:
  int add(std::string name, ParamKind kind, std::vector<int> shape) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                    [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    int id = static_cast<int>(params_.size());
    index_.emplace(name, id);
    params_.push_back(Param{std::move(name), kind, std::move(shape), std::vector<double>(n, 0.0)});
    return id;
  }

  std::size_t count() const { return params_.size(); }
  Param& operator[](int id) { return params_[static_cast<std::size_t>(id)]; }
  const Param& operator[](int id) const { return params_[static_cast<std::size_t>(id)]; }
  std::span<double> values(int id) { return params_[static_cast<std::size_t>(id)].value; }
  std::span<const double> values(int id) const { return params_[static_cast<std::size_t>(id)].value; }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  std::size_t total_size(ParamKind kind) const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.kind == kind) n += p.value.size();
    return n;
  }

  /// Flat copy of every value, used for best-weight checkpoints in memory.
  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> s;
    s.reserve(params_.size());
    for (const auto& p : params_) s.push_back(p.value);
    return s;
  }

  void restore(const std::vector<std::vector<double>>& s) {
    if (s.size() != params_.size()) throw std::invalid_argument("ParamStore::restore: snapshot size mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i].size() != params_[i].value.size())
        throw std::invalid_argument("ParamStore::restore: size mismatch for " + params_[i].name);
      params_[i].value = s[i];
    }
  }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;
};

/// Gradient buffers laid out parallel to a ParamStore.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& store) {
    grads_.reserve(store.count());
    for (const auto& p : store.all()) grads_.emplace_back(p.value.size(), 0.0);
  }

  std::span<double> operator[](int id) { return grads_[static_cast<std::size_t>(id)]; }
  std::span<const double> operator[](int id) const { return grads_[static_cast<std::size_t>(id)]; }
  std::size_t count() const { return grads_.size(); }

  void zero() {
    for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
  }

  void scale(double s) {
    for (auto& g : grads_)
      for (auto& v : g) v *= s;
  }

  void add(const Gradients& other) {
    for (std::size_t i = 0; i < grads_.size(); ++i)
      for (std::size_t j = 0; j < grads_[i].size(); ++j) grads_[i][j] += other.grads_[i][j];
  }

 private:
  std::vector<std::vector<double>> grads_;
};

}  // namespace wsseg::nn
