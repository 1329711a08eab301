#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsseg/nn/params.hpp"
#include "wsseg/nn/tensor.hpp"

namespace wsseg::nn {

/// Spatial sliding-window geometry, used for shape and receptive-field bookkeeping.
struct Window {
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int output_extent(int in) const {
    const int span = in + 2 * pad - kernel;
    return in <= 0 || span < 0 ? 0 : span / stride + 1;
  }
};

/// A node operation in a feed-forward graph. Backward passes accumulate into the
/// input-gradient tensors (entries may be null when that gradient is not needed).
class Op {
 public:
  virtual ~Op() = default;
  virtual std::string kind() const = 0;
  virtual Shape3 output_shape(std::span<const Shape3> in) const = 0;
  virtual void forward(std::span<const Tensor* const> in, Tensor& out, const ParamStore& ps) const = 0;
  virtual void backward(std::span<const Tensor* const> in, const Tensor& out, const Tensor& dout,
                        std::span<Tensor* const> din, const ParamStore& ps, Gradients& grads) const = 0;
  virtual void initialize(ParamStore&, std::mt19937_64&) const {}
  /// nullopt for pointwise ops.
  virtual std::optional<Window> window() const { return std::nullopt; }
};

namespace detail {

inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline void expect_inputs(std::span<const Shape3> in, std::size_t n, const std::string& what) {
  if (in.size() != n) throw std::invalid_argument(what + ": expected " + std::to_string(n) + " input(s)");
}

}  // namespace detail

class Conv2d final : public Op {
 public:
  Conv2d(ParamStore& ps, const std::string& name, int in_channels, int out_channels, int kernel, int stride,
         int pad, bool bias)
      : in_(in_channels), out_(out_channels), win_{kernel, stride, pad} {
    kernel_id_ = ps.add(name + ".kernel", ParamKind::kernel, {out_channels, in_channels, kernel, kernel});
    if (bias) bias_id_ = ps.add(name + ".bias", ParamKind::bias, {out_channels});
  }

  std::string kind() const override { return "conv2d"; }
  std::optional<Window> window() const override { return win_; }
  int kernel_param() const { return kernel_id_; }
  int bias_param() const { return bias_id_; }

  Shape3 output_shape(std::span<const Shape3> in) const override {
    detail::expect_inputs(in, 1, "conv2d");
    if (in[0].channels != in_)
      throw std::invalid_argument("conv2d: expected " + std::to_string(in_) + " input channels, got " +
                                  std::to_string(in[0].channels));
    Shape3 s{out_, win_.output_extent(in[0].height), win_.output_extent(in[0].width)};
    if (s.height <= 0 || s.width <= 0) throw std::invalid_argument("conv2d: input too small " + to_string(in[0]));
    return s;
  }

  void initialize(ParamStore& ps, std::mt19937_64& rng) const override {
    // He-normal for ReLU stacks.
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in_ * win_.kernel * win_.kernel)));
    for (auto& v : ps.values(kernel_id_)) v = dist(rng);
    if (bias_id_ >= 0)
      for (auto& v : ps.values(bias_id_)) v = 0.0;
  }

  void forward(std::span<const Tensor* const> in, Tensor& out, const ParamStore& ps) const override {
    const Tensor& x = *in[0];
    Shape3 os = output_shape(std::span<const Shape3>(&x.shape(), 1));
    out = Tensor(os);
    const std::size_t plane = os.plane();
    const std::size_t rows = static_cast<std::size_t>(in_) * win_.kernel * win_.kernel;
    std::vector<double> scratch;
    const double* col = im2col(x, os, scratch);
    auto w = ps.values(kernel_id_);
    for (int oc = 0; oc < out_; ++oc) {
      double* o = out.channel(oc);
      if (bias_id_ >= 0) std::fill(o, o + plane, ps.values(bias_id_)[oc]);
      const double* wrow = w.data() + static_cast<std::size_t>(oc) * rows;
      for (std::size_t r = 0; r < rows; ++r) {
        if (wrow[r] != 0.0) detail::axpy(wrow[r], col + r * plane, o, plane);
      }
    }
  }

  void backward(std::span<const Tensor* const> in, const Tensor& out, const Tensor& dout,
                std::span<Tensor* const> din, const ParamStore& ps, Gradients& grads) const override {
    const Tensor& x = *in[0];
    const Shape3& os = out.shape();
    const std::size_t plane = os.plane();
    const std::size_t rows = static_cast<std::size_t>(in_) * win_.kernel * win_.kernel;
    std::vector<double> scratch;
    const double* col = im2col(x, os, scratch);
    auto gw = grads[kernel_id_];
    for (int oc = 0; oc < out_; ++oc) {
      const double* d = dout.channel(oc);
      double* grow = gw.data() + static_cast<std::size_t>(oc) * rows;
      for (std::size_t r = 0; r < rows; ++r) grow[r] += detail::dot(d, col + r * plane, plane);
      if (bias_id_ >= 0) {
        double s = 0;
        for (std::size_t i = 0; i < plane; ++i) s += d[i];
        grads[bias_id_][oc] += s;
      }
    }
    if (din.empty() || din[0] == nullptr) return;
    auto w = ps.values(kernel_id_);
    std::vector<double> dcol(rows * plane, 0.0);
    for (int oc = 0; oc < out_; ++oc) {
      const double* d = dout.channel(oc);
      const double* wrow = w.data() + static_cast<std::size_t>(oc) * rows;
      for (std::size_t r = 0; r < rows; ++r)
        if (wrow[r] != 0.0) detail::axpy(wrow[r], d, dcol.data() + r * plane, plane);
    }
    col2im(dcol.data(), os, *din[0]);
  }

 private:
  bool pointwise() const { return win_.kernel == 1 && win_.stride == 1 && win_.pad == 0; }

  const double* im2col(const Tensor& x, const Shape3& os, std::vector<double>& scratch) const {
    if (pointwise()) return x.data();
    const int k = win_.kernel;
    const std::size_t plane = os.plane();
    scratch.assign(static_cast<std::size_t>(in_) * k * k * plane, 0.0);
    for (int ic = 0; ic < in_; ++ic) {
      const double* src = x.channel(ic);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          double* dst = scratch.data() + ((static_cast<std::size_t>(ic) * k + ky) * k + kx) * plane;
          for (int oy = 0; oy < os.height; ++oy) {
            const int iy = oy * win_.stride - win_.pad + ky;
            if (iy < 0 || iy >= x.height()) continue;
            const double* srow = src + static_cast<std::size_t>(iy) * x.width();
            double* drow = dst + static_cast<std::size_t>(oy) * os.width;
            for (int ox = 0; ox < os.width; ++ox) {
              const int ix = ox * win_.stride - win_.pad + kx;
              if (ix >= 0 && ix < x.width()) drow[ox] = srow[ix];
            }
          }
        }
      }
    }
    return scratch.data();
  }

  void col2im(const double* dcol, const Shape3& os, Tensor& dx) const {
    const std::size_t plane = os.plane();
    if (pointwise()) {
      detail::axpy(1.0, dcol, dx.data(), plane * in_);
      return;
    }
    const int k = win_.kernel;
    for (int ic = 0; ic < in_; ++ic) {
      double* dst = dx.channel(ic);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double* src = dcol + ((static_cast<std::size_t>(ic) * k + ky) * k + kx) * plane;
          for (int oy = 0; oy < os.height; ++oy) {
            const int iy = oy * win_.stride - win_.pad + ky;
            if (iy < 0 || iy >= dx.height()) continue;
            double* drow = dst + static_cast<std::size_t>(iy) * dx.width();
            const double* srow = src + static_cast<std::size_t>(oy) * os.width;
            for (int ox = 0; ox < os.width; ++ox) {
              const int ix = ox * win_.stride - win_.pad + kx;
              if (ix >= 0 && ix < dx.width()) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }

  int in_;
  int out_;
  Window win_;
  int kernel_id_ = -1;
  int bias_id_ = -1;
};

class Relu final : public Op {
 public:
  std::string kind() const override { return "relu"; }
  Shape3 output_shape(std::span<const Shape3> in) const override {
    detail::expect_inputs(in, 1, "relu");
    return in[0];
  }
  void forward(std::span<const Tensor* const> in, Tensor& out, const ParamStore&) const override {
    out = *in[0];
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& dout,
                std::span<Tensor* const> din, const ParamStore&, Gradients&) const override {
    if (din.empty() || din[0] == nullptr) return;
    const double* x = in[0]->data();
    double* dx = din[0]->data();
    for (std::size_t i = 0; i < dout.size(); ++i)
      if (x[i] > 0.0) dx[i] += dout.data()[i];
  }
};

/// Per-channel scale and shift; stands in for an inference-mode batch norm.
class ChannelAffine final : public Op {
 public:
  ChannelAffine(ParamStore& ps, const std::string& name, int channels) : channels_(channels) {
    scale_id_ = ps.add(name + ".scale", ParamKind::bias, {channels});
    shift_id_ = ps.add(name + ".shift", ParamKind::bias, {channels});
  }
  std::string kind() const override { return "channel_affine"; }
  Shape3 output_shape(std::span<const Shape3> in) const override {
    detail::expect_inputs(in, 1, "channel_affine");
    if (in[0].channels != channels_) throw std::invalid_argument("channel_affine: channel mismatch");
    return in[0];
  }
  void initialize(ParamStore& ps, std::mt19937_64&) const override {
    for (auto& v : ps.values(scale_id_)) v = 1.0;
    for (auto& v : ps.values(shift_id_)) v = 0.0;
  }
  void forward(std::span<const Tensor* const> in, Tensor& out, const ParamStore& ps) const override {
    out = *in[0];
    auto s = ps.values(scale_id_);
    auto b = ps.values(shift_id_);
    const std::size_t plane = out.shape().plane();
    for (int c = 0; c < channels_; ++c) {
      double* o = out.channel(c);
      for (std::size_t i = 0; i < plane; ++i) o[i] = o[i] * s[c] + b[c];
    }
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& dout,
                std::span<Tensor* const> din, const ParamStore& ps, Gradients& grads) const override {
    auto s = ps.values(scale_id_);
    const std::size_t plane = dout.shape().plane();
    for (int c = 0; c < channels_; ++c) {
      const double* d = dout.channel(c);
      const double* x = in[0]->channel(c);
      grads[scale_id_][c] += detail::dot(d, x, plane);
      double sum = 0;
      for (std::size_t i = 0; i < plane; ++i) sum += d[i];
      grads[shift_id_][c] += sum;
      if (!din.empty() && din[0] != nullptr) detail::axpy(s[c], d, din[0]->channel(c), plane);
    }
  }

 private:
  int channels_;
  int scale_id_ = -1;
  int shift_id_ = -1;
};

class MaxPool2d final : public Op {
 public:
  MaxPool2d(int kernel, int stride, int pad) : win_{kernel, stride, pad} {}
  std::string kind() const override { return "maxpool2d"; }
  std::optional<Window> window() const override { return win_; }
  Shape3 output_shape(std::span<const Shape3> in) const override {
    detail::expect_inputs(in, 1, "maxpool2d");
    Shape3 s{in[0].channels, win_.output_extent(in[0].height), win_.output_extent(in[0].width)};
    if (s.height <= 0 || s.width <= 0) throw std::invalid_argument("maxpool2d: input too small");
    return s;
  }
  void forward(std::span<const Tensor* const> in, Tensor& out, const ParamStore&) const override {
    const Tensor& x = *in[0];
    out = Tensor(output_shape(std::span<const Shape3>(&x.shape(), 1)));
    for_each_window(x, out.shape(), [&](int c, int oy, int ox, int, int, double best) { out.at(c, oy, ox) = best; });
  }
  void backward(std::span<const Tensor* const> in, const Tensor& out, const Tensor& dout,
                std::span<Tensor* const> din, const ParamStore&, Gradients&) const override {
    if (din.empty() || din[0] == nullptr) return;
    for_each_window(*in[0], out.shape(), [&](int c, int oy, int ox, int by, int bx, double) {
      if (by >= 0) din[0]->at(c, by, bx) += dout.at(c, oy, ox);
    });
  }

 private:
  template <typename F>
  void for_each_window(const Tensor& x, const Shape3& os, F&& f) const {
    for (int c = 0; c < os.channels; ++c)
      for (int oy = 0; oy < os.height; ++oy)
        for (int ox = 0; ox < os.width; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          int by = -1, bx = -1;
          for (int ky = 0; ky < win_.kernel; ++ky) {
            const int iy = oy * win_.stride - win_.pad + ky;
            if (iy < 0 || iy >= x.height()) continue;
            for (int kx = 0; kx < win_.kernel; ++kx) {
              const int ix = ox * win_.stride - win_.pad + kx;
              if (ix < 0 || ix >= x.width()) continue;
              const double v = x.at(c, iy, ix);
              if (v > best) {
                best = v;
                by = iy;
                bx = ix;
              }
            }
          }
          f(c, oy, ox, by, bx, best);
        }
  }

  Window win_;
};

class Add final : public Op {
 public:
  std::string kind() const override { return "add"; }
  Shape3 output_shape(std::span<const Shape3> in) const override {
    detail::expect_inputs(in, 2, "add");
    if (!(in[0] == in[1])) throw std::invalid_argument("add: shape mismatch " + to_string(in[0]) + " vs " + to_string(in[1]));
    return in[0];
  }
  void forward(std::span<const Tensor* const> in, Tensor& out, const ParamStore&) const override {
    out = *in[0];
    detail::axpy(1.0, in[1]->data(), out.data(), out.size());
  }
  void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& dout, std::span<Tensor* const> din,
                const ParamStore&, Gradients&) const override {
    for (Tensor* d : din)
      if (d != nullptr) detail::axpy(1.0, dout.data(), d->data(), dout.size());
  }
};

}  // namespace wsseg::nn
