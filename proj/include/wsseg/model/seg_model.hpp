#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "wsseg/model/backbone.hpp"
#include "wsseg/model/fusion.hpp"
#include "wsseg/model/mil_pool.hpp"
#include "wsseg/model/weights_io.hpp"
#include "wsseg/nn/graph.hpp"
#include "wsseg/util/binary_io.hpp"

namespace wsseg::model {

inline constexpr int kInputRows = 170;
inline constexpr int kInputCols = 140;

/// Zero padding applied to the input before the backbone.
struct Padding {
  int top = 0, bottom = 0, left = 0, right = 0;
  friend bool operator==(const Padding&, const Padding&) = default;
};

struct SegOutput {
  Map a3;        // dense probabilities, 4h x 4w
  Map a3_tilde;  // pooled grid
};

struct PyramidShapes {
  nn::Shape3 m1, m2, m3;
};

/// Smallest symmetric-as-possible zero padding making the backbone taps satisfy the
/// 1:2:4 contract with a poolable M3. Throws ConfigError when none exists.
inline std::pair<Padding, PyramidShapes> find_padding(const Backbone& b, int rows, int cols, int max_extra = 64) {
  auto shapes_at = [&](int h, int w) -> std::optional<PyramidShapes> {
    try {
      auto s = b.graph.infer_shapes(h, w);
      return PyramidShapes{s[static_cast<std::size_t>(b.tap_m1)], s[static_cast<std::size_t>(b.tap_m2)],
                           s[static_cast<std::size_t>(b.tap_m3)]};
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  };
  auto rows_ok = [](const PyramidShapes& s) {
    return s.m2.height == 2 * s.m1.height && s.m3.height == 4 * s.m1.height && s.m3.height >= kPoolWindow;
  };
  auto cols_ok = [](const PyramidShapes& s) {
    return s.m2.width == 2 * s.m1.width && s.m3.width == 4 * s.m1.width && s.m3.width >= kPoolWindow;
  };
  // Height and width are independent for the supported ops; search each axis
  // with the other axis held at a generous valid extent.
  int dh = -1, dw = -1;
  for (int e = 0; e <= max_extra && dh < 0; ++e) {
    for (int w = cols; w <= cols + max_extra; ++w) {
      auto s = shapes_at(rows + e, w);
      if (s && rows_ok(*s)) {
        dh = e;
        break;
      }
    }
  }
  if (dh >= 0) {
    for (int e = 0; e <= max_extra; ++e) {
      auto s = shapes_at(rows + dh, cols + e);
      if (s && cols_ok(*s)) {
        dw = e;
        break;
      }
    }
  }
  if (dh < 0 || dw < 0)
    throw ConfigError("backbone taps " + b.tap_names[0] + "/" + b.tap_names[1] + "/" + b.tap_names[2] +
                      " cannot satisfy the 1:2:4 pyramid contract for a " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " input");
  Padding p{dh / 2, dh - dh / 2, dw / 2, dw - dw / 2};
  return {p, *shapes_at(rows + dh, cols + dw)};
}

/// Backbone + weighted-fusion decoder + MIL pooling + binary classification head.
/// Evaluation is const and reentrant; training mutates params() from one writer.
class SegModel {
 public:
  explicit SegModel(BackboneSpec spec, int rows = kInputRows, int cols = kInputCols)
      : spec_(std::move(spec)), rows_(rows), cols_(cols) {
    backbone_ = build_backbone(spec_, params_);
    std::tie(padding_, shapes_) = find_padding(backbone_, rows_, cols_);
    w1_ = params_.add("fusion.w1", nn::ParamKind::kernel, {shapes_.m1.channels});
    w2_ = params_.add("fusion.w2", nn::ParamKind::kernel, {shapes_.m2.channels});
    w3_ = params_.add("fusion.w3", nn::ParamKind::kernel, {shapes_.m3.channels});
    const auto all = backbone_.graph.infer_shapes(rows_ + padding_.top + padding_.bottom,
                                                  cols_ + padding_.left + padding_.right);
    final_shape_ = all[static_cast<std::size_t>(backbone_.final_node)];
    head_w_ = params_.add("head.weight", nn::ParamKind::kernel, {final_shape_.channels});
    head_b_ = params_.add("head.bias", nn::ParamKind::bias, {1});
    backbone_param_count_ = static_cast<int>(params_.count()) - 5;
    initialize();
  }

  SegModel(const SegModel&) = delete;
  SegModel& operator=(const SegModel&) = delete;
  SegModel(SegModel&&) = default;

  const BackboneSpec& spec() const { return spec_; }
  const Backbone& backbone() const { return backbone_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const Padding& padding() const { return padding_; }
  const PyramidShapes& pyramid_shapes() const { return shapes_; }
  int input_rows() const { return rows_; }
  int input_cols() const { return cols_; }

  FusionWeightsView fusion_weights() const {
    return {params_.values(w1_), params_.values(w2_), params_.values(w3_)};
  }

  std::vector<int> backbone_param_ids() const {
    std::vector<int> ids(static_cast<std::size_t>(backbone_param_count_));
    for (int i = 0; i < backbone_param_count_; ++i) ids[static_cast<std::size_t>(i)] = i;
    return ids;
  }
  std::vector<int> fusion_param_ids() const { return {w1_, w2_, w3_}; }
  std::vector<int> head_param_ids() const { return {head_w_, head_b_}; }

  /// Seeded random init, then optional pretrained weights keyed by parameter name.
  void initialize() {
    std::mt19937_64 rng(spec_.seed);
    backbone_.graph.initialize(params_, rng);
    for (int id : {w1_, w2_, w3_}) {
      auto w = params_.values(id);
      std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(static_cast<double>(w.size())),
                                                  1.0 / std::sqrt(static_cast<double>(w.size())));
      for (auto& v : w) v = dist(rng);
    }
    for (auto& v : params_.values(head_w_)) v = 0.0;
    params_.values(head_b_)[0] = 0.0;
    if (spec_.weights_path.empty()) {
      spdlog::debug("backbone {}: no pretrained weights file, seeded random init (seed {})", spec_.id, spec_.seed);
    } else {
      const std::size_t n = load_named_weights(spec_.weights_path);
      spdlog::info("backbone {}: loaded {} tensors from {}", spec_.id, n, spec_.weights_path);
    }
  }

  /// Copies every tensor whose name matches a parameter; shape mismatches are errors.
  std::size_t load_named_weights(const std::filesystem::path& path) {
    const auto file = read_weights_file(path);
    std::size_t loaded = 0;
    for (const auto& t : file.tensors) {
      const int id = params_.find(t.name);
      if (id < 0) continue;
      auto& p = params_[id];
      if (p.shape != t.shape)
        throw ConfigError(path.string() + ": shape mismatch for " + t.name);
      p.value = t.value;
      ++loaded;
    }
    return loaded;
  }

  nn::Tensor prepare_input(const Image& img) const {
    if (img.rows() != rows_ || img.cols() != cols_)
      throw std::invalid_argument("model expects a " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                                  " image, got " + std::to_string(img.rows()) + "x" + std::to_string(img.cols()));
    nn::Tensor t({1, rows_ + padding_.top + padding_.bottom, cols_ + padding_.left + padding_.right});
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c) t.at(0, r + padding_.top, c + padding_.left) = img(r, c);
    return t;
  }

  struct SegForward {
    std::vector<nn::Tensor> values;
    FeaturePyramid pyramid;
    FusionTrace fusion;
    Map pooled;
  };

  struct ClsForward {
    std::vector<nn::Tensor> values;
    std::vector<double> features;
    double logit = 0.0;
    double prob = 0.5;
  };

  FeaturePyramid features(const Image& img) const { return forward_seg(img).pyramid; }

  SegForward forward_seg(const Image& img) const {
    SegForward f;
    const int upto = std::max({backbone_.tap_m1, backbone_.tap_m2, backbone_.tap_m3});
    f.values = backbone_.graph.forward(prepare_input(img), params_, upto);
    f.pyramid.m1 = f.values[static_cast<std::size_t>(backbone_.tap_m1)];
    f.pyramid.m2 = f.values[static_cast<std::size_t>(backbone_.tap_m2)];
    f.pyramid.m3 = f.values[static_cast<std::size_t>(backbone_.tap_m3)];
    f.fusion = fuse_trace(f.pyramid, fusion_weights());
    f.pooled = mil_pool(f.fusion.a3);
    return f;
  }

  SegOutput segment(const Image& img) const {
    auto f = forward_seg(img);
    return {std::move(f.fusion.a3), std::move(f.pooled)};
  }

  /// d(loss)/d(A3) -> gradients of fusion weights and backbone parameters.
  void backward_seg(const SegForward& f, const Map& d_a3, nn::Gradients& grads) const {
    auto g = fuse_backward(f.pyramid, fusion_weights(), f.fusion, d_a3);
    auto add = [](std::span<double> dst, const std::vector<double>& src) {
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    };
    add(grads[w1_], g.w1);
    add(grads[w2_], g.w2);
    add(grads[w3_], g.w3);
    const std::pair<int, const nn::Tensor*> seeds[] = {
        {backbone_.tap_m1, &g.m1}, {backbone_.tap_m2, &g.m2}, {backbone_.tap_m3, &g.m3}};
    backbone_.graph.backward(f.values, seeds, params_, grads);
  }

  ClsForward forward_cls(const Image& img) const {
    ClsForward f;
    f.values = backbone_.graph.forward(prepare_input(img), params_, backbone_.final_node);
    const nn::Tensor& top = f.values[static_cast<std::size_t>(backbone_.final_node)];
    const std::size_t plane = top.shape().plane();
    f.features.resize(static_cast<std::size_t>(top.channels()));
    for (int c = 0; c < top.channels(); ++c) {
      double s = 0;
      const double* p = top.channel(c);
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      f.features[static_cast<std::size_t>(c)] = s / static_cast<double>(plane);
    }
    auto w = params_.values(head_w_);
    f.logit = params_.values(head_b_)[0];
    for (std::size_t c = 0; c < f.features.size(); ++c) f.logit += w[c] * f.features[c];
    f.prob = sigmoid(f.logit);
    return f;
  }

  /// P(y = 1 | image).
  double classify(const Image& img) const { return forward_cls(img).prob; }

  void backward_cls(const ClsForward& f, double d_logit, nn::Gradients& grads) const {
    auto w = params_.values(head_w_);
    auto gw = grads[head_w_];
    for (std::size_t c = 0; c < f.features.size(); ++c) gw[c] += d_logit * f.features[c];
    grads[head_b_][0] += d_logit;
    const nn::Tensor& top = f.values[static_cast<std::size_t>(backbone_.final_node)];
    nn::Tensor d(top.shape());
    const double inv = 1.0 / static_cast<double>(top.shape().plane());
    for (int c = 0; c < top.channels(); ++c) {
      const double v = d_logit * w[static_cast<std::size_t>(c)] * inv;
      std::fill(d.channel(c), d.channel(c) + top.shape().plane(), v);
    }
    const std::pair<int, const nn::Tensor*> seeds[] = {{backbone_.final_node, &d}};
    backbone_.graph.backward(f.values, seeds, params_, grads);
  }

  /// Input-pixel box (unpadded coordinates, clipped to the image) that can influence
  /// pooled cell (i, j).
  nn::Box pooled_cell_receptive_field(int i, int j) const {
    const nn::Box cell{i * kPoolWindow, (i + 1) * kPoolWindow - 1, j * kPoolWindow, (j + 1) * kPoolWindow - 1};
    auto scaled = [](const nn::Box& b, int f) { return nn::Box{b.row0 / f, b.row1 / f, b.col0 / f, b.col1 / f}; };
    nn::Box rf = backbone_.graph.receptive_field(backbone_.tap_m3, cell);
    rf = rf.united(backbone_.graph.receptive_field(backbone_.tap_m2, scaled(cell, 2)));
    rf = rf.united(backbone_.graph.receptive_field(backbone_.tap_m1, scaled(cell, 4)));
    rf.row0 = std::max(0, rf.row0 - padding_.top);
    rf.row1 = std::min(rows_ - 1, rf.row1 - padding_.top);
    rf.col0 = std::max(0, rf.col0 - padding_.left);
    rf.col1 = std::min(cols_ - 1, rf.col1 - padding_.left);
    return rf;
  }

 private:
  BackboneSpec spec_;
  int rows_;
  int cols_;
  nn::ParamStore params_;
  Backbone backbone_;
  Padding padding_;
  PyramidShapes shapes_;
  nn::Shape3 final_shape_;
  int backbone_param_count_ = 0;
  int w1_ = -1, w2_ = -1, w3_ = -1, head_w_ = -1, head_b_ = -1;
};

}  // namespace wsseg::model

