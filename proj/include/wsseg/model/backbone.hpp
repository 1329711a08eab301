#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsseg/nn/graph.hpp"

namespace wsseg::model {

/// Thrown when a backbone cannot honor the feature-pyramid contract.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which backbone to build, where its three feature maps are tapped, and how
/// its weights are initialized.
struct BackboneSpec {
  std::string id = "tiny";  // "tiny" | "reference"
  /// Tap node names for M1 (deepest), M2, M3 (shallowest). Empty = backbone defaults.
  std::array<std::string, 3> taps{};
  /// Optional pretrained weights container keyed by parameter name.
  std::string weights_path;
  std::uint64_t seed = 0;
  /// Channel widths of the tiny backbone: stem, M3 stage, M2 stage, M1 stage.
  std::array<int, 4> tiny_widths{6, 12, 24, 48};
};

struct Backbone {
  nn::Graph graph{1};
  int tap_m1 = -1;
  int tap_m2 = -1;
  int tap_m3 = -1;
  /// Node feeding the classification head.
  int final_node = -1;
  std::array<std::string, 3> tap_names{};
};

namespace detail {

inline int conv(nn::Graph& g, nn::ParamStore& ps, const std::string& name, int input, int in_ch, int out_ch, int k,
                int stride, int pad, bool bias = true) {
  return g.add(name, std::make_unique<nn::Conv2d>(ps, name, in_ch, out_ch, k, stride, pad, bias), {input});
}

inline int relu(nn::Graph& g, const std::string& name, int input) {
  return g.add(name, std::make_unique<nn::Relu>(), {input});
}

inline int affine(nn::Graph& g, nn::ParamStore& ps, const std::string& name, int input, int ch) {
  return g.add(name, std::make_unique<nn::ChannelAffine>(ps, name, ch), {input});
}

/// Keras-style ResNet bottleneck block; the convolutional shortcut is used for the
/// first block of each stage.
inline int bottleneck(nn::Graph& g, nn::ParamStore& ps, int input, int in_ch, int stage, char block,
                      std::array<int, 3> filters, int stride, bool conv_shortcut) {
  const std::string base = std::to_string(stage) + block;
  const std::string res = "res" + base + "_branch";
  const std::string bn = "bn" + base + "_branch";
  int x = conv(g, ps, res + "2a", input, in_ch, filters[0], 1, stride, 0);
  x = affine(g, ps, bn + "2a", x, filters[0]);
  x = relu(g, "act" + base + "_2a", x);
  x = conv(g, ps, res + "2b", x, filters[0], filters[1], 3, 1, 1);
  x = affine(g, ps, bn + "2b", x, filters[1]);
  x = relu(g, "act" + base + "_2b", x);
  x = conv(g, ps, res + "2c", x, filters[1], filters[2], 1, 1, 0);
  x = affine(g, ps, bn + "2c", x, filters[2]);
  int shortcut = input;
  if (conv_shortcut) {
    shortcut = conv(g, ps, res + "1", input, in_ch, filters[2], 1, stride, 0);
    shortcut = affine(g, ps, bn + "1", shortcut, filters[2]);
  }
  x = g.add("add" + base, std::make_unique<nn::Add>(), {x, shortcut});
  return relu(g, "res" + base + "_out", x);
}

}  // namespace detail

/// ResNet-50 trunk through stage 4 (res4f), single-channel input.
inline Backbone build_reference_backbone(nn::ParamStore& ps) {
  using namespace detail;
  Backbone b;
  auto& g = b.graph;
  int x = conv(g, ps, "conv1", 0, 1, 64, 7, 2, 3);
  x = affine(g, ps, "bn_conv1", x, 64);
  x = relu(g, "conv1_relu", x);
  x = g.add("pool1", std::make_unique<nn::MaxPool2d>(3, 2, 1), {x});
  int ch = 64;
  const struct {
    int stage;
    int blocks;
    std::array<int, 3> filters;
    int stride;
  } stages[] = {{2, 3, {64, 64, 256}, 1}, {3, 4, {128, 128, 512}, 2}, {4, 6, {256, 256, 1024}, 2}};
  for (const auto& s : stages) {
    for (int i = 0; i < s.blocks; ++i) {
      x = bottleneck(g, ps, x, ch, s.stage, static_cast<char>('a' + i), s.filters, i == 0 ? s.stride : 1, i == 0);
      ch = s.filters[2];
    }
  }
  b.final_node = x;
  b.tap_names = {"res4f_branch2c", "res3d_branch2c", "res2c_branch2c"};
  return b;
}

/// Small stride-16 convolutional stack for desk-scale runs.
inline Backbone build_tiny_backbone(nn::ParamStore& ps, const std::array<int, 4>& widths) {
  using namespace detail;
  for (int w : widths)
    if (w < 1) throw ConfigError("tiny backbone widths must be positive");
  Backbone b;
  auto& g = b.graph;
  int x = relu(g, "stem_relu", conv(g, ps, "stem", 0, 1, widths[0], 3, 2, 1));
  x = relu(g, "stage2_relu", conv(g, ps, "stage2", x, widths[0], widths[1], 3, 2, 1));
  x = relu(g, "stage3_relu", conv(g, ps, "stage3", x, widths[1], widths[2], 3, 2, 1));
  x = relu(g, "stage4_relu", conv(g, ps, "stage4", x, widths[2], widths[3], 3, 2, 1));
  b.final_node = x;
  b.tap_names = {"stage4_relu", "stage3_relu", "stage2_relu"};
  return b;
}

inline Backbone build_backbone(const BackboneSpec& spec, nn::ParamStore& ps) {
  Backbone b;
  if (spec.id == "reference")
    b = build_reference_backbone(ps);
  else if (spec.id == "tiny")
    b = build_tiny_backbone(ps, spec.tiny_widths);
  else
    throw ConfigError("unknown backbone '" + spec.id + "' (expected reference or tiny)");
  for (std::size_t i = 0; i < 3; ++i)
    if (!spec.taps[i].empty()) b.tap_names[i] = spec.taps[i];
  try {
    b.tap_m1 = b.graph.find(b.tap_names[0]);
    b.tap_m2 = b.graph.find(b.tap_names[1]);
    b.tap_m3 = b.graph.find(b.tap_names[2]);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("backbone tap: ") + e.what());
  }
  return b;
}

}  // namespace wsseg::model
