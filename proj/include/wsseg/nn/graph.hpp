#pragma once

#include <algorithm>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wsseg/nn/ops.hpp"

namespace wsseg::nn {

/// Inclusive pixel-index box.
struct Box {
  int row0 = 0, row1 = -1, col0 = 0, col1 = -1;
  bool contains(int r, int c) const { return r >= row0 && r <= row1 && c >= col0 && c <= col1; }
  Box united(const Box& o) const {
    return {std::min(row0, o.row0), std::max(row1, o.row1), std::min(col0, o.col0), std::max(col1, o.col1)};
  }
};

/// Feed-forward DAG of ops. Node 0 is the input; nodes are stored in topological order.
class Graph {
 public:
  explicit Graph(int input_channels) : input_channels_(input_channels) {
    nodes_.push_back(Node{"input", nullptr, {}});
    index_.emplace("input", 0);
  }

  int add(std::string name, std::unique_ptr<Op> op, std::vector<int> inputs) {
    if (index_.contains(name)) throw std::invalid_argument("graph: duplicate node " + name);
    for (int i : inputs)
      if (i < 0 || i >= static_cast<int>(nodes_.size())) throw std::invalid_argument("graph: bad input for " + name);
    const int id = static_cast<int>(nodes_.size());
    index_.emplace(name, id);
    nodes_.push_back(Node{std::move(name), std::move(op), std::move(inputs)});
    return id;
  }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("graph: no node named " + name);
    return it->second;
  }

  int size() const { return static_cast<int>(nodes_.size()); }
  int last() const { return size() - 1; }
  int input_channels() const { return input_channels_; }
  const std::string& name(int id) const { return nodes_[static_cast<std::size_t>(id)].name; }

  void initialize(ParamStore& ps, std::mt19937_64& rng) const {
    for (const auto& n : nodes_)
      if (n.op) n.op->initialize(ps, rng);
  }

  /// Throws std::invalid_argument when any node cannot accept its input extent.
  std::vector<Shape3> infer_shapes(int height, int width) const {
    std::vector<Shape3> shapes(nodes_.size());
    shapes[0] = {input_channels_, height, width};
    std::vector<Shape3> in;
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      in.clear();
      for (int j : nodes_[i].inputs) in.push_back(shapes[static_cast<std::size_t>(j)]);
      shapes[i] = nodes_[i].op->output_shape(in);
    }
    return shapes;
  }

  /// Evaluates nodes [0, upto] and returns every node value.
  std::vector<Tensor> forward(const Tensor& x, const ParamStore& ps, int upto = -1) const {
    if (x.channels() != input_channels_) throw std::invalid_argument("graph: input channel mismatch");
    const int end = upto < 0 ? last() : upto;
    std::vector<Tensor> values(static_cast<std::size_t>(end) + 1);
    values[0] = x;
    std::vector<const Tensor*> in;
    for (int i = 1; i <= end; ++i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      in.clear();
      for (int j : n.inputs) in.push_back(&values[static_cast<std::size_t>(j)]);
      n.op->forward(in, values[static_cast<std::size_t>(i)], ps);
    }
    return values;
  }

  /// Reverse-mode pass seeded with d(loss)/d(node) for a set of nodes; parameter
  /// gradients accumulate into `grads`.
  void backward(const std::vector<Tensor>& values, std::span<const std::pair<int, const Tensor*>> seeds,
                const ParamStore& ps, Gradients& grads) const {
    std::vector<Tensor> g(values.size());
    int start = 0;
    for (const auto& [id, t] : seeds) {
      auto& slot = g[static_cast<std::size_t>(id)];
      if (slot.empty()) slot = Tensor(values[static_cast<std::size_t>(id)].shape());
      if (!(t->shape() == slot.shape())) throw std::invalid_argument("graph: seed shape mismatch at " + name(id));
      detail::axpy(1.0, t->data(), slot.data(), slot.size());
      start = std::max(start, id);
    }
    std::vector<const Tensor*> in;
    std::vector<Tensor*> din;
    for (int i = start; i >= 1; --i) {
      if (g[static_cast<std::size_t>(i)].empty()) continue;
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      in.clear();
      din.clear();
      for (int j : n.inputs) {
        in.push_back(&values[static_cast<std::size_t>(j)]);
        if (j == 0) {
          din.push_back(nullptr);
          continue;
        }
        auto& slot = g[static_cast<std::size_t>(j)];
        if (slot.empty()) slot = Tensor(values[static_cast<std::size_t>(j)].shape());
        din.push_back(&slot);
      }
      n.op->backward(in, values[static_cast<std::size_t>(i)], g[static_cast<std::size_t>(i)], din, ps, grads);
      g[static_cast<std::size_t>(i)] = Tensor();
    }
  }

  /// Bounding box of input pixels that can influence `box` at node `id`.
  Box receptive_field(int id, Box box) const {
    if (id == 0) return box;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    Box src = box;
    if (auto w = n.op->window()) {
      src = {box.row0 * w->stride - w->pad, box.row1 * w->stride - w->pad + w->kernel - 1,
             box.col0 * w->stride - w->pad, box.col1 * w->stride - w->pad + w->kernel - 1};
    }
    Box result{};
    bool first = true;
    for (int j : n.inputs) {
      Box b = receptive_field(j, src);
      result = first ? b : result.united(b);
      first = false;
    }
    return result;
  }

 private:
  struct Node {
    std::string name;
    std::unique_ptr<Op> op;
    std::vector<int> inputs;
  };

  int input_channels_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace wsseg::nn
