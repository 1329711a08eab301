#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsseg/util/grid.hpp"

namespace wsseg::nn {

/// Channel-major (C, H, W) extent.
struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t numel() const { return plane() * channels; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

inline std::string to_string(const Shape3& s) {
  return "(" + std::to_string(s.channels) + "," + std::to_string(s.height) + "," + std::to_string(s.width) + ")";
}

inline std::ostream& operator<<(std::ostream& os, const Shape3& s) { return os << to_string(s); }

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape3 shape, double fill = 0.0) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape3 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) throw std::invalid_argument("Tensor: data size mismatch for " + to_string(shape));
  }

  const Shape3& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x]; }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }
  double* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }
  const double* channel(int c) const { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  Map plane_map(int c) const {
    Map m(shape_.height, shape_.width);
    std::copy(channel(c), channel(c) + shape_.plane(), m.data());
    return m;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape3 shape_{};
  std::vector<double> data_;
};

inline Tensor tensor_from_image(const Image& img) {
  Tensor t({1, img.rows(), img.cols()});
  for (std::size_t i = 0; i < img.size(); ++i) t.data()[i] = img.data()[i];
  return t;
}

}  // namespace wsseg::nn
