#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsseg {

/// Dense row-major 2-D array.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Grid: negative dimension");
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
  }
  Grid(int rows, int cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
      throw std::invalid_argument("Grid: data size does not match " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool same_shape(const Grid& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using Image = Grid<float>;
using Mask = Grid<unsigned char>;
using Map = Grid<double>;

template <typename T, typename U>
Grid<T> grid_cast(const Grid<U>& src) {
  Grid<T> out(src.rows(), src.cols());
  std::transform(src.begin(), src.end(), out.begin(), [](U v) { return static_cast<T>(v); });
  return out;
}

template <typename T>
T grid_max(const Grid<T>& g) {
  if (g.empty()) throw std::invalid_argument("grid_max: empty grid");
  return *std::max_element(g.begin(), g.end());
}

inline std::size_t count_positive(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](unsigned char v) { return v != 0; }));
}

}  // namespace wsseg
