#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rstab/error.hpp"

namespace rstab {

// Dense row-major H x W x C raster. Channel values of one pixel are contiguous.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, int channels = 1, T fill = T{})
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 1) {
      throw ContractViolation("Grid: invalid shape");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  template <typename U>
  bool same_extent(const Grid<U>& other) const {
    return height_ == other.height() && width_ == other.width();
  }
  bool contains(int y, int x) const { return y >= 0 && y < height_ && x >= 0 && x < width_; }

  T& operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  const T& operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<T> pixel(int y, int x) { return {data_.data() + index(y, x, 0), static_cast<std::size_t>(channels_)}; }
  std::span<const T> pixel(int y, int x) const {
    return {data_.data() + index(y, x, 0), static_cast<std::size_t>(channels_)};
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Grid& a, const Grid& b) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using Image = Grid<float>;       // H x W x 3, values in [0,1]
using DepthMap = Grid<float>;    // H x W x 1, meters
using FlowField = Grid<float>;   // H x W x 2, pixels (du, dv)
using Mask = Grid<std::uint8_t>; // H x W x 1, 0 or 1

}  // namespace rstab
