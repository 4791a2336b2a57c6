#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ellipsedet/error.hpp"

namespace ellipsedet {

// Dense channel-major (C, H, W) grid of doubles.
class Grid {
 public:
  Grid() = default;
  Grid(int channels, int height, int width, double fill = 0.0)
      : channels_(channels), height_(height), width_(width) {
    if (channels < 0 || height < 0 || width < 0) throw Error("negative grid dimension");
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }
  double& operator()(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
  double operator()(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> channel(int c) const noexcept {
    return std::span<const double>(data_).subspan(index(c, 0, 0),
                                                  static_cast<std::size_t>(height_) * width_);
  }

  bool same_shape(const Grid& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

}  // namespace ellipsedet
