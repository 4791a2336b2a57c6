#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ellipsedet/error.hpp"

namespace ellipsedet {

// Interleaved 8-bit RGB raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {
    if (w < 0 || h < 0) throw Error("negative image dimension");
  }

  std::uint8_t* at(int x, int y) noexcept { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const noexcept {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  void set(int x, int y, const std::array<std::uint8_t, 3>& rgb) noexcept {
    std::uint8_t* p = at(x, y);
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// PNG or JPEG, picked from the file extension.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

struct ImageSize {
  int width = 0;
  int height = 0;
};
ImageSize probe_image_size(const std::filesystem::path& path);

}  // namespace ellipsedet
