// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cednn {

/// 8-bit interleaved image.
template <int Channels>
struct Image {
  static constexpr int channels = Channels;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h),
        pixels(static_cast<std::size_t>(w) * h * Channels, fill) {
    if (w < 0 || h < 0) throw std::invalid_argument("negative image size");
  }

  std::uint8_t& at(int x, int y, int ch = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * Channels + ch];
  }
  std::uint8_t at(int x, int y, int ch = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * Channels + ch];
  }
  bool same_size(int w, int h) const { return width == w && height == h; }
  bool operator==(const Image&) const = default;
};

using GrayImage = Image<1>;
using RgbImage = Image<3>;

/// Two-valued gray image: 0 (background) or 255 (active).
struct BinaryMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  BinaryMap() = default;
  BinaryMap(int w, int h)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  bool active(int x, int y) const { return at(x, y) != 0; }
  bool operator==(const BinaryMap&) const = default;

  GrayImage as_gray() const {
    GrayImage g(width, height);
    g.pixels = pixels;
    return g;
  }
};

}  // namespace cednn
