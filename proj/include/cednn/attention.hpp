// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Spatial attention maps from difference images: align the expressive and
// neutral frames, difference them, keep only the face region, binarize at
// five thresholds and build the max-pooled pyramid the network consumes.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cednn/image.hpp"
#include "cednn/tensor.hpp"

namespace cednn {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

enum class LandmarkScheme { five_point, dense68 };

inline constexpr int kFivePointCount = 5;
inline constexpr int kDenseCount = 68;

/// Dense scheme indices used by the mask construction.
namespace dense_index {
inline constexpr int contour_first = 0;
inline constexpr int contour_last = 16;
inline constexpr int brow_first = 17;
inline constexpr int brow_last = 26;
inline constexpr int brow_inner_a = 21;
inline constexpr int brow_inner_b = 22;
inline constexpr int nose_bridge_top = 27;
}  // namespace dense_index

struct LandmarkSet {
  LandmarkScheme scheme = LandmarkScheme::five_point;
  std::vector<Point> points;

  static LandmarkSet five(std::vector<Point> pts);
  static LandmarkSet dense(std::vector<Point> pts);
  /// Throws if the point count does not match the scheme or a coordinate
  /// is not finite.
  void validate() const;
};

/// x' = a*x - b*y + tx,  y' = b*x + a*y + ty.
struct SimilarityTransform {
  double a = 1.0;
  double b = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  Point apply(Point p) const { return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty}; }
  SimilarityTransform inverse() const;
  double scale() const;
  double rotation() const;  // radians
};

/// Least-squares rotation + uniform scale + translation taking `src` onto
/// `target`. Throws on a degenerate source set.
SimilarityTransform estimate_similarity_transform(const LandmarkSet& src,
                                                  const LandmarkSet& target);

/// Resamples `img` into an out_w x out_h frame; `src_to_out` maps source
/// pixel coordinates to output coordinates. Bilinear, zero outside.
RgbImage warp_image(const RgbImage& img, const SimilarityTransform& src_to_out,
                    int out_w, int out_h);

/// Per-channel absolute difference followed by 0.299R + 0.587G + 0.114B.
GrayImage difference_image(const RgbImage& action, const RgbImage& neutral);

struct FaceMask {
  BinaryMap mask;
  std::vector<Point> polygon;
  bool self_intersecting = false;
};

struct MaskOptions {
  double contour_inset = 5.0;
  double brow_lift = 5.0;
};

/// Closed face region bounded by the inset jaw contour and the lifted brows,
/// with the inter-brow vertex replaced by a point above the nose bridge.
/// Rasterized with the non-zero winding rule.
FaceMask build_face_mask(const LandmarkSet& dense, int width, int height,
                         const MaskOptions& options = {});

GrayImage apply_mask(const GrayImage& diff, const BinaryMap& mask);

BinaryMap binarize(const GrayImage& diff, int threshold);

inline constexpr int kAttentionMaps = 5;
inline constexpr std::array<int, kAttentionMaps> kDefaultThresholds{30, 35, 40,
                                                                    45, 50};

/// One pyramid level: five {0,1} maps of size x size.
struct AttentionLevel {
  int size = 0;
  std::array<std::vector<std::uint8_t>, kAttentionMaps> maps;

  std::uint8_t at(int k, int x, int y) const {
    return maps[k][static_cast<std::size_t>(y) * size + x];
  }
  bool operator==(const AttentionLevel&) const = default;
};

struct AttentionStack {
  std::array<int, kAttentionMaps> thresholds = kDefaultThresholds;
  std::array<BinaryMap, kAttentionMaps> maps;
  std::vector<AttentionLevel> pyramid;

  /// Level whose spatial size equals `size`; throws if absent.
  const AttentionLevel& level_for_size(int size) const;
  std::vector<int> pyramid_sizes() const;
  bool operator==(const AttentionStack&) const = default;
};

/// Builds the normalized {0,1} pyramid from the five binary maps, halving by
/// 2x2 max pooling while the size stays even.
std::vector<AttentionLevel> build_pyramid(
    const std::array<BinaryMap, kAttentionMaps>& maps);

struct AlignmentTemplate {
  int size = 224;
  std::array<Point, kFivePointCount> points{
      Point{78, 85}, Point{146, 85}, Point{112, 124}, Point{84, 157},
      Point{140, 157}};

  LandmarkSet landmarks() const;
};

struct PipelineOptions {
  AlignmentTemplate alignment;
  std::array<int, kAttentionMaps> thresholds = kDefaultThresholds;
  MaskOptions mask;
};

/// Everything the pipeline produces for one (action, neutral) pair.
struct AttentionResult {
  RgbImage aligned_action;
  RgbImage aligned_neutral;
  GrayImage difference;
  FaceMask face_mask;
  GrayImage masked_difference;
  AttentionStack stack;
};

/// `dense` is given in the action frame's coordinates.
AttentionResult generate_attention_stack(const RgbImage& action,
                                         const RgbImage& neutral,
                                         const LandmarkSet& five_action,
                                         const LandmarkSet& five_neutral,
                                         const LandmarkSet& dense,
                                         const PipelineOptions& options = {});

// ---------------------------------------------------------------------------
// Network-side helpers

enum class AttentionMode { channel_groups, mean_map };

/// Stacks the five maps of every sample at `size` into an (N, 5, size, size)
/// tensor of zeros and ones.
template <typename T>
BasicTensor<T> attention_maps(const std::vector<const AttentionStack*>& stacks,
                              int size) {
  BasicTensor<T> out(
      Shape{static_cast<int>(stacks.size()), kAttentionMaps, size, size});
  for (std::size_t n = 0; n < stacks.size(); ++n) {
    const AttentionLevel& lvl = stacks[n]->level_for_size(size);
    for (int k = 0; k < kAttentionMaps; ++k) {
      auto dst = out.channel(static_cast<int>(n), k);
      for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = static_cast<T>(lvl.maps[k][i]);
      }
    }
  }
  return out;
}

/// Per-element multiplier (1 + A) applied to the block input: channel group
/// k of six (k < 5) uses map k, the sixth group is left unchanged. In
/// mean_map mode every channel uses the mean of the five maps.
template <typename T>
BasicTensor<T> attention_factor(const Shape& x_shape, const BasicTensor<T>& maps,
                                AttentionMode mode) {
  const Shape& ms = maps.shape();
  if (x_shape.c % 6 != 0) {
    throw ShapeError("attention: channel count " + std::to_string(x_shape.c) +
                     " is not divisible by 6");
  }
  if (ms.n != x_shape.n || ms.c != kAttentionMaps || ms.h != x_shape.h ||
      ms.w != x_shape.w) {
    throw ShapeError("attention: maps " + ms.str() + " do not match input " +
                     x_shape.str());
  }
  BasicTensor<T> f(x_shape, T(1));
  const int group = x_shape.c / 6;
  for (int n = 0; n < x_shape.n; ++n) {
    for (int c = 0; c < x_shape.c; ++c) {
      auto dst = f.channel(n, c);
      if (mode == AttentionMode::channel_groups) {
        const int k = c / group;
        if (k >= kAttentionMaps) continue;
        auto a = maps.channel(n, k);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a[i];
      } else {
        for (int k = 0; k < kAttentionMaps; ++k) {
          auto a = maps.channel(n, k);
          for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += a[i] / T(kAttentionMaps);
          }
        }
      }
    }
  }
  return f;
}

template <typename T>
BasicTensor<T> compose_block_input(const BasicTensor<T>& x,
                                   const BasicTensor<T>& maps,
                                   AttentionMode mode = AttentionMode::channel_groups) {
  BasicTensor<T> out = x;
  const BasicTensor<T> f = attention_factor(x.shape(), maps, mode);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= f[i];
  return out;
}

/// Single-stack form: the stack level matching x's spatial size is applied
/// to every sample of x.
template <typename T>
BasicTensor<T> compose_block_input(const BasicTensor<T>& x,
                                   const AttentionStack& stack, int level,
                                   AttentionMode mode = AttentionMode::channel_groups) {
  if (level < 0 || level >= static_cast<int>(stack.pyramid.size())) {
    throw ShapeError("attention: pyramid level " + std::to_string(level) +
                     " out of range");
  }
  const int size = stack.pyramid[level].size;
  if (x.h() != size || x.w() != size) {
    throw ShapeError("attention: level " + std::to_string(level) + " is " +
                     std::to_string(size) + "px, input is " + x.shape().str());
  }
  std::vector<const AttentionStack*> refs(x.n(), &stack);
  return compose_block_input(x, attention_maps<T>(refs, size), mode);
}

/// RGB image as a (1, 3, size, size) tensor scaled to [0, 1]; when size is
/// smaller than the image the image is box-averaged by the integer ratio.
template <typename T>
BasicTensor<T> image_to_tensor(const RgbImage& img, int size) {
  if (img.width != img.height || size <= 0 || img.width % size != 0) {
    throw ShapeError("image_to_tensor: " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " image cannot be reduced to " +
                     std::to_string(size));
  }
  const int f = img.width / size;
  BasicTensor<T> out(Shape{1, 3, size, size});
  const double norm = 1.0 / (255.0 * f * f);
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        int sum = 0;
        for (int dy = 0; dy < f; ++dy) {
          for (int dx = 0; dx < f; ++dx) sum += img.at(x * f + dx, y * f + dy, ch);
        }
        out.at(0, ch, y, x) = static_cast<T>(sum * norm);
      }
    }
  }
  return out;
}

/// Tiles an (N, 3, H, W) image batch six times along channels (18 channels),
/// giving the network entry tensor before attention modulation.
template <typename T>
BasicTensor<T> tile_entry_input(const BasicTensor<T>& rgb) {
  const Shape& s = rgb.shape();
  if (s.c != 3) throw ShapeError("entry input must have 3 channels");
  BasicTensor<T> out(Shape{s.n, 18, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < 18; ++c) {
      auto src = rgb.channel(n, c % 3);
      std::copy(src.begin(), src.end(), out.channel(n, c).begin());
    }
  }
  return out;
}

}  // namespace cednn
