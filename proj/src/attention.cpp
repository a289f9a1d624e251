// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cednn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cednn {

LandmarkSet LandmarkSet::five(std::vector<Point> pts) {
  LandmarkSet s{LandmarkScheme::five_point, std::move(pts)};
  s.validate();
  return s;
}

LandmarkSet LandmarkSet::dense(std::vector<Point> pts) {
  LandmarkSet s{LandmarkScheme::dense68, std::move(pts)};
  s.validate();
  return s;
}

void LandmarkSet::validate() const {
  const std::size_t want =
      scheme == LandmarkScheme::five_point ? kFivePointCount : kDenseCount;
  if (points.size() != want) {
    throw std::invalid_argument("landmark set has " +
                                std::to_string(points.size()) +
                                " points, scheme needs " + std::to_string(want));
  }
  for (const Point& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw std::invalid_argument("landmark coordinate is not finite");
    }
  }
}

SimilarityTransform SimilarityTransform::inverse() const {
  const double det = a * a + b * b;
  if (det == 0.0) throw std::domain_error("singular similarity transform");
  SimilarityTransform inv;
  inv.a = a / det;
  inv.b = -b / det;
  inv.tx = -(inv.a * tx - inv.b * ty);
  inv.ty = -(inv.b * tx + inv.a * ty);
  return inv;
}

double SimilarityTransform::scale() const { return std::hypot(a, b); }
double SimilarityTransform::rotation() const { return std::atan2(b, a); }

SimilarityTransform estimate_similarity_transform(const LandmarkSet& src,
                                                  const LandmarkSet& target) {
  if (src.points.size() != target.points.size() || src.points.size() < 2) {
    throw std::invalid_argument(
        "similarity transform needs matching point sets of size >= 2");
  }
  const std::size_t n = src.points.size();
  Point ms, mt;
  for (std::size_t i = 0; i < n; ++i) {
    ms.x += src.points[i].x;
    ms.y += src.points[i].y;
    mt.x += target.points[i].x;
    mt.y += target.points[i].y;
  }
  ms.x /= n;
  ms.y /= n;
  mt.x /= n;
  mt.y /= n;
  double var = 0.0, dot = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double px = src.points[i].x - ms.x, py = src.points[i].y - ms.y;
    const double qx = target.points[i].x - mt.x, qy = target.points[i].y - mt.y;
    var += px * px + py * py;
    dot += px * qx + py * qy;
    cross += px * qy - py * qx;
  }
  if (!(var > 1e-12)) {
    throw std::invalid_argument("degenerate landmark set: zero variance");
  }
  SimilarityTransform t;
  t.a = dot / var;
  t.b = cross / var;
  t.tx = mt.x - (t.a * ms.x - t.b * ms.y);
  t.ty = mt.y - (t.b * ms.x + t.a * ms.y);
  return t;
}

RgbImage warp_image(const RgbImage& img, const SimilarityTransform& src_to_out,
                    int out_w, int out_h) {
  const SimilarityTransform inv = src_to_out.inverse();
  RgbImage out(out_w, out_h);
  auto sample = [&](int x, int y, int ch) -> double {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return 0.0;
    return img.at(x, y, ch);
  };
  for (int v = 0; v < out_h; ++v) {
    for (int u = 0; u < out_w; ++u) {
      const Point s = inv.apply({static_cast<double>(u), static_cast<double>(v)});
      const double fx0 = std::floor(s.x), fy0 = std::floor(s.y);
      const double fx = s.x - fx0, fy = s.y - fy0;
      // Far outside: skip the per-channel work.
      if (fx0 < -1 || fy0 < -1 || fx0 >= img.width || fy0 >= img.height) continue;
      const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = sample(x0, y0, ch) * (1 - fx) + sample(x0 + 1, y0, ch) * fx;
        const double bot =
            sample(x0, y0 + 1, ch) * (1 - fx) + sample(x0 + 1, y0 + 1, ch) * fx;
        const double val = top * (1 - fy) + bot * fy;
        out.at(u, v, ch) =
            static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
      }
    }
  }
  return out;
}

GrayImage difference_image(const RgbImage& action, const RgbImage& neutral) {
  if (!action.same_size(neutral.width, neutral.height)) {
    throw std::invalid_argument("difference_image: size mismatch");
  }
  GrayImage out(action.width, action.height);
  for (int y = 0; y < action.height; ++y) {
    for (int x = 0; x < action.width; ++x) {
      const int r = std::abs(action.at(x, y, 0) - neutral.at(x, y, 0));
      const int g = std::abs(action.at(x, y, 1) - neutral.at(x, y, 1));
      const int b = std::abs(action.at(x, y, 2) - neutral.at(x, y, 2));
      const double lum = 0.299 * r + 0.587 * g + 0.114 * b;
      out.at(x, y) =
          static_cast<std::uint8_t>(std::clamp(std::lround(lum), 0L, 255L));
    }
  }
  return out;
}

namespace {

double orient(Point a, Point b, Point c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

bool segments_cross(Point a, Point b, Point c, Point d) {
  const double o1 = orient(a, b, c), o2 = orient(a, b, d);
  const double o3 = orient(c, d, a), o4 = orient(c, d, b);
  return ((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) &&
         ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0));
}

bool polygon_self_intersects(const std::vector<Point>& poly) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the closing edge
      if (segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) {
        return true;
      }
    }
  }
  return false;
}

// Scanline fill sampling pixel (x, y) at integer coordinates; edges are
// half-open in y so shared vertices are counted once.
BinaryMap rasterize(const std::vector<Point>& poly, int width, int height) {
  BinaryMap out(width, height);
  struct Crossing {
    double x;
    int winding;
  };
  std::vector<Crossing> xs;
  const std::size_t n = poly.size();
  for (int y = 0; y < height; ++y) {
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Point p = poly[i], q = poly[(i + 1) % n];
      int dir = 0;
      if (p.y <= y && y < q.y) dir = 1;
      else if (q.y <= y && y < p.y) dir = -1;
      if (dir == 0) continue;
      const double x = p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y);
      xs.push_back({x, dir});
    }
    std::sort(xs.begin(), xs.end(),
              [](const Crossing& a, const Crossing& b) { return a.x < b.x; });
    int winding = 0;
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
      winding += xs[k].winding;
      if (winding == 0) continue;
      const double lo = std::max(0.0, std::ceil(xs[k].x));
      const double hi = std::min(static_cast<double>(width), std::ceil(xs[k + 1].x));
      for (int x = static_cast<int>(lo); x < static_cast<int>(hi); ++x) {
        out.at(x, y) = 255;
      }
    }
  }
  return out;
}

}  // namespace

FaceMask build_face_mask(const LandmarkSet& dense, int width, int height,
                         const MaskOptions& options) {
  if (dense.scheme != LandmarkScheme::dense68) {
    throw std::invalid_argument("face mask needs the dense landmark scheme");
  }
  dense.validate();
  const auto& pts = dense.points;
  Point centroid;
  for (const Point& p : pts) {
    centroid.x += p.x;
    centroid.y += p.y;
  }
  centroid.x /= pts.size();
  centroid.y /= pts.size();

  FaceMask result;
  auto& poly = result.polygon;
  for (int i = dense_index::contour_first; i <= dense_index::contour_last; ++i) {
    const Point p = pts[i];
    const double dx = centroid.x - p.x, dy = centroid.y - p.y;
    const double len = std::hypot(dx, dy);
    if (len > 0) {
      poly.push_back({p.x + options.contour_inset * dx / len,
                      p.y + options.contour_inset * dy / len});
    } else {
      poly.push_back(p);
    }
  }
  const Point glabella{
      pts[dense_index::nose_bridge_top].x,
      std::min(pts[dense_index::brow_inner_a].y, pts[dense_index::brow_inner_b].y) -
          options.brow_lift};
  for (int i = dense_index::brow_last; i >= dense_index::brow_first; --i) {
    poly.push_back({pts[i].x, pts[i].y - options.brow_lift});
    if (i == dense_index::brow_inner_b) poly.push_back(glabella);
  }
  result.self_intersecting = polygon_self_intersects(poly);
  result.mask = rasterize(poly, width, height);
  return result;
}

GrayImage apply_mask(const GrayImage& diff, const BinaryMap& mask) {
  if (diff.width != mask.width || diff.height != mask.height) {
    throw std::invalid_argument("apply_mask: size mismatch");
  }
  GrayImage out(diff.width, diff.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = mask.pixels[i] == 255 ? diff.pixels[i] : 0;
  }
  return out;
}

BinaryMap binarize(const GrayImage& diff, int threshold) {
  BinaryMap out(diff.width, diff.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = diff.pixels[i] >= threshold ? 255 : 0;
  }
  return out;
}

const AttentionLevel& AttentionStack::level_for_size(int size) const {
  for (const AttentionLevel& lvl : pyramid) {
    if (lvl.size == size) return lvl;
  }
  throw ShapeError("attention stack has no " + std::to_string(size) +
                   "px pyramid level");
}

std::vector<int> AttentionStack::pyramid_sizes() const {
  std::vector<int> s;
  for (const AttentionLevel& lvl : pyramid) s.push_back(lvl.size);
  return s;
}

std::vector<AttentionLevel> build_pyramid(
    const std::array<BinaryMap, kAttentionMaps>& maps) {
  const int size = maps[0].width;
  for (const BinaryMap& m : maps) {
    if (m.width != size || m.height != size) {
      throw ShapeError("attention maps must be square and equally sized");
    }
  }
  std::vector<AttentionLevel> levels;
  AttentionLevel base{size, {}};
  for (int k = 0; k < kAttentionMaps; ++k) {
    base.maps[k].resize(maps[k].pixels.size());
    std::transform(maps[k].pixels.begin(), maps[k].pixels.end(),
                   base.maps[k].begin(),
                   [](std::uint8_t v) -> std::uint8_t { return v ? 1 : 0; });
  }
  levels.push_back(std::move(base));
  while (levels.back().size % 2 == 0 && levels.back().size > 1) {
    const AttentionLevel& prev = levels.back();
    const int s = prev.size / 2;
    AttentionLevel next{s, {}};
    for (int k = 0; k < kAttentionMaps; ++k) {
      next.maps[k].resize(static_cast<std::size_t>(s) * s);
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          next.maps[k][static_cast<std::size_t>(y) * s + x] =
              std::max({prev.at(k, 2 * x, 2 * y), prev.at(k, 2 * x + 1, 2 * y),
                        prev.at(k, 2 * x, 2 * y + 1),
                        prev.at(k, 2 * x + 1, 2 * y + 1)});
        }
      }
    }
    levels.push_back(std::move(next));
  }
  return levels;
}

LandmarkSet AlignmentTemplate::landmarks() const {
  return LandmarkSet::five(std::vector<Point>(points.begin(), points.end()));
}

AttentionResult generate_attention_stack(const RgbImage& action,
                                         const RgbImage& neutral,
                                         const LandmarkSet& five_action,
                                         const LandmarkSet& five_neutral,
                                         const LandmarkSet& dense,
                                         const PipelineOptions& options) {
  five_action.validate();
  five_neutral.validate();
  for (std::size_t k = 1; k < options.thresholds.size(); ++k) {
    if (options.thresholds[k] <= options.thresholds[k - 1]) {
      throw std::invalid_argument("attention thresholds must be increasing");
    }
  }
  const int size = options.alignment.size;
  const LandmarkSet target = options.alignment.landmarks();
  const SimilarityTransform to_action =
      estimate_similarity_transform(five_action, target);
  const SimilarityTransform to_neutral =
      estimate_similarity_transform(five_neutral, target);

  AttentionResult r;
  r.aligned_action = warp_image(action, to_action, size, size);
  r.aligned_neutral = warp_image(neutral, to_neutral, size, size);
  r.difference = difference_image(r.aligned_action, r.aligned_neutral);

  LandmarkSet aligned_dense = dense;
  for (Point& p : aligned_dense.points) p = to_action.apply(p);
  r.face_mask = build_face_mask(aligned_dense, size, size, options.mask);
  r.masked_difference = apply_mask(r.difference, r.face_mask.mask);

  r.stack.thresholds = options.thresholds;
  for (int k = 0; k < kAttentionMaps; ++k) {
    r.stack.maps[k] = binarize(r.masked_difference, options.thresholds[k]);
  }
  r.stack.pyramid = build_pyramid(r.stack.maps);
  return r;
}

}  // namespace cednn
