// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cednn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "cednn/io.hpp"

namespace cednn {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kCentre = 112.0;

struct Box {
  double x0, y0, x1, y1;
};

// Brow centre, left cheek, right cheek, chin.
constexpr std::array<Box, 4> kPatches{Box{100, 72, 124, 84}, Box{60, 108, 84, 128},
                                      Box{140, 108, 164, 128}, Box{100, 170, 124, 186}};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double gauss(double u, double v, double cx, double cy, double sx, double sy) {
  const double dx = (u - cx) / sx, dy = (v - cy) / sy;
  return std::exp(-0.5 * (dx * dx + dy * dy));
}

// Soft-edged box weight with a one pixel ramp.
double box_weight(const Box& b, double u, double v) {
  const double wx = std::clamp(std::min(u - b.x0, b.x1 - u) + 0.5, 0.0, 1.0);
  const double wy = std::clamp(std::min(v - b.y0, b.y1 - v) + 0.5, 0.0, 1.0);
  return wx * wy;
}

struct Subject {
  std::string id;
  std::array<double, 3> tint;
};

std::array<double, 3> shade(const Subject& s, double u, double v,
                            const LabelVector* active, double gain) {
  std::array<double, 3> bg{50.0, 55.0 + 0.05 * v, 60.0};
  const double r = std::hypot((u - kCentre) / 88.0, (v - kCentre) / 112.0);
  const double face = smoothstep((1.0 - r) / 0.05);
  const double lateral = (u - kCentre) / 88.0;
  const double base_shade = 1.0 - 0.15 * lateral * lateral;
  const std::array<double, 3> skin{185.0, 145.0, 125.0};
  const double dark = 90.0 * (gauss(u, v, 78, 85, 8, 4) + gauss(u, v, 146, 85, 8, 4)) +
                      70.0 * (gauss(u, v, 78, 67, 16, 3) + gauss(u, v, 146, 67, 16, 3)) +
                      25.0 * gauss(u, v, 112, 116, 4, 10) +
                      40.0 * (gauss(u, v, 105, 130, 3, 2) + gauss(u, v, 119, 130, 3, 2));
  const double lips = gauss(u, v, 112, 157, 20, 4);
  std::array<double, 3> out{};
  for (int ch = 0; ch < 3; ++ch) {
    double f = skin[ch] * s.tint[ch] * base_shade - dark - lips * (ch == 0 ? 20.0 : 60.0);
    if (active) {
      for (std::size_t k = 0; k < active->size(); ++k) {
        if ((*active)[k]) f += gain * box_weight(kPatches[k], u, v);
      }
    }
    out[ch] = bg[ch] + face * (f - bg[ch]);
  }
  return out;
}

RgbImage render(const Subject& s, const SimilarityTransform& canon_to_frame, int size,
                const LabelVector* active, double gain) {
  const SimilarityTransform inv = canon_to_frame.inverse();
  RgbImage img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Point c = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const auto rgb = shade(s, c.x, c.y, active, gain);
      for (int ch = 0; ch < 3; ++ch) {
        img.at(x, y, ch) =
            static_cast<std::uint8_t>(std::lround(std::clamp(rgb[ch], 0.0, 255.0)));
      }
    }
  }
  return img;
}

SimilarityTransform jitter_transform(std::mt19937_64& rng, bool enabled) {
  if (!enabled) return {};
  const double angle = uniform(rng, -3.0, 3.0) * kPi / 180.0;
  const double scale = uniform(rng, 0.97, 1.03);
  const double tx = uniform(rng, -5.0, 5.0), ty = uniform(rng, -5.0, 5.0);
  SimilarityTransform t;
  t.a = scale * std::cos(angle);
  t.b = scale * std::sin(angle);
  // Rotate and scale about the frame centre, then translate.
  const Point c = t.apply({kCentre, kCentre});
  t.tx = kCentre - c.x + tx;
  t.ty = kCentre - c.y + ty;
  return t;
}

std::vector<Point> transform_all(const std::vector<Point>& pts,
                                 const SimilarityTransform& t) {
  std::vector<Point> out;
  out.reserve(pts.size());
  for (const Point& p : pts) out.push_back(t.apply(p));
  return out;
}

Subject make_subject(int index, std::mt19937_64& rng) {
  std::ostringstream id;
  id << 'S' << (index + 1 < 10 ? "0" : "") << index + 1;
  Subject s{id.str(), {}};
  const double base = uniform(rng, 0.85, 1.08);
  for (double& t : s.tint) t = base * uniform(rng, 0.96, 1.04);
  return s;
}

SyntheticFrame make_frame(const Subject& s, std::mt19937_64& rng,
                          const SyntheticOptions& o, bool identical) {
  SyntheticFrame f;
  f.subject = s.id;
  for (int k = 0; k < o.num_aus; ++k) f.labels.push_back(static_cast<std::uint8_t>(rng() >> 63));
  const SimilarityTransform ta = jitter_transform(rng, o.jitter);
  const SimilarityTransform tn = identical ? ta : jitter_transform(rng, o.jitter);
  f.action = render(s, ta, o.size, identical ? nullptr : &f.labels, o.patch_gain);
  f.neutral = identical ? f.action : render(s, tn, o.size, nullptr, o.patch_gain);
  const auto five = canonical_five_landmarks();
  f.five_action = LandmarkSet::five(transform_all(five, ta));
  f.five_neutral = LandmarkSet::five(transform_all(five, tn));
  f.dense_action = LandmarkSet::dense(transform_all(canonical_dense_landmarks(), ta));
  return f;
}

}  // namespace

std::vector<Point> canonical_dense_landmarks() {
  std::vector<Point> p;
  p.reserve(kDenseCount);
  for (int i = 0; i <= 16; ++i) {
    const double t = kPi - i * kPi / 16.0;
    p.push_back({kCentre + 70.0 * std::cos(t), 100.0 + 95.0 * std::sin(t)});
  }
  for (int side = 0; side < 2; ++side) {
    const double x0 = side == 0 ? 55.0 : 124.0;
    for (int i = 0; i < 5; ++i) {
      const double t = i / 4.0;
      p.push_back({x0 + 45.0 * t, 68.0 - 4.0 * std::sin(kPi * t)});
    }
  }
  for (double y : {80.0, 95.0, 110.0, 124.0}) p.push_back({kCentre, y});
  for (double x : {100.0, 106.0, 112.0, 118.0, 124.0}) p.push_back({x, 130.0});
  const std::array<Point, 6> eye{Point{-12, 0}, Point{-4, -5}, Point{4, -5},
                                 Point{12, 0},  Point{4, 5},   Point{-4, 5}};
  for (double cx : {78.0, 146.0}) {
    for (const Point& e : eye) p.push_back({cx + e.x, 85.0 + e.y});
  }
  auto lip_ring = [&](int count, double rx, double ry) {
    const int half = count / 2;
    for (int k = 0; k < count; ++k) {
      const double phi = k <= half ? kPi - k * kPi / half : -(k - half) * kPi / half;
      p.push_back({kCentre + rx * std::cos(phi), 157.0 - ry * std::sin(phi)});
    }
  };
  lip_ring(12, 28.0, 10.0);
  lip_ring(8, 18.0, 4.0);
  return p;
}

std::vector<Point> canonical_five_landmarks() {
  const auto d = canonical_dense_landmarks();
  auto mean = [&](int first) {
    Point m;
    for (int i = first; i < first + 6; ++i) {
      m.x += d[i].x / 6.0;
      m.y += d[i].y / 6.0;
    }
    return m;
  };
  return {mean(36), mean(42), d[30], d[48], d[54]};
}

std::vector<SyntheticFrame> make_synthetic_frames(const SyntheticOptions& options) {
  if (options.num_aus < 1 || options.num_aus > static_cast<int>(kPatches.size())) {
    throw std::invalid_argument("synthetic data supports 1 to 4 pseudo-AUs");
  }
  std::mt19937_64 rng(options.seed);
  std::vector<SyntheticFrame> frames;
  for (int s = 0; s < options.subjects; ++s) {
    const Subject subject = make_subject(s, rng);
    for (int f = 0; f < options.frames_per_subject; ++f) {
      frames.push_back(make_frame(subject, rng, options, false));
    }
  }
  return frames;
}

SyntheticFrame make_identical_pair(std::uint64_t seed, int num_aus) {
  std::mt19937_64 rng(seed);
  SyntheticOptions o;
  o.num_aus = num_aus;
  return make_frame(make_subject(0, rng), rng, o, true);
}

std::filesystem::path write_synthetic_dataset(const std::vector<SyntheticFrame>& frames,
                                              const std::filesystem::path& dir) {
  DatasetManifest m;
  m.base_dir = dir;
  const std::size_t aus = frames.empty() ? 0 : frames.front().labels.size();
  for (std::size_t k = 0; k < aus; ++k) m.au_names.push_back("P" + std::to_string(k + 1));
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const SyntheticFrame& f = frames[i];
    if (!fold_of.count(f.subject)) {
      const int next = static_cast<int>(fold_of.size()) % 3 + 1;
      fold_of[f.subject] = next;
    }
    std::ostringstream stem;
    stem << f.subject << '_' << i;
    const std::string s = stem.str();
    ManifestRecord r;
    r.subject_id = f.subject;
    r.frame_path = "images/" + s + "_action.png";
    r.neutral_frame_path = "images/" + s + "_neutral.png";
    r.landmarks5_path = "landmarks/" + s + "_five_action.txt";
    r.landmarks5_neutral_path = "landmarks/" + s + "_five_neutral.txt";
    r.landmarks_dense_path = "landmarks/" + s + "_dense.txt";
    r.fold_id = fold_of[f.subject];
    r.labels = f.labels;
    write_png(dir / r.frame_path, f.action);
    write_png(dir / r.neutral_frame_path, f.neutral);
    write_landmarks(dir / r.landmarks5_path, f.five_action);
    write_landmarks(dir / r.landmarks5_neutral_path, f.five_neutral);
    write_landmarks(dir / r.landmarks_dense_path, f.dense_action);
    m.records.push_back(std::move(r));
  }
  const auto path = dir / "manifest.csv";
  save_manifest(path, m);
  return path;
}

}  // namespace cednn
