// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cednn/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "cednn/io.hpp"
#include "json.hpp"

namespace cednn {

std::string to_string(CountConvention c) {
  return c == CountConvention::weights_only ? "weights_only" : "implementation";
}

namespace {

class ReportBuilder {
 public:
  explicit ReportBuilder(ComplexityReport& r) : r_(r) {}

  void add(std::string name, std::string kind, std::int64_t params,
           std::int64_t macs, Shape out) {
    r_.layers.push_back({std::move(name), kind, params, macs, out});
    r_.total_params += params;
    r_.total_macs += macs;
    ++r_.census[kind];
  }

 private:
  ComplexityReport& r_;
};

}  // namespace

ComplexityReport analyze_complexity(const ModelConfig& config,
                                    CountConvention convention) {
  config.validate();
  const bool impl = convention == CountConvention::implementation;
  ComplexityReport rep;
  rep.model_name = config.name();
  rep.convention = convention;
  rep.input_size = config.input_size;
  ReportBuilder b(rep);

  auto se_records = [&](const std::string& prefix, int channels, int spatial) {
    const std::int64_t hidden = (channels + config.se_reduction - 1) / config.se_reduction;
    b.add(prefix + ".se.squeeze", "se_fc", hidden * channels + hidden,
          hidden * channels, Shape{1, static_cast<int>(hidden), 1, 1});
    b.add(prefix + ".se.expand", "se_fc", hidden * channels + channels,
          hidden * channels, Shape{1, channels, 1, 1});
    (void)spatial;
  };

  const int nb = static_cast<int>(config.blocks.size());
  for (int i = 0; i < nb; ++i) {
    const BlockSpec& spec = config.blocks[i];
    const std::string p = "block" + std::to_string(spec.index);
    const std::int64_t s = config.block_spatial(i);
    const std::int64_t hw = s * s;
    const int c = spec.in_channels();
    const int c2 = spec.out_channels();
    const Shape mid{1, c, static_cast<int>(s), static_cast<int>(s)};
    const Shape out{1, c2, static_cast<int>(s), static_cast<int>(s)};

    const std::int64_t w1 = static_cast<std::int64_t>(c) * spec.M * 9;
    b.add(p + ".group1", "group_conv3x3", w1, hw * w1, mid);
    if (impl) b.add(p + ".norm1", "batch_norm", 2 * c, 0, mid);
    const std::int64_t w2 = static_cast<std::int64_t>(c) * spec.L;
    b.add(p + ".group2", "group_conv1x1", w2, hw * w2, mid);
    if (impl) b.add(p + ".norm2", "batch_norm", 2 * c, 0, mid);
    if (impl && spec.se_mode == SeMode::before_merge) se_records(p, c, s);
    const std::int64_t w3 = static_cast<std::int64_t>(c2) * spec.merged_channels();
    b.add(p + ".fusion", "conv1x1", w3, hw * w3, out);
    if (impl) b.add(p + ".norm3", "batch_norm", 2 * c2, 0, out);
    if (impl && spec.se_mode == SeMode::after_block) se_records(p, c2, s);
    if (i + 1 < nb) {
      b.add("pool" + std::to_string(spec.index), "max_pool", 0, 0,
            Shape{1, c2, static_cast<int>(s / 2), static_cast<int>(s / 2)});
    }
  }

  const std::int64_t fs = config.final_spatial();
  const std::int64_t fc = config.final_channels();
  const std::int64_t rc = config.reduce_channels;
  const std::int64_t tc = config.top_channels;
  const std::int64_t wr = rc * fc;
  b.add("reduce", "conv1x1", wr + (impl ? rc : 0), fs * fs * wr,
        Shape{1, static_cast<int>(rc), static_cast<int>(fs), static_cast<int>(fs)});
  const std::int64_t wt = tc * rc * fs * fs;
  b.add("top", "conv" + std::to_string(fs) + "x" + std::to_string(fs),
        wt + (impl ? tc : 0), wt, Shape{1, static_cast<int>(tc), 1, 1});
  b.add("top_pointwise", "conv1x1", tc * tc + (impl ? tc : 0), tc * tc,
        Shape{1, static_cast<int>(tc), 1, 1});
  b.add("classifier", "fc", tc * config.d + (impl ? config.d : 0), tc * config.d,
        Shape{1, config.d, 1, 1});
  return rep;
}

ComplexityReport count_params(const ModelConfig& config, CountConvention convention) {
  return analyze_complexity(config, convention);
}

ComplexityReport count_flops(const ModelConfig& config, CountConvention convention) {
  return analyze_complexity(config, convention);
}

std::string ComplexityReport::to_text() const {
  std::ostringstream os;
  os << "# model " << model_name << " convention " << to_string(convention)
     << " input " << input_size << "x" << input_size << "\n";
  os << "# name kind params macs output(CxHxW)\n";
  for (const LayerRecord& l : layers) {
    os << l.name << ' ' << l.kind << ' ' << l.params << ' ' << l.macs << ' '
       << l.output.c << 'x' << l.output.h << 'x' << l.output.w << '\n';
  }
  os << "total_params " << total_params << '\n';
  os << "total_macs " << total_macs << '\n';
  os << "total_flops_2x " << flops() << '\n';
  for (const auto& [kind, count] : census) os << "census " << kind << ' ' << count << '\n';
  return os.str();
}

std::string ComplexityReport::summary_json() const {
  nlohmann::json j;
  j["model"] = model_name;
  j["convention"] = to_string(convention);
  j["input_size"] = input_size;
  j["total_params"] = total_params;
  j["total_macs"] = total_macs;
  j["total_flops_2x"] = flops();
  j["params_millions"] = static_cast<double>(total_params) / 1e6;
  j["macs_billions"] = static_cast<double>(total_macs) / 1e9;
  j["layers"] = layers.size();
  nlohmann::json census_json = nlohmann::json::object();
  for (const auto& [kind, count] : census) census_json[kind] = count;
  j["census"] = census_json;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

GrayImage feature_map_grid(const Tensor& features, int sample) {
  const Shape& s = features.shape();
  if (sample < 0 || sample >= s.n) throw ShapeError("feature grid: bad sample index");
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(s.c))));
  GrayImage grid(side * s.w, side * s.h);
  for (int c = 0; c < s.c; ++c) {
    auto plane = features.channel(sample, c);
    const auto [lo_it, hi_it] = std::minmax_element(plane.begin(), plane.end());
    const double lo = *lo_it, hi = *hi_it;
    const int ox = (c % side) * s.w, oy = (c / side) * s.h;
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        std::uint8_t v = 128;
        if (hi > lo) {
          const double t = (plane[static_cast<std::size_t>(y) * s.w + x] - lo) / (hi - lo);
          v = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
        }
        grid.at(ox + x, oy + y) = v;
      }
    }
  }
  return grid;
}

GrayImage export_feature_maps(ModelParams<float>& model, const Tensor& input,
                              const std::vector<const AttentionStack*>& attention,
                              int block_index,
                              const std::filesystem::path& output_path) {
  const int nb = static_cast<int>(model.blocks.size());
  if (block_index < 1 || block_index > nb) {
    throw std::invalid_argument("block index " + std::to_string(block_index) +
                                " out of range 1.." + std::to_string(nb));
  }
  const ModelConfig& cfg = model.config;
  if (input.c() != kEntryChannels || input.h() != cfg.input_size) {
    throw ShapeError("feature export: input must be Nx18x" +
                     std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_size));
  }
  Tensor h = input;
  for (int i = 0; i < block_index; ++i) {
    if (i > 0) h = max_pool_2x2(h).output;
    BlockParams<float>& block = model.blocks[i];
    Tensor maps;
    if (block.spec.attention) maps = attention_maps<float>(attention, h.h());
    h = block_forward(h, block, cfg, block.spec.attention ? &maps : nullptr, Mode::eval);
  }
  GrayImage grid = feature_map_grid(h);
  if (!output_path.empty()) write_png(output_path, grid);
  return grid;
}

TimingReport time_inference(const std::function<void()>& forward, int trials) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  forward();
  TimingReport r;
  for (int t = 0; t < trials; ++t) {
    const auto start = std::chrono::steady_clock::now();
    forward();
    const auto stop = std::chrono::steady_clock::now();
    r.samples_ms.push_back(
        std::chrono::duration<double, std::milli>(stop - start).count());
  }
  r.mean_ms = std::accumulate(r.samples_ms.begin(), r.samples_ms.end(), 0.0) / trials;
  if (trials > 1) {
    double sq = 0.0;
    for (double v : r.samples_ms) sq += (v - r.mean_ms) * (v - r.mean_ms);
    r.stddev_ms = std::sqrt(sq / (trials - 1));
  }
  return r;
}

std::string timing_table(const std::string& name, const TimingReport& timing,
                         const ComplexityReport& complexity) {
  std::ostringstream os;
  os << "| Method | Inference time (ms) | Params (M) | FLOPs (x10^9) |\n";
  os << "|---|---|---|---|\n";
  os << std::fixed << "| " << name << " | " << std::setprecision(2) << timing.mean_ms
     << " ± " << timing.stddev_ms << " | " << complexity.total_params / 1e6 << " | "
     << complexity.total_macs / 1e9 << " |\n";
  os << "trials " << timing.samples_ms.size() << "\n";
  return os.str();
}

}  // namespace cednn
