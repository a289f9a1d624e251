// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cednn/image.hpp"
#include "cednn/model.hpp"

namespace cednn {

/// weights_only: convolution and fully connected weights only, SE excluded.
/// implementation: every trainable value of the built model (biases, norm
/// scale/shift, SE stages).
enum class CountConvention { weights_only, implementation };

std::string to_string(CountConvention c);

struct LayerRecord {
  std::string name;
  std::string kind;
  std::int64_t params = 0;
  std::int64_t macs = 0;  // multiply-accumulates for one 1-sample forward pass
  Shape output;
};

struct ComplexityReport {
  std::string model_name;
  CountConvention convention = CountConvention::weights_only;
  int input_size = 224;
  std::vector<LayerRecord> layers;
  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;
  std::map<std::string, int> census;  // layer count by kind

  std::int64_t flops() const { return 2 * total_macs; }
  std::string to_text() const;
  std::string summary_json() const;
};

/// Closed-form per-layer accounting; never instantiates parameters.
ComplexityReport analyze_complexity(const ModelConfig& config,
                                    CountConvention convention);
ComplexityReport count_params(const ModelConfig& config,
                              CountConvention convention = CountConvention::weights_only);
ComplexityReport count_flops(const ModelConfig& config,
                             CountConvention convention = CountConvention::weights_only);

/// Per-channel min-max normalization to [0, 255] (constant channels become
/// 128), tiled row-major into a ceil(sqrt(C)) x ceil(sqrt(C)) grid.
GrayImage feature_map_grid(const Tensor& features, int sample = 0);

/// Runs the model in eval mode up to `block_index` (1-based) and writes the
/// block output grid of sample 0 to `output_path` as PNG.
GrayImage export_feature_maps(ModelParams<float>& model, const Tensor& input,
                              const std::vector<const AttentionStack*>& attention,
                              int block_index,
                              const std::filesystem::path& output_path);

struct TimingReport {
  std::vector<double> samples_ms;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;  // sample standard deviation
};

/// One untimed warm-up call, then `trials` timed calls.
TimingReport time_inference(const std::function<void()>& forward, int trials = 12);

/// Table row "name | mean ± std | params (M) | FLOPs (x10^9)".
std::string timing_table(const std::string& name, const TimingReport& timing,
                         const ComplexityReport& complexity);

}  // namespace cednn
