// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cednn/attention.hpp"
#include "cednn/ops.hpp"
#include "cednn/tensor.hpp"

namespace cednn {

enum class Connection { res, dense };
enum class SeMode { none, after_block, before_merge };

std::string to_string(Connection c);
std::string to_string(SeMode m);
std::string to_string(AttentionMode m);
Connection parse_connection(const std::string& s);
SeMode parse_se_mode(const std::string& s);
AttentionMode parse_attention_mode(const std::string& s);

inline constexpr int kEntryChannels = 18;
inline constexpr int kAllowedGroups[] = {1, 2, 3, 6, 9, 18};

struct BlockSpec {
  int index = 1;  // 1-based
  int L = 6;
  int M = 3;
  Connection connection = Connection::res;
  SeMode se_mode = SeMode::none;
  bool attention = false;

  int in_channels() const { return L * M; }
  /// Both connection modes hand 2C channels to the next stage.
  int out_channels() const { return 2 * L * M; }
  int merged_channels() const {
    return connection == Connection::res ? L * M : 2 * L * M;
  }
};

struct ModelConfig {
  std::vector<BlockSpec> blocks;
  int d = 12;
  int attention_depth = 2;
  int input_size = 224;
  int se_reduction = 16;
  int reduce_channels = 144;
  int top_channels = 1024;
  AttentionMode attention_mode = AttentionMode::channel_groups;
  /// Drops every normalization and activation; the network becomes a
  /// composition of linear maps (used for closed-form checks).
  bool linear = false;

  /// Six-block layout: L groups everywhere, M doubling per block, attention
  /// on the first `attention_depth` blocks.
  static ModelConfig standard(Connection connection, int L, int d = 12,
                              int attention_depth = 2,
                              SeMode se_mode = SeMode::none);

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;

  int block_spatial(int block) const;  // 0-based block position
  int final_spatial() const;
  int final_channels() const { return blocks.back().out_channels(); }
  std::string name() const;  // e.g. "res-L6M3"
};

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
struct ConvLayer {
  ConvParams<T> params;  // weight gradient lives in params.weight.grad()
  std::vector<T> bias_grad;
};

template <typename T>
struct NormLayer {
  BatchNormParams<T> params;
  std::vector<T> scale_grad;
  std::vector<T> shift_grad;
};

template <typename T>
struct DenseLayer {
  FcParams<T> params;
  std::vector<T> bias_grad;
};

template <typename T>
struct SeParams {
  DenseLayer<T> squeeze;  // C -> ceil(C / r)
  DenseLayer<T> expand;   // ceil(C / r) -> C
};

template <typename T>
struct BlockParams {
  BlockSpec spec;
  ShufflePlan plan;
  ConvLayer<T> group1;  // 3x3, groups = L
  ConvLayer<T> group2;  // 1x1, groups = M
  ConvLayer<T> fusion;  // 1x1, merged -> 2C
  NormLayer<T> norm1, norm2, norm3;
  std::optional<SeParams<T>> se;
};

enum class ParamKind { weight, bias, norm, buffer };

template <typename T>
struct ParamRef {
  std::string name;
  std::vector<int> shape;
  std::span<T> value;
  std::span<T> grad;  // empty for buffers
  ParamKind kind;

  std::size_t count() const { return value.size(); }
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  std::vector<BlockParams<T>> blocks;
  ConvLayer<T> reduce;  // 1x1, final channels -> reduce_channels
  ConvLayer<T> top;     // k x k valid, k = final spatial size
  ConvLayer<T> top_pointwise;
  DenseLayer<T> classifier;

  /// Every parameter and running-statistic buffer in a fixed order.
  std::vector<ParamRef<T>> inventory();
  /// Number of trainable values (weights, biases, norm scale/shift).
  std::size_t trainable_count();
  void zero_grad();
};

template <typename T>
ModelParams<T> build_model(const ModelConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Execution

template <typename T>
struct ConvUnitCache {
  BasicTensor<T> input;
  BatchNormCache<T> norm;
  BasicTensor<T> output;
};

template <typename T>
struct SeCache {
  BasicTensor<T> input;
  BasicTensor<T> squeezed;
  BasicTensor<T> hidden;  // after relu
  BasicTensor<T> weights; // after sigmoid
};

template <typename T>
struct BlockCache {
  Shape input_shape;
  BasicTensor<T> attention;  // (1 + A) multiplier, empty without attention
  BasicTensor<T> modulated;
  ConvUnitCache<T> unit1, unit2, unit3;
  SeCache<T> se;
  Shape merged_branch_shape;
};

template <typename T>
struct ForwardState {
  Mode mode = Mode::eval;
  std::vector<BlockCache<T>> blocks;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<Shape> pool_input_shapes;
  ConvUnitCache<T> reduce, top, top_pointwise;
  BasicTensor<T> classifier_input;
  /// Output shape of every stage in execution order, for audit against the
  /// analytic complexity report.
  std::vector<std::pair<std::string, Shape>> trace;
};

template <typename T>
struct ForwardOutput {
  BasicTensor<T> logits;         // (N, d, 1, 1)
  BasicTensor<T> probabilities;  // sigmoid(logits)
};

/// Squeeze-and-excitation channel reweighting.
template <typename T>
BasicTensor<T> se_forward(const BasicTensor<T>& x, const SeParams<T>& se,
                          SeCache<T>* cache = nullptr);
template <typename T>
BasicTensor<T> se_backward(const BasicTensor<T>& upstream, SeParams<T>& se,
                           const SeCache<T>& cache);

/// One interleaved-group-convolution block. `maps` is (N, 5, H, W) when the
/// block takes attention, otherwise null.
template <typename T>
BasicTensor<T> block_forward(const BasicTensor<T>& x, BlockParams<T>& block,
                             const ModelConfig& config, const BasicTensor<T>* maps,
                             Mode mode, BlockCache<T>* cache = nullptr);
/// Accumulates parameter gradients and returns the gradient w.r.t. x.
template <typename T>
BasicTensor<T> block_backward(const BasicTensor<T>& upstream,
                              BlockParams<T>& block, const ModelConfig& config,
                              const BlockCache<T>& cache);

/// `input` is the (N, 18, S, S) entry tensor; `attention` holds one stack per
/// sample and may be empty only when attention_depth is 0.
template <typename T>
ForwardOutput<T> model_forward(const BasicTensor<T>& input,
                               const std::vector<const AttentionStack*>& attention,
                               ModelParams<T>& params, Mode mode,
                               ForwardState<T>* state = nullptr);

/// Accumulates gradients of every parameter given dLoss/dlogits.
template <typename T>
void model_backward(const BasicTensor<T>& logits_grad, ModelParams<T>& params,
                    const ForwardState<T>& state);

}  // namespace cednn
