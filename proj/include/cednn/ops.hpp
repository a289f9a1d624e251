// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Forward and backward kernels for every layer the network uses. All kernels
// are plain loops over NCHW tensors; reductions accumulate in double.

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cednn/tensor.hpp"

namespace cednn {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Grouped convolution

template <typename T>
struct ConvParams {
  BasicTensor<T> weight;  // (C_out, C_in / groups, kH, kW)
  std::vector<T> bias;    // empty, or one entry per output channel
  int groups = 1;
  int stride = 1;
  int padding = 0;

  int out_channels() const { return weight.n(); }
  int in_channels() const { return weight.c() * groups; }
  int kernel_h() const { return weight.h(); }
  int kernel_w() const { return weight.w(); }
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  std::vector<T> bias;
};

namespace detail {

template <typename T>
void validate_conv(const Shape& in, const ConvParams<T>& p) {
  if (p.groups <= 0) throw ShapeError("conv: groups must be positive");
  if (p.stride <= 0) throw ShapeError("conv: stride must be positive");
  if (p.padding < 0) throw ShapeError("conv: padding must be non-negative");
  const int c_out = p.out_channels();
  if (c_out % p.groups != 0) {
    throw ShapeError("conv: C_out " + std::to_string(c_out) +
                     " not divisible by groups " + std::to_string(p.groups));
  }
  if (in.c % p.groups != 0) {
    throw ShapeError("conv: C_in " + std::to_string(in.c) +
                     " not divisible by groups " + std::to_string(p.groups));
  }
  if (in.c != p.in_channels()) {
    throw ShapeError("conv: input has " + std::to_string(in.c) +
                     " channels, weights expect " +
                     std::to_string(p.in_channels()));
  }
  if (!p.bias.empty() && static_cast<int>(p.bias.size()) != c_out) {
    throw ShapeError("conv: bias length does not match C_out");
  }
  if (in.h + 2 * p.padding < p.kernel_h() ||
      in.w + 2 * p.padding < p.kernel_w()) {
    throw ShapeError("conv: kernel larger than padded input " + in.str());
  }
}

// Range of output columns whose tap `k` lands inside [0, extent).
inline void valid_range(int extent, int out_extent, int stride, int padding,
                        int k, int& lo, int& hi) {
  // need 0 <= o*stride - padding + k <= extent - 1
  const int a = padding - k;
  lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  const int b = extent - 1 + padding - k;
  hi = b < 0 ? -1 : std::min(out_extent - 1, b / stride);
}

}  // namespace detail

inline Shape conv_output_shape(const Shape& in, int c_out, int kh, int kw,
                               int stride, int padding) {
  return Shape{in.n, c_out, (in.h + 2 * padding - kh) / stride + 1,
               (in.w + 2 * padding - kw) / stride + 1};
}

template <typename T>
BasicTensor<T> conv2d_grouped(const BasicTensor<T>& input,
                              const ConvParams<T>& p) {
  const Shape& is = input.shape();
  detail::validate_conv(is, p);
  const int kh = p.kernel_h(), kw = p.kernel_w();
  const Shape os =
      conv_output_shape(is, p.out_channels(), kh, kw, p.stride, p.padding);
  BasicTensor<T> out(os);
  const int cig = is.c / p.groups;
  const int cog = os.c / p.groups;
  for (int n = 0; n < is.n; ++n) {
    for (int oc = 0; oc < os.c; ++oc) {
      const int g = oc / cog;
      T* dst = out.channel(n, oc).data();
      if (!p.bias.empty()) std::fill(dst, dst + os.plane(), p.bias[oc]);
      for (int icl = 0; icl < cig; ++icl) {
        const T* src = input.channel(n, g * cig + icl).data();
        for (int ky = 0; ky < kh; ++ky) {
          int oy_lo, oy_hi;
          detail::valid_range(is.h, os.h, p.stride, p.padding, ky, oy_lo,
                              oy_hi);
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = p.weight.at(oc, icl, ky, kx);
            if (wv == T(0)) continue;
            int ox_lo, ox_hi;
            detail::valid_range(is.w, os.w, p.stride, p.padding, kx, ox_lo,
                                ox_hi);
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const int iy = oy * p.stride - p.padding + ky;
              const T* srow = src + static_cast<std::size_t>(iy) * is.w;
              T* drow = dst + static_cast<std::size_t>(oy) * os.w;
              if (p.stride == 1) {
                const T* s = srow - p.padding + kx;
                for (int ox = ox_lo; ox <= ox_hi; ++ox) drow[ox] += wv * s[ox];
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                  drow[ox] += wv * srow[ox * p.stride - p.padding + kx];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_grouped_backward(const BasicTensor<T>& input,
                                     const ConvParams<T>& p,
                                     const BasicTensor<T>& upstream) {
  const Shape& is = input.shape();
  detail::validate_conv(is, p);
  const int kh = p.kernel_h(), kw = p.kernel_w();
  const Shape os =
      conv_output_shape(is, p.out_channels(), kh, kw, p.stride, p.padding);
  if (!(upstream.shape() == os)) {
    throw ShapeError("conv backward: upstream gradient " +
                     upstream.shape().str() + " does not match output " +
                     os.str());
  }
  ConvGrads<T> g{BasicTensor<T>(is), BasicTensor<T>(p.weight.shape()), {}};
  const int cig = is.c / p.groups;
  const int cog = os.c / p.groups;
  if (!p.bias.empty()) {
    g.bias.assign(os.c, T(0));
    for (int oc = 0; oc < os.c; ++oc) {
      Accum<T> acc = 0.0;
      for (int n = 0; n < is.n; ++n) {
        for (T v : upstream.channel(n, oc)) acc += v;
      }
      g.bias[oc] = static_cast<T>(acc);
    }
  }
  for (int oc = 0; oc < os.c; ++oc) {
    const int grp = oc / cog;
    for (int icl = 0; icl < cig; ++icl) {
      const int ic = grp * cig + icl;
      for (int ky = 0; ky < kh; ++ky) {
        int oy_lo, oy_hi;
        detail::valid_range(is.h, os.h, p.stride, p.padding, ky, oy_lo, oy_hi);
        for (int kx = 0; kx < kw; ++kx) {
          int ox_lo, ox_hi;
          detail::valid_range(is.w, os.w, p.stride, p.padding, kx, ox_lo,
                              ox_hi);
          const T wv = p.weight.at(oc, icl, ky, kx);
          Accum<T> wacc = 0.0;
          for (int n = 0; n < is.n; ++n) {
            const T* src = input.channel(n, ic).data();
            T* dsrc = g.input.channel(n, ic).data();
            const T* up = upstream.channel(n, oc).data();
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const int iy = oy * p.stride - p.padding + ky;
              const std::size_t ibase = static_cast<std::size_t>(iy) * is.w;
              const T* urow = up + static_cast<std::size_t>(oy) * os.w;
              T racc = T(0);
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                const std::size_t ii = ibase + ox * p.stride - p.padding + kx;
                racc += urow[ox] * src[ii];
                dsrc[ii] += wv * urow[ox];
              }
              wacc += racc;
            }
          }
          g.weight.at(oc, icl, ky, kx) = static_cast<T>(wacc);
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Channel shuffle

/// Permutation between the first-stage layout (L groups of M channels) and
/// the second-stage layout (M groups of L channels). Channel l*M + m of the
/// first layout sits at m*L + l in the second.
struct ShufflePlan {
  int L = 1;
  int M = 1;
  std::vector<int> forward_index;  // source channel -> destination channel
  std::vector<int> inverse_index;  // destination channel -> source channel

  int channels() const { return L * M; }
};

inline ShufflePlan make_shuffle_plan(int L, int M) {
  if (L <= 0 || M <= 0) throw ShapeError("shuffle plan: L and M must be > 0");
  ShufflePlan plan{L, M, std::vector<int>(L * M), std::vector<int>(L * M)};
  for (int l = 0; l < L; ++l) {
    for (int m = 0; m < M; ++m) {
      plan.forward_index[l * M + m] = m * L + l;
      plan.inverse_index[m * L + l] = l * M + m;
    }
  }
  return plan;
}

namespace detail {

template <typename T>
BasicTensor<T> permute_channels(const BasicTensor<T>& input,
                                const std::vector<int>& dest_of_source) {
  const Shape& s = input.shape();
  if (s.c != static_cast<int>(dest_of_source.size())) {
    throw ShapeError("channel shuffle: input has " + std::to_string(s.c) +
                     " channels, plan expects " +
                     std::to_string(dest_of_source.size()));
  }
  BasicTensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      auto src = input.channel(n, c);
      std::copy(src.begin(), src.end(),
                out.channel(n, dest_of_source[c]).begin());
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
BasicTensor<T> channel_shuffle(const BasicTensor<T>& input,
                               const ShufflePlan& plan) {
  return detail::permute_channels(input, plan.forward_index);
}

template <typename T>
BasicTensor<T> channel_unshuffle(const BasicTensor<T>& input,
                                 const ShufflePlan& plan) {
  return detail::permute_channels(input, plan.inverse_index);
}

// ---------------------------------------------------------------------------
// 2x2 max pooling

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
PoolResult<T> max_pool_2x2(const BasicTensor<T>& input) {
  const Shape& s = input.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("max_pool_2x2: odd spatial size " + s.str());
  }
  PoolResult<T> r{BasicTensor<T>(Shape{s.n, s.c, s.h / 2, s.w / 2}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; y += 2) {
        for (int x = 0; x < s.w; x += 2, ++o) {
          std::size_t best = input.offset(n, c, y, x);
          for (std::size_t cand :
               {input.offset(n, c, y, x + 1), input.offset(n, c, y + 1, x),
                input.offset(n, c, y + 1, x + 1)}) {
            if (input[cand] > input[best]) best = cand;
          }
          r.output[o] = input[best];
          r.argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> max_pool_2x2_backward(const BasicTensor<T>& upstream,
                                     const std::vector<std::uint32_t>& argmax,
                                     const Shape& input_shape) {
  if (upstream.size() != argmax.size()) {
    throw ShapeError("max_pool backward: gradient/argmax size mismatch");
  }
  BasicTensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += upstream[i];
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

template <typename T>
bool channel_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b,
                       const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) return false;
  if (sb.c == 1 && sb.n == sa.n && sb.h == sa.h && sb.w == sa.w) return true;
  throw ShapeError(std::string(op) + ": incompatible shapes " + sa.str() +
                   " and " + sb.str());
}

}  // namespace detail

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const bool bc = detail::channel_broadcast(a, b, "add");
  BasicTensor<T> out = a;
  const Shape& s = a.shape();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      auto dst = out.channel(n, c);
      auto src = b.channel(n, bc ? 0 : c);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const bool bc = detail::channel_broadcast(a, b, "multiply");
  BasicTensor<T> out = a;
  const Shape& s = a.shape();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      auto dst = out.channel(n, c);
      auto src = b.channel(n, bc ? 0 : c);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= src[i];
    }
  }
  return out;
}

template <typename T>
struct BinaryGrads {
  BasicTensor<T> a;
  BasicTensor<T> b;
};

template <typename T>
BinaryGrads<T> add_backward(const BasicTensor<T>& upstream,
                            const Shape& b_shape) {
  BinaryGrads<T> g{upstream, BasicTensor<T>(b_shape)};
  if (b_shape == upstream.shape()) {
    g.b = upstream;
    return g;
  }
  const Shape& s = upstream.shape();
  for (int n = 0; n < s.n; ++n) {
    auto dst = g.b.channel(n, 0);
    for (int c = 0; c < s.c; ++c) {
      auto src = upstream.channel(n, c);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  return g;
}

template <typename T>
BinaryGrads<T> multiply_backward(const BasicTensor<T>& upstream,
                                 const BasicTensor<T>& a,
                                 const BasicTensor<T>& b) {
  const bool bc = detail::channel_broadcast(a, b, "multiply backward");
  BinaryGrads<T> g{BasicTensor<T>(a.shape()), BasicTensor<T>(b.shape())};
  const Shape& s = a.shape();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const int bcn = bc ? 0 : c;
      auto up = upstream.channel(n, c);
      auto av = a.channel(n, c);
      auto bv = b.channel(n, bcn);
      auto ga = g.a.channel(n, c);
      auto gb = g.b.channel(n, bcn);
      for (std::size_t i = 0; i < up.size(); ++i) {
        ga[i] = up[i] * bv[i];
        gb[i] += up[i] * av[i];
      }
    }
  }
  return g;
}

/// Channel concatenation; `a` occupies channels [0, C_a).
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a,
                               const BasicTensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: incompatible shapes " + sa.str() +
                     " and " + sb.str());
  }
  BasicTensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    for (int c = 0; c < sa.c; ++c) {
      auto src = a.channel(n, c);
      std::copy(src.begin(), src.end(), out.channel(n, c).begin());
    }
    for (int c = 0; c < sb.c; ++c) {
      auto src = b.channel(n, c);
      std::copy(src.begin(), src.end(), out.channel(n, sa.c + c).begin());
    }
  }
  return out;
}

template <typename T>
BinaryGrads<T> concat_channels_backward(const BasicTensor<T>& upstream,
                                        int channels_a) {
  const Shape& s = upstream.shape();
  if (channels_a < 0 || channels_a > s.c) {
    throw ShapeError("concat backward: split point out of range");
  }
  BinaryGrads<T> g{BasicTensor<T>(Shape{s.n, channels_a, s.h, s.w}),
                   BasicTensor<T>(Shape{s.n, s.c - channels_a, s.h, s.w})};
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      auto src = upstream.channel(n, c);
      auto dst = c < channels_a ? g.a.channel(n, c)
                                : g.b.channel(n, c - channels_a);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return out;
}

/// `output` is the forward result of relu.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& upstream,
                             const BasicTensor<T>& output) {
  if (!(upstream.shape() == output.shape())) {
    throw ShapeError("relu backward: shape mismatch");
  }
  BasicTensor<T> g = upstream;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(output[i] > T(0))) g[i] = T(0);
  }
  return g;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (auto& v : out.values()) v = sigmoid(v);
  return out;
}

/// `output` is the forward result of sigmoid.
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& upstream,
                                const BasicTensor<T>& output) {
  if (!(upstream.shape() == output.shape())) {
    throw ShapeError("sigmoid backward: shape mismatch");
  }
  BasicTensor<T> g = upstream;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] *= output[i] * (T(1) - output[i]);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename T>
struct BatchNormParams {
  std::vector<T> scale;
  std::vector<T> shift;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;

  static BatchNormParams identity(int channels) {
    return BatchNormParams{std::vector<T>(channels, T(1)),
                           std::vector<T>(channels, T(0)),
                           std::vector<T>(channels, T(0)),
                           std::vector<T>(channels, T(1))};
  }
  int channels() const { return static_cast<int>(scale.size()); }
};

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::train;
  BasicTensor<T> normalized;
  std::vector<T> inv_std;
};

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  std::vector<T> scale;
  std::vector<T> shift;
};

/// Per-channel normalization over (N, H, W). Train mode updates the running
/// statistics in `params` (unbiased variance, momentum-weighted).
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input,
                          BatchNormParams<T>& params, Mode mode,
                          BatchNormCache<T>* cache = nullptr) {
  const Shape& s = input.shape();
  if (params.channels() != s.c || params.shift.size() != params.scale.size()) {
    throw ShapeError("batch_norm: parameter/channel mismatch for " + s.str());
  }
  BasicTensor<T> out(s);
  BasicTensor<T> xhat(s);
  std::vector<T> inv_std(s.c);
  const Accum<T> count = static_cast<Accum<T>>(s.n) * s.plane();
  for (int c = 0; c < s.c; ++c) {
    Accum<T> mean, var;
    if (mode == Mode::train) {
      Accum<T> sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        for (T v : input.channel(n, c)) sum += v;
      }
      mean = sum / count;
      Accum<T> sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        for (T v : input.channel(n, c)) sq += (v - mean) * (v - mean);
      }
      var = sq / count;
      const Accum<T> unbiased = count > 1 ? sq / (count - 1) : var;
      params.running_mean[c] = static_cast<T>(
          (1 - params.momentum) * params.running_mean[c] +
          params.momentum * mean);
      params.running_var[c] = static_cast<T>(
          (1 - params.momentum) * params.running_var[c] +
          params.momentum * unbiased);
    } else {
      mean = params.running_mean[c];
      var = params.running_var[c];
    }
    const Accum<T> istd = 1.0 / std::sqrt(var + params.epsilon);
    inv_std[c] = static_cast<T>(istd);
    for (int n = 0; n < s.n; ++n) {
      auto src = input.channel(n, c);
      auto xh = xhat.channel(n, c);
      auto dst = out.channel(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        const Accum<T> z = (src[i] - mean) * istd;
        xh[i] = static_cast<T>(z);
        dst[i] = static_cast<T>(params.scale[c] * z + params.shift[c]);
      }
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const BasicTensor<T>& upstream,
                                      const BatchNormParams<T>& params,
                                      const BatchNormCache<T>& cache) {
  const Shape& s = upstream.shape();
  if (!(cache.normalized.shape() == s)) {
    throw ShapeError("batch_norm backward: gradient/cache mismatch");
  }
  BatchNormGrads<T> g{BasicTensor<T>(s), std::vector<T>(s.c),
                      std::vector<T>(s.c)};
  const Accum<T> count = static_cast<Accum<T>>(s.n) * s.plane();
  for (int c = 0; c < s.c; ++c) {
    Accum<T> sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < s.n; ++n) {
      auto up = upstream.channel(n, c);
      auto xh = cache.normalized.channel(n, c);
      for (std::size_t i = 0; i < up.size(); ++i) {
        sum_dy += up[i];
        sum_dy_xhat += static_cast<Accum<T>>(up[i]) * xh[i];
      }
    }
    g.scale[c] = static_cast<T>(sum_dy_xhat);
    g.shift[c] = static_cast<T>(sum_dy);
    const Accum<T> gamma = params.scale[c];
    const Accum<T> istd = cache.inv_std[c];
    for (int n = 0; n < s.n; ++n) {
      auto up = upstream.channel(n, c);
      auto xh = cache.normalized.channel(n, c);
      auto dx = g.input.channel(n, c);
      for (std::size_t i = 0; i < up.size(); ++i) {
        if (cache.mode == Mode::train) {
          dx[i] = static_cast<T>(gamma * istd / count *
                                 (count * up[i] - sum_dy - xh[i] * sum_dy_xhat));
        } else {
          dx[i] = static_cast<T>(gamma * istd * up[i]);
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Pooling to a vector and fully connected layers

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
  const Shape& s = input.shape();
  BasicTensor<T> out(Shape{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      Accum<T> sum = 0.0;
      for (T v : input.channel(n, c)) sum += v;
      out.at(n, c, 0, 0) = static_cast<T>(sum / static_cast<Accum<T>>(s.plane()));
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& upstream,
                                        const Shape& input_shape) {
  const Shape& s = input_shape;
  if (upstream.n() != s.n || upstream.c() != s.c) {
    throw ShapeError("global_avg_pool backward: shape mismatch");
  }
  BasicTensor<T> g(s);
  const T inv = T(1) / static_cast<T>(s.plane());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T v = upstream.at(n, c, 0, 0) * inv;
      for (auto& d : g.channel(n, c)) d = v;
    }
  }
  return g;
}

template <typename T>
struct FcParams {
  BasicTensor<T> weight;  // (C_out, C_in, 1, 1)
  std::vector<T> bias;    // empty, or C_out entries

  int out_features() const { return weight.n(); }
  int in_features() const { return weight.c(); }
};

template <typename T>
struct FcGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  std::vector<T> bias;
};

/// Each sample's C*H*W values are the input vector; output is (N, C_out, 1, 1).
template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& input,
                               const FcParams<T>& p) {
  const Shape& s = input.shape();
  const int k = s.c * s.h * s.w;
  if (k != p.in_features() || p.weight.h() != 1 || p.weight.w() != 1) {
    throw ShapeError("fully_connected: input " + s.str() + " vs " +
                     std::to_string(p.in_features()) + " in-features");
  }
  if (!p.bias.empty() && static_cast<int>(p.bias.size()) != p.out_features()) {
    throw ShapeError("fully_connected: bias length mismatch");
  }
  const int m = p.out_features();
  BasicTensor<T> out(Shape{s.n, m, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    const T* x = input.values().data() + static_cast<std::size_t>(n) * k;
    for (int o = 0; o < m; ++o) {
      const T* w = p.weight.values().data() + static_cast<std::size_t>(o) * k;
      Accum<T> acc = p.bias.empty() ? 0.0 : static_cast<Accum<T>>(p.bias[o]);
      for (int i = 0; i < k; ++i) acc += static_cast<Accum<T>>(w[i]) * x[i];
      out.at(n, o, 0, 0) = static_cast<T>(acc);
    }
  }
  return out;
}

template <typename T>
FcGrads<T> fully_connected_backward(const BasicTensor<T>& input,
                                    const FcParams<T>& p,
                                    const BasicTensor<T>& upstream) {
  const Shape& s = input.shape();
  const int k = s.c * s.h * s.w;
  const int m = p.out_features();
  if (k != p.in_features() || upstream.n() != s.n || upstream.size() !=
      static_cast<std::size_t>(s.n) * m) {
    throw ShapeError("fully_connected backward: shape mismatch");
  }
  FcGrads<T> g{BasicTensor<T>(s), BasicTensor<T>(p.weight.shape()), {}};
  if (!p.bias.empty()) g.bias.assign(m, T(0));
  std::vector<Accum<T>> wacc(static_cast<std::size_t>(m) * k, 0.0);
  for (int n = 0; n < s.n; ++n) {
    const T* x = input.values().data() + static_cast<std::size_t>(n) * k;
    T* dx = g.input.values().data() + static_cast<std::size_t>(n) * k;
    for (int o = 0; o < m; ++o) {
      const T up = upstream[static_cast<std::size_t>(n) * m + o];
      if (!g.bias.empty()) g.bias[o] += up;
      const T* w = p.weight.values().data() + static_cast<std::size_t>(o) * k;
      Accum<T>* wa = wacc.data() + static_cast<std::size_t>(o) * k;
      for (int i = 0; i < k; ++i) {
        dx[i] += up * w[i];
        wa[i] += static_cast<Accum<T>>(up) * x[i];
      }
    }
  }
  for (std::size_t i = 0; i < wacc.size(); ++i) {
    g.weight[i] = static_cast<T>(wacc[i]);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Initialization

/// Uniform in [-sqrt(6 / fan_in), sqrt(6 / fan_in)].
template <typename T>
void init_fan_in_uniform(BasicTensor<T>& weight, int fan_in,
                         std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / std::max(fan_in, 1));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : weight.values()) v = static_cast<T>(dist(rng));
}

}  // namespace cednn
