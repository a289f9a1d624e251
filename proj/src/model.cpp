// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cednn/model.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace cednn {

std::string to_string(Connection c) {
  return c == Connection::res ? "res" : "dense";
}

std::string to_string(SeMode m) {
  switch (m) {
    case SeMode::none: return "none";
    case SeMode::after_block: return "after_block";
    case SeMode::before_merge: return "before_merge";
  }
  return "none";
}

std::string to_string(AttentionMode m) {
  return m == AttentionMode::channel_groups ? "channel_groups" : "mean_map";
}

Connection parse_connection(const std::string& s) {
  if (s == "res") return Connection::res;
  if (s == "dense") return Connection::dense;
  throw std::invalid_argument("unknown connection mode '" + s + "'");
}

SeMode parse_se_mode(const std::string& s) {
  if (s == "none") return SeMode::none;
  if (s == "after_block") return SeMode::after_block;
  if (s == "before_merge") return SeMode::before_merge;
  throw std::invalid_argument("unknown SE mode '" + s + "'");
}

AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "channel_groups") return AttentionMode::channel_groups;
  if (s == "mean_map") return AttentionMode::mean_map;
  throw std::invalid_argument("unknown attention mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// ModelConfig

ModelConfig ModelConfig::standard(Connection connection, int L, int d,
                                  int attention_depth, SeMode se_mode) {
  ModelConfig cfg;
  cfg.d = d;
  cfg.attention_depth = attention_depth;
  for (int i = 1; i <= 6; ++i) {
    BlockSpec b;
    b.index = i;
    b.L = L;
    b.M = (kEntryChannels << (i - 1)) / std::max(L, 1);
    b.connection = connection;
    b.se_mode = se_mode;
    b.attention = i <= attention_depth;
    cfg.blocks.push_back(b);
  }
  return cfg;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (blocks.empty() || blocks.size() > 6) fail("model needs 1 to 6 blocks");
  if (d < 1) fail("AU count d must be at least 1");
  if (attention_depth < 0 || attention_depth > static_cast<int>(blocks.size())) {
    fail("attention_depth out of range");
  }
  if (se_reduction < 1) fail("se_reduction must be positive");
  if (reduce_channels < 1 || top_channels < 1) fail("top widths must be positive");
  const int nb = static_cast<int>(blocks.size());
  if (input_size <= 0 || input_size % (1 << (nb - 1)) != 0) {
    fail("input_size " + std::to_string(input_size) + " cannot be halved " +
         std::to_string(nb - 1) + " times");
  }
  for (int i = 0; i < nb; ++i) {
    const BlockSpec& b = blocks[i];
    const std::string where = "block " + std::to_string(i + 1) + ": ";
    if (b.index != i + 1) fail(where + "index must be " + std::to_string(i + 1));
    if (std::find(std::begin(kAllowedGroups), std::end(kAllowedGroups), b.L) ==
        std::end(kAllowedGroups)) {
      fail(where + "L=" + std::to_string(b.L) + " is not one of 1,2,3,6,9,18");
    }
    if (b.M < 1 || b.L * b.M != (kEntryChannels << i)) {
      fail(where + "L*M must equal " + std::to_string(kEntryChannels << i));
    }
    if (b.attention != (i < attention_depth)) {
      fail(where + "attention flag disagrees with attention_depth");
    }
    if (b.attention && b.in_channels() % 6 != 0) {
      fail(where + "attention needs a channel count divisible by 6");
    }
  }
}

int ModelConfig::block_spatial(int block) const { return input_size >> block; }

int ModelConfig::final_spatial() const {
  return block_spatial(static_cast<int>(blocks.size()) - 1);
}

std::string ModelConfig::name() const {
  const BlockSpec& b = blocks.front();
  return to_string(b.connection) + "-L" + std::to_string(b.L) + "M" +
         std::to_string(b.M);
}

// ---------------------------------------------------------------------------
// Parameter construction

namespace {

template <typename T>
ConvLayer<T> make_conv(int c_out, int c_in, int k, int groups, int padding,
                       bool bias, std::mt19937_64& rng) {
  ConvLayer<T> layer;
  layer.params.weight = BasicTensor<T>(Shape{c_out, c_in / groups, k, k});
  layer.params.groups = groups;
  layer.params.padding = padding;
  init_fan_in_uniform(layer.params.weight, (c_in / groups) * k * k, rng);
  layer.params.weight.ensure_grad();
  if (bias) {
    layer.params.bias.assign(c_out, T(0));
    layer.bias_grad.assign(c_out, T(0));
  }
  return layer;
}

template <typename T>
DenseLayer<T> make_dense(int out, int in, std::mt19937_64& rng) {
  DenseLayer<T> layer;
  layer.params.weight = BasicTensor<T>(Shape{out, in, 1, 1});
  init_fan_in_uniform(layer.params.weight, in, rng);
  layer.params.weight.ensure_grad();
  layer.params.bias.assign(out, T(0));
  layer.bias_grad.assign(out, T(0));
  return layer;
}

template <typename T>
NormLayer<T> make_norm(int channels) {
  NormLayer<T> n;
  n.params = BatchNormParams<T>::identity(channels);
  n.scale_grad.assign(channels, T(0));
  n.shift_grad.assign(channels, T(0));
  return n;
}

template <typename T>
SeParams<T> make_se(int channels, int reduction, std::mt19937_64& rng) {
  const int hidden = (channels + reduction - 1) / reduction;
  SeParams<T> se;
  se.squeeze = make_dense<T>(hidden, channels, rng);
  se.expand = make_dense<T>(channels, hidden, rng);
  return se;
}

std::vector<int> dims(const Shape& s) { return {s.n, s.c, s.h, s.w}; }

template <typename T>
void add_conv(std::vector<ParamRef<T>>& inv, const std::string& name,
              ConvLayer<T>& c) {
  auto& w = c.params.weight;
  inv.push_back({name + ".weight", dims(w.shape()), w.values(), w.grad(),
                 ParamKind::weight});
  if (!c.params.bias.empty()) {
    inv.push_back({name + ".bias", {static_cast<int>(c.params.bias.size())},
                   c.params.bias, c.bias_grad, ParamKind::bias});
  }
}

template <typename T>
void add_dense(std::vector<ParamRef<T>>& inv, const std::string& name,
               DenseLayer<T>& d) {
  auto& w = d.params.weight;
  inv.push_back({name + ".weight", dims(w.shape()), w.values(), w.grad(),
                 ParamKind::weight});
  inv.push_back({name + ".bias", {static_cast<int>(d.params.bias.size())},
                 d.params.bias, d.bias_grad, ParamKind::bias});
}

template <typename T>
void add_norm(std::vector<ParamRef<T>>& inv, const std::string& name,
              NormLayer<T>& n) {
  const int c = n.params.channels();
  inv.push_back({name + ".scale", {c}, n.params.scale, n.scale_grad, ParamKind::norm});
  inv.push_back({name + ".shift", {c}, n.params.shift, n.shift_grad, ParamKind::norm});
  inv.push_back({name + ".running_mean", {c}, n.params.running_mean, {},
                 ParamKind::buffer});
  inv.push_back({name + ".running_var", {c}, n.params.running_var, {},
                 ParamKind::buffer});
}

}  // namespace

template <typename T>
ModelParams<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams<T> mp;
  mp.config = config;
  for (const BlockSpec& spec : config.blocks) {
    BlockParams<T> b;
    b.spec = spec;
    b.plan = make_shuffle_plan(spec.L, spec.M);
    const int c = spec.in_channels();
    b.group1 = make_conv<T>(c, c, 3, spec.L, 1, false, rng);
    b.group2 = make_conv<T>(c, c, 1, spec.M, 0, false, rng);
    b.fusion = make_conv<T>(spec.out_channels(), spec.merged_channels(), 1, 1, 0,
                            false, rng);
    b.norm1 = make_norm<T>(c);
    b.norm2 = make_norm<T>(c);
    b.norm3 = make_norm<T>(spec.out_channels());
    if (spec.se_mode == SeMode::after_block) {
      b.se = make_se<T>(spec.out_channels(), config.se_reduction, rng);
    } else if (spec.se_mode == SeMode::before_merge) {
      b.se = make_se<T>(c, config.se_reduction, rng);
    }
    mp.blocks.push_back(std::move(b));
  }
  mp.reduce = make_conv<T>(config.reduce_channels, config.final_channels(), 1, 1,
                           0, true, rng);
  mp.top = make_conv<T>(config.top_channels, config.reduce_channels,
                        config.final_spatial(), 1, 0, true, rng);
  mp.top_pointwise =
      make_conv<T>(config.top_channels, config.top_channels, 1, 1, 0, true, rng);
  mp.classifier = make_dense<T>(config.d, config.top_channels, rng);
  return mp;
}

template <typename T>
std::vector<ParamRef<T>> ModelParams<T>::inventory() {
  std::vector<ParamRef<T>> inv;
  for (auto& b : blocks) {
    const std::string p = "block" + std::to_string(b.spec.index);
    add_conv(inv, p + ".group1", b.group1);
    add_norm(inv, p + ".norm1", b.norm1);
    add_conv(inv, p + ".group2", b.group2);
    add_norm(inv, p + ".norm2", b.norm2);
    add_conv(inv, p + ".fusion", b.fusion);
    add_norm(inv, p + ".norm3", b.norm3);
    if (b.se) {
      add_dense(inv, p + ".se.squeeze", b.se->squeeze);
      add_dense(inv, p + ".se.expand", b.se->expand);
    }
  }
  add_conv(inv, "reduce", reduce);
  add_conv(inv, "top", top);
  add_conv(inv, "top_pointwise", top_pointwise);
  add_dense(inv, "classifier", classifier);
  return inv;
}

template <typename T>
std::size_t ModelParams<T>::trainable_count() {
  std::size_t n = 0;
  for (const auto& p : inventory()) {
    if (p.kind != ParamKind::buffer) n += p.count();
  }
  return n;
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (auto& p : inventory()) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

template <typename T>
void accumulate(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
BasicTensor<T> conv_unit_forward(const BasicTensor<T>& x, ConvLayer<T>& conv,
                                 NormLayer<T>* norm, bool act, Mode mode,
                                 ConvUnitCache<T>* cache) {
  BasicTensor<T> y = conv2d_grouped(x, conv.params);
  if (norm) y = batch_norm(y, norm->params, mode, cache ? &cache->norm : nullptr);
  if (act) y = relu(y);
  if (cache) {
    cache->input = x;
    cache->output = y;
  }
  return y;
}

template <typename T>
BasicTensor<T> conv_unit_backward(const BasicTensor<T>& upstream,
                                  ConvLayer<T>& conv, NormLayer<T>* norm,
                                  bool act, const ConvUnitCache<T>& cache) {
  BasicTensor<T> g = act ? relu_backward(upstream, cache.output) : upstream;
  if (norm) {
    BatchNormGrads<T> ng = batch_norm_backward(g, norm->params, cache.norm);
    accumulate<T>(norm->scale_grad, ng.scale);
    accumulate<T>(norm->shift_grad, ng.shift);
    g = std::move(ng.input);
  }
  ConvGrads<T> cg = conv2d_grouped_backward(cache.input, conv.params, g);
  conv.params.weight.ensure_grad();
  accumulate<T>(conv.params.weight.grad(), cg.weight.values());
  if (!cg.bias.empty()) accumulate<T>(conv.bias_grad, cg.bias);
  return std::move(cg.input);
}

template <typename T>
void dense_accumulate(DenseLayer<T>& layer, const FcGrads<T>& g) {
  layer.params.weight.ensure_grad();
  accumulate<T>(layer.params.weight.grad(), g.weight.values());
  accumulate<T>(layer.bias_grad, g.bias);
}

}  // namespace

template <typename T>
BasicTensor<T> se_forward(const BasicTensor<T>& x, const SeParams<T>& se,
                          SeCache<T>* cache) {
  BasicTensor<T> squeezed = global_avg_pool(x);
  BasicTensor<T> hidden = relu(fully_connected(squeezed, se.squeeze.params));
  BasicTensor<T> weights = sigmoid(fully_connected(hidden, se.expand.params));
  BasicTensor<T> out = x;
  const Shape& s = x.shape();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T w = weights.at(n, c, 0, 0);
      for (auto& v : out.channel(n, c)) v *= w;
    }
  }
  if (cache) {
    cache->input = x;
    cache->squeezed = std::move(squeezed);
    cache->hidden = std::move(hidden);
    cache->weights = std::move(weights);
  }
  return out;
}

template <typename T>
BasicTensor<T> se_backward(const BasicTensor<T>& upstream, SeParams<T>& se,
                           const SeCache<T>& cache) {
  const Shape& s = cache.input.shape();
  if (!(upstream.shape() == s)) throw ShapeError("se backward: shape mismatch");
  BasicTensor<T> dx(s);
  BasicTensor<T> dweights(Shape{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T w = cache.weights.at(n, c, 0, 0);
      auto up = upstream.channel(n, c);
      auto xv = cache.input.channel(n, c);
      auto d = dx.channel(n, c);
      Accum<T> acc = 0.0;
      for (std::size_t i = 0; i < up.size(); ++i) {
        d[i] = up[i] * w;
        acc += static_cast<Accum<T>>(up[i]) * xv[i];
      }
      dweights.at(n, c, 0, 0) = static_cast<T>(acc);
    }
  }
  BasicTensor<T> dlogit = sigmoid_backward(dweights, cache.weights);
  FcGrads<T> ge = fully_connected_backward(cache.hidden, se.expand.params, dlogit);
  dense_accumulate(se.expand, ge);
  BasicTensor<T> dhidden = relu_backward(ge.input, cache.hidden);
  FcGrads<T> gs =
      fully_connected_backward(cache.squeezed, se.squeeze.params, dhidden);
  dense_accumulate(se.squeeze, gs);
  BasicTensor<T> dsq = global_avg_pool_backward(gs.input, s);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dsq[i];
  return dx;
}

template <typename T>
BasicTensor<T> block_forward(const BasicTensor<T>& x, BlockParams<T>& block,
                             const ModelConfig& config, const BasicTensor<T>* maps,
                             Mode mode, BlockCache<T>* cache) {
  const BlockSpec& spec = block.spec;
  if (x.c() != spec.in_channels()) {
    throw ShapeError("block " + std::to_string(spec.index) + ": input has " +
                     std::to_string(x.c()) + " channels, expected " +
                     std::to_string(spec.in_channels()));
  }
  const bool lin = config.linear;
  BlockCache<T> local;
  BlockCache<T>& c = cache ? *cache : local;
  c.input_shape = x.shape();

  BasicTensor<T> m = x;
  if (spec.attention) {
    if (!maps) {
      throw std::invalid_argument("block " + std::to_string(spec.index) +
                                  " takes attention but no stack was given");
    }
    c.attention = attention_factor(x.shape(), *maps, config.attention_mode);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] *= c.attention[i];
  } else {
    c.attention = BasicTensor<T>();
  }

  BasicTensor<T> z1 = conv_unit_forward(m, block.group1, lin ? nullptr : &block.norm1,
                                        !lin, mode, cache ? &c.unit1 : nullptr);
  BasicTensor<T> z2 = channel_shuffle(z1, block.plan);
  BasicTensor<T> y2 = conv_unit_forward(z2, block.group2, lin ? nullptr : &block.norm2,
                                        !lin, mode, cache ? &c.unit2 : nullptr);
  BasicTensor<T> ybar = channel_unshuffle(y2, block.plan);
  if (spec.se_mode == SeMode::before_merge) {
    ybar = se_forward(ybar, *block.se, cache ? &c.se : nullptr);
  }
  c.merged_branch_shape = ybar.shape();
  BasicTensor<T> y3 = spec.connection == Connection::res ? add(ybar, m)
                                                         : concat_channels(ybar, m);
  BasicTensor<T> out = conv_unit_forward(y3, block.fusion,
                                         lin ? nullptr : &block.norm3, !lin, mode,
                                         cache ? &c.unit3 : nullptr);
  if (spec.se_mode == SeMode::after_block) {
    out = se_forward(out, *block.se, cache ? &c.se : nullptr);
  }
  if (cache) c.modulated = std::move(m);
  return out;
}

template <typename T>
BasicTensor<T> block_backward(const BasicTensor<T>& upstream,
                              BlockParams<T>& block, const ModelConfig& config,
                              const BlockCache<T>& cache) {
  const BlockSpec& spec = block.spec;
  const bool lin = config.linear;
  BasicTensor<T> g = upstream;
  if (spec.se_mode == SeMode::after_block) g = se_backward(g, *block.se, cache.se);
  BasicTensor<T> g3 = conv_unit_backward(g, block.fusion,
                                         lin ? nullptr : &block.norm3, !lin,
                                         cache.unit3);
  BasicTensor<T> gbar, gm;
  if (spec.connection == Connection::res) {
    gbar = g3;
    gm = std::move(g3);
  } else {
    BinaryGrads<T> split = concat_channels_backward(g3, cache.merged_branch_shape.c);
    gbar = std::move(split.a);
    gm = std::move(split.b);
  }
  if (spec.se_mode == SeMode::before_merge) {
    gbar = se_backward(gbar, *block.se, cache.se);
  }
  BasicTensor<T> gy2 = channel_shuffle(gbar, block.plan);
  BasicTensor<T> gz2 = conv_unit_backward(gy2, block.group2,
                                          lin ? nullptr : &block.norm2, !lin,
                                          cache.unit2);
  BasicTensor<T> gz1 = channel_unshuffle(gz2, block.plan);
  BasicTensor<T> gm1 = conv_unit_backward(gz1, block.group1,
                                          lin ? nullptr : &block.norm1, !lin,
                                          cache.unit1);
  for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += gm1[i];
  if (spec.attention) {
    for (std::size_t i = 0; i < gm.size(); ++i) gm[i] *= cache.attention[i];
  }
  return gm;
}

template <typename T>
ForwardOutput<T> model_forward(const BasicTensor<T>& input,
                               const std::vector<const AttentionStack*>& attention,
                               ModelParams<T>& params, Mode mode,
                               ForwardState<T>* state) {
  const ModelConfig& cfg = params.config;
  const Shape& s = input.shape();
  if (s.c != kEntryChannels || s.h != cfg.input_size || s.w != cfg.input_size) {
    throw ShapeError("model input must be Nx18x" + std::to_string(cfg.input_size) +
                     "x" + std::to_string(cfg.input_size) + ", got " + s.str());
  }
  if (cfg.attention_depth > 0 && static_cast<int>(attention.size()) != s.n) {
    throw std::invalid_argument("attention_depth " +
                                std::to_string(cfg.attention_depth) +
                                " needs one attention stack per sample");
  }
  const bool lin = cfg.linear;
  if (state) {
    *state = ForwardState<T>();
    state->mode = mode;
    state->blocks.resize(params.blocks.size());
  }
  BasicTensor<T> h = input;
  const int nb = static_cast<int>(params.blocks.size());
  for (int i = 0; i < nb; ++i) {
    BlockParams<T>& block = params.blocks[i];
    BasicTensor<T> maps;
    if (block.spec.attention) maps = attention_maps<T>(attention, h.h());
    h = block_forward(h, block, cfg, block.spec.attention ? &maps : nullptr, mode,
                      state ? &state->blocks[i] : nullptr);
    if (state) state->trace.emplace_back("block" + std::to_string(i + 1), h.shape());
    if (i + 1 < nb) {
      PoolResult<T> pr = max_pool_2x2(h);
      if (state) {
        state->pool_input_shapes.push_back(h.shape());
        state->pool_argmax.push_back(std::move(pr.argmax));
        state->trace.emplace_back("pool" + std::to_string(i + 1),
                                  pr.output.shape());
      }
      h = std::move(pr.output);
    }
  }
  h = conv_unit_forward<T>(h, params.reduce, nullptr, !lin, mode,
                           state ? &state->reduce : nullptr);
  if (state) state->trace.emplace_back("reduce", h.shape());
  h = conv_unit_forward<T>(h, params.top, nullptr, !lin, mode,
                           state ? &state->top : nullptr);
  if (state) state->trace.emplace_back("top", h.shape());
  h = conv_unit_forward<T>(h, params.top_pointwise, nullptr, !lin, mode,
                           state ? &state->top_pointwise : nullptr);
  if (state) state->trace.emplace_back("top_pointwise", h.shape());
  ForwardOutput<T> out;
  out.logits = fully_connected(h, params.classifier.params);
  out.probabilities = sigmoid(out.logits);
  if (state) {
    state->classifier_input = std::move(h);
    state->trace.emplace_back("classifier", out.logits.shape());
  }
  return out;
}

template <typename T>
void model_backward(const BasicTensor<T>& logits_grad, ModelParams<T>& params,
                    const ForwardState<T>& state) {
  const bool lin = params.config.linear;
  FcGrads<T> fg = fully_connected_backward(state.classifier_input,
                                           params.classifier.params, logits_grad);
  dense_accumulate(params.classifier, fg);
  BasicTensor<T> g = fg.input.reshaped(state.top_pointwise.output.shape());
  g = conv_unit_backward<T>(g, params.top_pointwise, nullptr, !lin,
                            state.top_pointwise);
  g = conv_unit_backward<T>(g, params.top, nullptr, !lin, state.top);
  g = conv_unit_backward<T>(g, params.reduce, nullptr, !lin, state.reduce);
  for (int i = static_cast<int>(params.blocks.size()) - 1; i >= 0; --i) {
    if (i + 1 < static_cast<int>(params.blocks.size())) {
      g = max_pool_2x2_backward(g, state.pool_argmax[i], state.pool_input_shapes[i]);
    }
    g = block_backward(g, params.blocks[i], params.config, state.blocks[i]);
  }
}

#define CEDNN_INSTANTIATE(T)                                                    \
  template ModelParams<T> build_model<T>(const ModelConfig&, std::uint64_t);    \
  template struct ModelParams<T>;                                               \
  template BasicTensor<T> se_forward<T>(const BasicTensor<T>&, const SeParams<T>&, \
                                        SeCache<T>*);                           \
  template BasicTensor<T> se_backward<T>(const BasicTensor<T>&, SeParams<T>&,   \
                                         const SeCache<T>&);                    \
  template BasicTensor<T> block_forward<T>(const BasicTensor<T>&, BlockParams<T>&, \
                                           const ModelConfig&,                  \
                                           const BasicTensor<T>*, Mode,         \
                                           BlockCache<T>*);                     \
  template BasicTensor<T> block_backward<T>(const BasicTensor<T>&,              \
                                            BlockParams<T>&, const ModelConfig&, \
                                            const BlockCache<T>&);              \
  template ForwardOutput<T> model_forward<T>(                                   \
      const BasicTensor<T>&, const std::vector<const AttentionStack*>&,         \
      ModelParams<T>&, Mode, ForwardState<T>*);                                 \
  template void model_backward<T>(const BasicTensor<T>&, ModelParams<T>&,       \
                                  const ForwardState<T>&);

CEDNN_INSTANTIATE(float)
CEDNN_INSTANTIATE(double)
CEDNN_INSTANTIATE(long double)

#undef CEDNN_INSTANTIATE

}  // namespace cednn
