// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cednn/diagnostics.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "cednn/grad_check.hpp"
#include "cednn/train.hpp"

namespace cednn {

bool DiagnosticReport::passed() const {
  for (const auto& l : lines) {
    if (!l.pass) return false;
  }
  return !lines.empty();
}

std::string DiagnosticReport::to_text() const {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3);
  for (const auto& l : lines) {
    os << (l.pass ? "PASS " : "FAIL ") << l.name << " measured=" << l.measured
       << " tolerance=" << l.tolerance;
    if (!l.detail.empty()) os << " worst=" << l.detail;
    os << '\n';
  }
  return os.str();
}

void DiagnosticReport::append(const DiagnosticReport& other) {
  lines.insert(lines.end(), other.lines.begin(), other.lines.end());
}

ModelConfig reduced_model_config(Connection connection, SeMode se) {
  ModelConfig c = ModelConfig::standard(connection, 6, 3, 2, se);
  c.blocks.resize(2);
  c.input_size = 28;
  c.se_reduction = 4;
  c.reduce_channels = 8;
  c.top_channels = 16;
  c.validate();
  return c;
}

BasicTensor<double> dense_masked_conv(const BasicTensor<double>& input,
                                      const ConvParams<double>& p) {
  const Shape& is = input.shape();
  const int g = p.groups;
  const int cin = is.c, cout = p.out_channels();
  const int cin_g = cin / g, cout_g = cout / g;
  const int k_h = p.kernel_h(), k_w = p.kernel_w();
  BasicTensor<double> dense(Shape{cout, cin, k_h, k_w});
  for (int o = 0; o < cout; ++o) {
    const int group = o / cout_g;
    for (int i = 0; i < cin_g; ++i) {
      for (int y = 0; y < k_h; ++y) {
        for (int x = 0; x < k_w; ++x) {
          dense.at(o, group * cin_g + i, y, x) = p.weight.at(o, i, y, x);
        }
      }
    }
  }
  const int oh = (is.h + 2 * p.padding - k_h) / p.stride + 1;
  const int ow = (is.w + 2 * p.padding - k_w) / p.stride + 1;
  BasicTensor<double> out(Shape{is.n, cout, oh, ow});
  for (int n = 0; n < is.n; ++n) {
    for (int o = 0; o < cout; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          double acc = p.bias.empty() ? 0.0 : p.bias[o];
          for (int i = 0; i < cin; ++i) {
            for (int ky = 0; ky < k_h; ++ky) {
              for (int kx = 0; kx < k_w; ++kx) {
                const int sy = y * p.stride - p.padding + ky;
                const int sx = x * p.stride - p.padding + kx;
                if (sy < 0 || sy >= is.h || sx < 0 || sx >= is.w) continue;
                acc += dense.at(o, i, ky, kx) * input.at(n, i, sy, sx);
              }
            }
          }
          out.at(n, o, y, x) = acc;
        }
      }
    }
  }
  return out;
}

DiagnosticReport grouped_conv_oracle(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  double worst = 0.0;
  for (int t = 0; t < cases; ++t) {
    const int groups = std::array{1, 2, 3, 4, 6}[pick(0, 4)];
    const int k = std::array{1, 3, 5}[pick(0, 2)];
    ConvParams<double> p;
    p.groups = groups;
    p.stride = pick(1, 2);
    p.padding = pick(0, k / 2);
    const int cin = groups * pick(1, 3), cout = groups * pick(1, 3);
    const int h = pick(k, 9), w = pick(k, 9);
    p.weight = random_tensor<double>(Shape{cout, cin / groups, k, k}, rng, -1.0, 1.0);
    if (pick(0, 1)) {
      for (int o = 0; o < cout; ++o) {
        p.bias.push_back(std::uniform_real_distribution<double>(-1, 1)(rng));
      }
    }
    const auto x = random_tensor<double>(Shape{pick(1, 3), cin, h, w}, rng, -1.0, 1.0);
    worst = std::max(worst, max_abs_diff(conv2d_grouped(x, p), dense_masked_conv(x, p)));
  }
  DiagnosticReport r;
  r.lines.push_back({"grouped_conv_vs_dense_masked (" + std::to_string(cases) + " cases)",
                     worst, 1e-6, worst <= 1e-6, ""});
  return r;
}

namespace {

template <typename T>
struct Probe {
  std::string name;
  std::span<T> values;
  std::vector<T> analytic;
};

template <typename T>
Probe<T> probe(std::string name, std::span<T> values, std::span<const T> grad) {
  return {std::move(name), values, std::vector<T>(grad.begin(), grad.end())};
}

// Receives each case: a loss over the current probe values plus the analytic
// gradient of every probe.
template <typename T>
class Runner {
 public:
  virtual ~Runner() = default;
  virtual void run(const std::string& name, const std::function<Accum<T>()>& loss,
                   std::vector<Probe<T>>& probes) = 0;
};

// Scalar loss sum(r * f()).
template <typename T>
Accum<T> weighted_sum(const BasicTensor<T>& y, const BasicTensor<T>& r) {
  Accum<T> s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += static_cast<Accum<T>>(r[i]) * static_cast<Accum<T>>(y[i]);
  }
  return s;
}

// Central differences in extended precision. Test points are
// float-representable, so the same reference serves both precisions.
template <typename W>
class ReferenceRunner : public Runner<W> {
 public:
  explicit ReferenceRunner(GradCheckOptions opts) : opts_(opts) {}
  void run(const std::string& name, const std::function<Accum<W>()>& loss,
           std::vector<Probe<W>>& probes) override {
    auto& out = reference_[name];
    for (auto& p : probes) {
      std::vector<double> numeric;
      for (std::size_t i : sample_indices(p.values.size(), opts_)) {
        numeric.push_back(numeric_derivative(loss, p.values[i], opts_));
      }
      out.push_back(std::move(numeric));
    }
  }
  const std::vector<std::vector<double>>& reference(const std::string& name) const {
    return reference_.at(name);
  }

 private:
  GradCheckOptions opts_;
  std::map<std::string, std::vector<std::vector<double>>> reference_;
};

template <typename T, typename W>
class CompareRunner : public Runner<T> {
 public:
  CompareRunner(DiagnosticReport& rep, const ReferenceRunner<W>& ref,
                GradCheckOptions opts, double tolerance, std::string suffix)
      : rep_(rep), ref_(ref), opts_(opts), tol_(tolerance), suffix_(std::move(suffix)) {}
  void run(const std::string& name, const std::function<Accum<T>()>&,
           std::vector<Probe<T>>& probes) override {
    const auto& ref = ref_.reference(name);
    GradCheckResult total;
    std::string detail;
    for (std::size_t k = 0; k < probes.size(); ++k) {
      const auto idx = sample_indices(probes[k].values.size(), opts_);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const double a = probes[k].analytic[idx[j]];
        const double n = ref[k][j];
        const double err = relative_error(a, n, opts_.floor);
        if (total.checked == 0 || err > total.max_relative_error) {
          total.max_relative_error = err;
          total.worst_index = idx[j];
          total.analytic_at_worst = a;
          total.numeric_at_worst = n;
          std::ostringstream os;
          os << std::scientific << std::setprecision(4) << probes[k].name << "["
             << idx[j] << "] analytic=" << a << " numeric=" << n;
          detail = os.str();
        }
        ++total.checked;
      }
    }
    rep_.lines.push_back({name + suffix_, total.max_relative_error, tol_,
                          total.checked > 0 && total.within(tol_), detail});
  }

 private:
  DiagnosticReport& rep_;
  const ReferenceRunner<W>& ref_;
  GradCheckOptions opts_;
  double tol_;
  std::string suffix_;
};

// Test points are float-representable so that one extended-precision
// reference serves both precisions.
template <typename T>
BasicTensor<T> representable(BasicTensor<T> t) {
  for (auto& v : t.values()) v = static_cast<T>(static_cast<float>(v));
  return t;
}

template <typename T>
void make_representable(ModelParams<T>& mp) {
  for (auto& p : mp.inventory()) {
    for (auto& v : p.value) v = static_cast<T>(static_cast<float>(v));
  }
}

// Values kept away from the relu and max-pool kinks by at least `gap`.
template <typename T>
BasicTensor<T> away_from_zero(const Shape& s, std::mt19937_64& rng, double gap) {
  BasicTensor<T> t = representable(random_tensor<T>(s, rng, T(-1), T(1)));
  for (auto& v : t.values()) {
    if (std::abs(v) < gap) v = static_cast<T>(v < 0 ? v - gap : v + gap);
  }
  return representable(std::move(t));
}

template <typename T>
void conv_case(Runner<T>& run, const std::string& name, std::mt19937_64& rng, Shape in, int cout, int k, int groups,
               int stride, int padding, bool bias) {
  ConvParams<T> p;
  p.groups = groups;
  p.stride = stride;
  p.padding = padding;
  p.weight = representable(random_tensor<T>(Shape{cout, in.c / groups, k, k}, rng, T(-1), T(1)));
  if (bias) p.bias.assign(cout, T(0.125));
  BasicTensor<T> x = representable(random_tensor<T>(in, rng, T(-1), T(1)));
  const auto r = representable(random_tensor<T>(conv2d_grouped(x, p).shape(), rng, T(-1), T(1)));
  const ConvGrads<T> g = conv2d_grouped_backward(x, p, r);
  std::vector<Probe<T>> probes{probe<T>("x", x.values(), g.input.values()),
                               probe<T>("w", p.weight.values(), g.weight.values())};
  if (bias) probes.push_back(probe<T>("b", p.bias, g.bias));
  run.run(name, [&] { return weighted_sum(conv2d_grouped(x, p), r); }, probes);
}

template <typename T>
void op_suite(std::uint64_t seed, Runner<T>& run) {
  std::mt19937_64 rng(seed);
  auto rnd = [&](Shape s) { return representable(random_tensor<T>(s, rng, T(-1), T(1))); };

  conv_case<T>(run, "conv3x3_groups3_pad1", rng, {2, 6, 5, 5}, 6, 3, 3, 1, 1, true);
  conv_case<T>(run, "conv3x3_groups2_stride2", rng, {2, 4, 7, 7}, 6, 3, 2, 2, 0, false);
  conv_case<T>(run, "conv1x1_dense", rng, {2, 5, 4, 4}, 3, 1, 1, 1, 0, true);
  conv_case<T>(run, "conv_valid_full_kernel", rng, {2, 3, 4, 4}, 4, 4, 1, 1, 0, true);

  {
    const ShufflePlan plan = make_shuffle_plan(2, 3);
    BasicTensor<T> x = rnd({2, 6, 3, 3});
    const auto r = rnd(x.shape());
    std::vector<Probe<T>> ps{probe<T>("x", x.values(), channel_unshuffle(r, plan).values())};
    run.run("channel_shuffle",
                  [&] { return weighted_sum(channel_shuffle(x, plan), r); }, ps);
    std::vector<Probe<T>> pu{probe<T>("x", x.values(), channel_shuffle(r, plan).values())};
    run.run("channel_unshuffle",
                  [&] { return weighted_sum(channel_unshuffle(x, plan), r); }, pu);
  }
  {
    BasicTensor<T> x = rnd({2, 3, 6, 6});
    const auto fwd = max_pool_2x2(x);
    const auto r = rnd(fwd.output.shape());
    std::vector<Probe<T>> ps{probe<T>(
        "x", x.values(), max_pool_2x2_backward(r, fwd.argmax, x.shape()).values())};
    run.run("max_pool_2x2",
                  [&] { return weighted_sum(max_pool_2x2(x).output, r); }, ps);
  }
  for (bool broadcast : {false, true}) {
    BasicTensor<T> a = rnd({2, 4, 3, 3});
    BasicTensor<T> b = rnd({2, broadcast ? 1 : 4, 3, 3});
    const auto r = rnd(a.shape());
    const auto ga = add_backward(r, b.shape());
    std::vector<Probe<T>> pa{probe<T>("a", a.values(), ga.a.values()),
                             probe<T>("b", b.values(), ga.b.values())};
    const std::string tag = broadcast ? "_broadcast" : "";
    run.run("add" + tag, [&] { return weighted_sum(add(a, b), r); }, pa);
    const auto gm = multiply_backward(r, a, b);
    std::vector<Probe<T>> pm{probe<T>("a", a.values(), gm.a.values()),
                             probe<T>("b", b.values(), gm.b.values())};
    run.run("multiply" + tag, [&] { return weighted_sum(multiply(a, b), r); }, pm);
  }
  {
    BasicTensor<T> a = rnd({2, 3, 3, 3}), b = rnd({2, 5, 3, 3});
    const auto r = rnd({2, 8, 3, 3});
    const auto g = concat_channels_backward(r, 3);
    std::vector<Probe<T>> ps{probe<T>("a", a.values(), g.a.values()),
                             probe<T>("b", b.values(), g.b.values())};
    run.run("concat_channels",
                  [&] { return weighted_sum(concat_channels(a, b), r); }, ps);
  }
  {
    BasicTensor<T> x = away_from_zero<T>({2, 3, 4, 4}, rng, 0.05);
    const auto r = rnd(x.shape());
    std::vector<Probe<T>> ps{
        probe<T>("x", x.values(), relu_backward(r, relu(x)).values())};
    run.run("relu", [&] { return weighted_sum(relu(x), r); }, ps);
  }
  {
    BasicTensor<T> x = representable(random_tensor<T>({2, 3, 4, 4}, rng, T(-4), T(4)));
    const auto r = rnd(x.shape());
    std::vector<Probe<T>> ps{
        probe<T>("x", x.values(), sigmoid_backward(r, sigmoid(x)).values())};
    run.run("sigmoid", [&] { return weighted_sum(sigmoid(x), r); }, ps);
  }
  {
    BasicTensor<T> x = rnd({3, 4, 3, 3});
    BatchNormParams<T> p = BatchNormParams<T>::identity(4);
    for (auto& v : p.scale) v = static_cast<T>(static_cast<float>(std::uniform_real_distribution<double>(0.5, 1.5)(rng)));
    for (auto& v : p.shift) v = static_cast<T>(static_cast<float>(std::uniform_real_distribution<double>(-0.5, 0.5)(rng)));
    const auto r = rnd(x.shape());
    BatchNormCache<T> cache;
    batch_norm(x, p, Mode::train, &cache);
    const auto g = batch_norm_backward(r, p, cache);
    std::vector<Probe<T>> ps{probe<T>("x", x.values(), g.input.values()),
                             probe<T>("scale", p.scale, g.scale),
                             probe<T>("shift", p.shift, g.shift)};
    run.run("batch_norm_train",
                  [&] { return weighted_sum(batch_norm(x, p, Mode::train), r); }, ps);
    BatchNormParams<T> q = p;
    for (auto& v : q.running_var) v = T(0.75);
    for (auto& v : q.running_mean) v = T(0.25);
    BatchNormCache<T> ec;
    batch_norm(x, q, Mode::eval, &ec);
    const auto ge = batch_norm_backward(r, q, ec);
    std::vector<Probe<T>> pe{probe<T>("x", x.values(), ge.input.values()),
                             probe<T>("scale", q.scale, ge.scale),
                             probe<T>("shift", q.shift, ge.shift)};
    run.run("batch_norm_eval",
                  [&] { return weighted_sum(batch_norm(x, q, Mode::eval), r); }, pe);
  }
  {
    BasicTensor<T> x = rnd({2, 3, 4, 4});
    const auto r = rnd({2, 3, 1, 1});
    std::vector<Probe<T>> ps{
        probe<T>("x", x.values(), global_avg_pool_backward(r, x.shape()).values())};
    run.run("global_avg_pool",
                  [&] { return weighted_sum(global_avg_pool(x), r); }, ps);
  }
  {
    BasicTensor<T> x = rnd({2, 3, 2, 2});
    FcParams<T> p{rnd({5, 12, 1, 1}), std::vector<T>(5, T(0.125))};
    const auto r = rnd({2, 5, 1, 1});
    const auto g = fully_connected_backward(x, p, r);
    std::vector<Probe<T>> ps{probe<T>("x", x.values(), g.input.values()),
                             probe<T>("w", p.weight.values(), g.weight.values()),
                             probe<T>("b", p.bias, g.bias)};
    run.run("fully_connected",
                  [&] { return weighted_sum(fully_connected(x, p), r); }, ps);
  }
  {
    ModelConfig cfg = reduced_model_config(Connection::res, SeMode::after_block);
    ModelParams<T> mp = build_model<T>(cfg, seed);
    make_representable(mp);
    SeParams<T>& se = *mp.blocks[0].se;
    BasicTensor<T> x = rnd({2, 36, 3, 3});
    const auto r = rnd(x.shape());
    mp.zero_grad();
    SeCache<T> cache;
    se_forward(x, se, &cache);
    const auto gx = se_backward(r, se, cache);
    std::vector<Probe<T>> ps{probe<T>("x", x.values(), gx.values())};
    for (auto& p : mp.inventory()) {
      if (p.name.find(".se.") != std::string::npos && p.name.rfind("block1", 0) == 0) {
        ps.push_back(probe<T>(p.name, p.value, std::span<const T>(p.grad)));
      }
    }
    run.run("squeeze_excitation",
                  [&] { return weighted_sum(se_forward(x, se), r); }, ps);
  }
  {
    BasicTensor<T> x = rnd({2, 18, 4, 4});
    BasicTensor<T> maps(Shape{2, kAttentionMaps, 4, 4});
    for (auto& v : maps.values()) v = static_cast<T>(rng() >> 63);
    const auto r = rnd(x.shape());
    for (AttentionMode mode : {AttentionMode::channel_groups, AttentionMode::mean_map}) {
      const auto f = attention_factor(x.shape(), maps, mode);
      BasicTensor<T> g = r;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= f[i];
      std::vector<Probe<T>> ps{probe<T>("x", x.values(), g.values())};
      run.run("attention_" + to_string(mode),
                    [&] { return weighted_sum(compose_block_input(x, maps, mode), r); }, ps);
    }
  }
  {
    BasicTensor<T> z = representable(random_tensor<T>({3, 4, 1, 1}, rng, T(-3), T(3)));
    std::vector<LabelVector> labels(3, LabelVector(4));
    for (auto& l : labels) {
      for (auto& v : l) v = static_cast<std::uint8_t>(rng() >> 63);
    }
    const auto res = bce_loss(z, labels);
    std::vector<Probe<T>> ps{probe<T>("z", z.values(), res.logits_grad.values())};
    run.run("bce_loss", [&] { return bce_loss(z, labels).loss; }, ps);
  }
  for (Connection conn : {Connection::res, Connection::dense}) {
    for (SeMode se : {SeMode::none, SeMode::after_block, SeMode::before_merge}) {
      ModelConfig cfg = reduced_model_config(conn, se);
      ModelParams<T> mp = build_model<T>(cfg, seed + 1);
      make_representable(mp);
      BlockParams<T>& block = mp.blocks[0];
      BasicTensor<T> x = rnd({2, 18, 6, 6});
      BasicTensor<T> maps(Shape{2, kAttentionMaps, 6, 6});
      for (auto& v : maps.values()) v = static_cast<T>(rng() >> 63);
      BlockCache<T> cache;
      const auto y = block_forward(x, block, cfg, &maps, Mode::train, &cache);
      const auto r = rnd(y.shape());
      mp.zero_grad();
      const auto gx = block_backward(r, block, cfg, cache);
      std::vector<Probe<T>> ps{probe<T>("x", x.values(), gx.values())};
      for (auto& p : mp.inventory()) {
        if (p.kind != ParamKind::buffer && p.name.rfind("block1.", 0) == 0) {
          ps.push_back(probe<T>(p.name, p.value, std::span<const T>(p.grad)));
        }
      }
      run.run("block_" + to_string(conn) + "_se_" + to_string(se),
          [&] { return weighted_sum(block_forward(x, block, cfg, &maps, Mode::train), r); }, ps);
    }
  }
}

AttentionStack random_stack(int size, std::mt19937_64& rng) {
  AttentionStack s;
  for (auto& m : s.maps) {
    m.width = m.height = size;
    m.pixels.resize(static_cast<std::size_t>(size) * size);
    for (auto& v : m.pixels) v = (rng() >> 62) == 0 ? 255 : 0;
  }
  s.pyramid = build_pyramid(s.maps);
  return s;
}

template <typename T>
void model_suite(std::uint64_t seed, Runner<T>& run) {
  std::mt19937_64 rng(seed);
  for (const auto& [conn, se] : {std::pair{Connection::res, SeMode::none},
                                 std::pair{Connection::dense, SeMode::after_block}}) {
    const ModelConfig cfg = reduced_model_config(conn, se);
    ModelParams<T> mp = build_model<T>(cfg, seed);
    make_representable(mp);
    const int batch = 2;
    const auto x =
        random_tensor<T>(Shape{batch, 3, cfg.input_size, cfg.input_size}, rng, T(0), T(1));
    BasicTensor<T> input = tile_entry_input(x);
    for (auto& v : input.values()) v = static_cast<T>(static_cast<float>(v));
    std::vector<AttentionStack> stacks;
    for (int n = 0; n < batch; ++n) stacks.push_back(random_stack(cfg.input_size, rng));
    std::vector<const AttentionStack*> refs;
    for (const auto& s : stacks) refs.push_back(&s);
    std::vector<LabelVector> labels(batch, LabelVector(cfg.d));
    for (auto& l : labels) {
      for (auto& v : l) v = static_cast<std::uint8_t>(rng() >> 63);
    }
    ForwardState<T> state;
    const auto out = model_forward(input, refs, mp, Mode::train, &state);
    mp.zero_grad();
    model_backward(bce_loss(out.logits, labels).logits_grad, mp, state);
    std::vector<Probe<T>> ps;
    for (auto& p : mp.inventory()) {
      if (p.kind != ParamKind::buffer) {
        ps.push_back(probe<T>(p.name, p.value, std::span<const T>(p.grad)));
      }
    }
    run.run("whole_model_" + to_string(conn) + "_se_" + to_string(se) + "_28x28",
            [&] {
              return bce_loss(model_forward(input, refs, mp, Mode::train).logits, labels)
                  .loss;
            },
            ps);
  }
}

}  // namespace

namespace {

template <typename W, typename Case>
void run_both_precisions(DiagnosticReport& rep, std::uint64_t seed,
                         const GradCheckOptions& opts, double wide_tolerance,
                         double standard_tolerance, Case&& suite) {
  ReferenceRunner<W> ref(opts);
  suite(seed, static_cast<Runner<W>&>(ref));
  CompareRunner<double, W> wide(rep, ref, opts, wide_tolerance, " [double]");
  suite(seed, static_cast<Runner<double>&>(wide));
  GradCheckOptions float_opts = opts;
  float_opts.floor = kFloatGradientFloor;
  CompareRunner<float, W> standard(rep, ref, float_opts, standard_tolerance, " [float]");
  suite(seed, static_cast<Runner<float>&>(standard));
}

}  // namespace

DiagnosticReport op_gradient_suite(std::uint64_t seed) {
  DiagnosticReport rep;
  run_both_precisions<long double>(rep, seed, {1e-6, 1e-6, 256, seed}, kWideTolerance,
                      kStandardTolerance,
                      [](std::uint64_t s, auto& run) { op_suite(s, run); });
  return rep;
}

DiagnosticReport model_gradient_check(std::uint64_t seed) {
  DiagnosticReport rep;
  run_both_precisions<double>(rep, seed, {1e-6, 1e-6, 60, seed}, kStandardTolerance,
                      kStandardTolerance,
                      [](std::uint64_t s, auto& run) { model_suite(s, run); });
  return rep;
}

DiagnosticReport run_all_diagnostics(std::uint64_t seed) {
  DiagnosticReport rep = grouped_conv_oracle(100, seed);
  rep.append(op_gradient_suite(seed));
  rep.append(model_gradient_check(seed));
  return rep;
}

}  // namespace cednn
