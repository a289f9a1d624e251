// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Set CEDNN_ACCEPTANCE_VERBOSE=1 for per-check detail.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <regex>
#include <sstream>

#include "cednn/analysis.hpp"
#include "cednn/cli.hpp"
#include "cednn/diagnostics.hpp"
#include "cednn/io.hpp"
#include "cednn/synthetic.hpp"
#include "cednn/train.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cednn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

bool verbose() {
  const char* v = std::getenv("CEDNN_ACCEPTANCE_VERBOSE");
  return v && std::string(v) == "1";
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

constexpr int kLs[] = {1, 2, 3, 6, 9, 18};

// ---------------------------------------------------------------------------

Outcome params_table() {
  struct Row { Connection c; int L; double published_m; };
  const Row rows[] = {{Connection::res, 18, 9.59}, {Connection::res, 1, 13.33},
                      {Connection::dense, 18, 10.48}, {Connection::dense, 1, 14.22}};
  Outcome o{true, ""};
  for (const Row& r : rows) {
    const std::int64_t p = count_params(ModelConfig::standard(r.c, r.L)).total_params;
    const double rel = std::abs(p / 1e6 - r.published_m) / r.published_m;
    o.pass &= rel <= 0.01;
    o.detail += to_string(r.c) + "_L" + std::to_string(r.L) + "=" + std::to_string(p) +
                fmt(" (%.2f%%) ", rel * 100);
  }
  return o;
}

Outcome flops_table() {
  const double res[] = {1.13, 0.69, 0.54, 0.40, 0.36, 0.33};
  const double dense[] = {1.32, 0.88, 0.74, 0.60, 0.56, 0.52};
  Outcome o{true, ""};
  double worst = 0.0;
  for (Connection c : {Connection::res, Connection::dense}) {
    std::int64_t prev = std::numeric_limits<std::int64_t>::max();
    for (int i = 0; i < 6; ++i) {
      const std::int64_t macs = count_flops(ModelConfig::standard(c, kLs[i])).total_macs;
      const double ref = (c == Connection::res ? res : dense)[i];
      const double rel = std::abs(macs / 1e9 - ref) / ref;
      worst = std::max(worst, rel);
      o.pass &= rel <= 0.15 && macs <= prev;
      prev = macs;
    }
  }
  o.detail = "worst band deviation " + fmt("%.2f%%", worst * 100) + ", ordering checked";
  return o;
}

// Dense convolution whose weights are zero outside the group-diagonal
// blocks, evaluated by the naive oracle.
Outcome conv_oracle() {
  std::mt19937_64 rng(2026);
  const int groups[] = {1, 2, 3, 4, 6, 9};
  double worst = 0.0;
  const int cases = 120;
  for (int t = 0; t < cases; ++t) {
    const int g = groups[rng() % 6];
    const int k = 1 + 2 * static_cast<int>(rng() % 3);
    ConvParams<double> p;
    p.groups = g;
    p.stride = 1 + static_cast<int>(rng() % 2);
    p.padding = static_cast<int>(rng() % (k / 2 + 1));
    const int cig = 1 + static_cast<int>(rng() % 3), cog = 1 + static_cast<int>(rng() % 3);
    const int cin = g * cig, cout = g * cog;
    p.weight = random_tensor<double>(Shape{cout, cig, k, k}, rng);
    if (rng() % 2) p.bias = random_tensor<double>(Shape{1, cout, 1, 1}, rng).storage();
    const int h = k + static_cast<int>(rng() % 7), w = k + static_cast<int>(rng() % 7);
    const TensorD x = random_tensor<double>(Shape{1 + static_cast<int>(rng() % 2), cin, h, w}, rng);

    ConvParams<double> dense = p;
    dense.groups = 1;
    dense.weight = TensorD(Shape{cout, cin, k, k});
    for (int oc = 0; oc < cout; ++oc) {
      for (int j = 0; j < cig; ++j) {
        const int ic = (oc / cog) * cig + j;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) dense.weight.at(oc, ic, ky, kx) = p.weight.at(oc, j, ky, kx);
      }
    }
    worst = std::max(worst, max_abs_diff(conv2d_grouped(x, p), oracle::naive_conv(x, dense)));
  }
  return {worst <= 1e-6, std::to_string(cases) + " cases, max |diff| " + fmt("%.3g", worst) +
                             " (tolerance 1e-6)"};
}

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  DiagnosticReport rep = op_gradient_suite(0);
  rep.append(model_gradient_check(0));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  double worst_wide = 0.0, worst_std = 0.0;
  int wide = 0, standard = 0;
  for (const DiagnosticLine& l : rep.lines) {
    if (l.tolerance == kWideTolerance) {
      worst_wide = std::max(worst_wide, l.measured);
      ++wide;
    } else {
      worst_std = std::max(worst_std, l.measured);
      ++standard;
    }
  }
  if (verbose()) std::cout << rep.to_text();
  std::ostringstream d;
  d << wide << " checks at 1e-5 (worst " << fmt("%.2g", worst_wide) << "), " << standard
    << " at 1e-3 (worst " << fmt("%.2g", worst_std) << "), " << fmt("%.0f s", secs);
  return {rep.passed() && secs < 300.0, d.str()};
}

Outcome linear_blocks() {
  double worst = 0.0;
  for (Connection c : {Connection::res, Connection::dense}) {
    for (int L : kLs) {
      ModelConfig cfg = ModelConfig::standard(c, L, 12, 0);
      cfg.linear = true;
      ModelParams<double> mp = build_model<double>(cfg, 40 + L);
      const int size = 4;
      std::mt19937_64 rng(L);
      const TensorD x = random_tensor<double>(Shape{1, kEntryChannels, size, size}, rng);
      const TensorD y = block_forward(x, mp.blocks[0], cfg, static_cast<const TensorD*>(nullptr), Mode::eval);
      const auto want = oracle::apply(oracle::block_matrix(mp.blocks[0], size), x.storage());
      if (want.size() != y.size()) return {false, "output size mismatch"};
      for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(y[i] - want[i]));
    }
  }
  return {worst <= 1e-5, "12 configurations, max |diff| " + fmt("%.3g", worst) +
                             " (tolerance 1e-5)"};
}

Outcome attention_properties() {
  SyntheticOptions opt;
  opt.subjects = 10;
  opt.frames_per_subject = 5;
  opt.seed = 77;
  bool nest = true, sizes = true, two_valued = true, zero = true;
  auto check_values = [&](const AttentionStack& s) {
    for (const BinaryMap& m : s.maps)
      for (auto v : m.pixels) two_valued &= v == 0 || v == 255;
    for (const AttentionLevel& lvl : s.pyramid)
      for (const auto& m : lvl.maps)
        for (auto v : m) two_valued &= v <= 1;
    sizes &= s.pyramid_sizes() == std::vector<int>{224, 112, 56, 28, 14, 7};
  };
  int pairs = 0;
  for (const SyntheticFrame& f : make_synthetic_frames(opt)) {
    const AttentionStack s = generate_attention_stack(f.action, f.neutral, f.five_action,
                                                      f.five_neutral, f.dense_action).stack;
    ++pairs;
    check_values(s);
    for (int k = 0; k + 1 < kAttentionMaps; ++k) {
      for (std::size_t i = 0; i < s.maps[k].pixels.size(); ++i)
        nest &= !s.maps[k + 1].pixels[i] || s.maps[k].pixels[i];
      for (const AttentionLevel& lvl : s.pyramid)
        for (std::size_t i = 0; i < lvl.maps[k].size(); ++i)
          nest &= !lvl.maps[k + 1][i] || lvl.maps[k][i];
    }
  }
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SyntheticFrame f = make_identical_pair(seed);
    const AttentionStack s = generate_attention_stack(f.action, f.neutral, f.five_action,
                                                      f.five_neutral, f.dense_action).stack;
    check_values(s);
    for (const BinaryMap& m : s.maps)
      for (auto v : m.pixels) zero &= v == 0;
    for (const AttentionLevel& lvl : s.pyramid)
      for (const auto& m : lvl.maps)
        for (auto v : m) zero &= v == 0;
  }
  std::ostringstream d;
  d << pairs << " pairs: nesting " << (nest ? "ok" : "VIOLATED") << ", identical pairs "
    << (zero ? "all zero" : "NONZERO") << ", pyramid {224..7} " << (sizes ? "ok" : "WRONG")
    << ", two-valued " << (two_valued ? "ok" : "NO");
  return {nest && sizes && two_valued && zero && pairs == 50, d.str()};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(99);
  int mismatches = 0, degenerate = 0;
  const int cases = 1000;
  for (int t = 0; t < cases; ++t) {
    const int frames = t % 10 == 0 ? 0 : 1 + static_cast<int>(rng() % 30);
    const int d = 1 + static_cast<int>(rng() % 5);
    std::vector<std::vector<double>> prob(frames, std::vector<double>(d));
    std::vector<LabelVector> labels(frames, LabelVector(d));
    for (int i = 0; i < frames; ++i) {
      for (int k = 0; k < d; ++k) {
        prob[i][k] = t % 4 == 2 ? 0.0 : static_cast<double>(rng() % 11) / 10.0;
        labels[i][k] = t % 4 == 1 ? 0 : static_cast<std::uint8_t>(rng() % 2);
      }
    }
    const double thr = static_cast<double>(rng() % 11) / 10.0;
    const EvalReport rep = evaluate_predictions(prob, labels, {}, thr);
    const auto counts = oracle::recount(prob, labels, thr);
    double sum = 0.0;
    bool ok = rep.per_au.size() == counts.size();
    for (std::size_t k = 0; ok && k < counts.size(); ++k) {
      const oracle::Prf want = oracle::harmonic(counts[k]);
      const F1Score got = f1_from_counts(counts[k].tp, counts[k].fp, counts[k].fn);
      const AuScore& a = rep.per_au[k];
      ok &= a.tp == counts[k].tp && a.fp == counts[k].fp && a.fn == counts[k].fn &&
            a.tn == counts[k].tn;
      ok &= got.precision == want.p && got.recall == want.r && got.f1 == want.f1 &&
            a.score.f1 == want.f1;
      degenerate += counts[k].tp + counts[k].fp == 0 || counts[k].tp + counts[k].fn == 0;
      sum += want.f1;
    }
    ok &= rep.average_f1 == (counts.empty() ? 0.0 : sum / counts.size());
    mismatches += !ok;
  }
  std::ostringstream d;
  d << cases << " cases (" << degenerate << " AU columns with a zero denominator), "
    << mismatches << " mismatches";
  return {mismatches == 0 && degenerate > 0, d.str()};
}

// 64 synthetic images, four patch pseudo-AUs, narrow three-block model.
ModelConfig overfit_model() {
  ModelConfig cfg = ModelConfig::standard(Connection::res, 6, 4, 2);
  cfg.blocks.resize(3);
  cfg.input_size = 56;
  cfg.reduce_channels = 16;
  cfg.top_channels = 32;
  return cfg;
}

std::vector<Sample> overfit_samples(int input_size) {
  SyntheticOptions opt;
  opt.subjects = 8;
  opt.frames_per_subject = 8;
  opt.num_aus = 4;
  opt.seed = 8;
  std::vector<Sample> out;
  for (const SyntheticFrame& f : make_synthetic_frames(opt)) {
    AttentionResult r = generate_attention_stack(f.action, f.neutral, f.five_action,
                                                 f.five_neutral, f.dense_action);
    out.push_back({f.subject, image_to_tensor<float>(r.aligned_action, input_size),
                   std::move(r.stack), f.labels});
  }
  return out;
}

Outcome overfit(const fs::path& work) {
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig cfg = overfit_model();
  const std::vector<Sample> samples = overfit_samples(cfg.input_size);
  ModelParams<float> model = build_model<float>(cfg, 1);
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 16;
  tc.schedule = LrSchedule::custom(0.01, 0.1, 1000);
  tc.seed = 1;
  double best = 0.0;
  int reached = -1;
  train(model, samples, tc, nullptr, [&](const EpochRecord& rec, ModelParams<float>& m) {
    const double f1 = evaluate(m, samples).average_f1;
    best = std::max(best, f1);
    if (f1 >= 0.95 && reached < 0) reached = rec.epoch;
    return reached < 0;
  });
  const double final_f1 = evaluate(model, samples).average_f1;
  save_checkpoint(work / "overfit.ckpt", model, {});
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream d;
  d << samples.size() << " images, " << cfg.name() << " x" << cfg.blocks.size()
    << " blocks at " << cfg.input_size << "px: training F1 " << fmt("%.4f", final_f1);
  if (reached >= 0) d << " at epoch " << reached;
  d << fmt(", %.0f s", secs);
  return {samples.size() == 64 && reached >= 0 && final_f1 >= 0.95, d.str()};
}

int cli(const std::vector<std::string>& args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int rc = run_command(args, out, err);
  if (out_text) *out_text = out.str();
  if (rc != 0) std::cerr << err.str();
  return rc;
}

Outcome timing_harness(const fs::path& work) {
  std::string out;
  const int rc = cli({"time", "--checkpoint", (work / "overfit.ckpt").string(), "--trials", "12"},
                     &out);
  const bool header = out.find("| Method | Inference time (ms) | Params (M) | FLOPs (x10^9) |") !=
                      std::string::npos;
  const bool row = std::regex_search(out, std::regex(R"(\| \S+ \| [0-9.]+ ± [0-9.]+ \|)"));
  const bool trials = out.find("trials 12") != std::string::npos;
  std::cout << "  Not reproducible at desk scale: the published per-AU F1 tables and the\n"
               "  inference milliseconds depend on restricted datasets, GPU-scale training\n"
               "  and the original hardware. Criteria 1-8 stand in with analytic and\n"
               "  property-based checks. The harness still reports mean ± std over 12 runs:\n";
  std::istringstream lines(out);
  for (std::string l; std::getline(lines, l);) std::cout << "    " << l << "\n";
  return {rc == 0 && header && row && trials, "timing table in mean ± std over 12 runs"};
}

// Relative path -> contents for every regular file under `dir`.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

Outcome determinism(const fs::path& work) {
  const std::string data = (work / "data").string();
  if (cli({"synth", "--out", data, "--subjects", "3", "--frames", "4", "--seed", "5"}) != 0) {
    return {false, "synth failed"};
  }
  const std::string manifest = (work / "data" / "manifest.csv").string();
  const std::string config = (work / "train.json").string();
  write_file_atomic(config, R"({"model": {"connection": "res", "L": 6, "num_blocks": 2,
    "d": 4, "input_size": 28, "reduce_channels": 8, "top_channels": 16},
    "train": {"batch_size": 4, "base_lr": 0.01}})");
  const std::string ana_cfg = (work / "analyze.json").string();
  write_file_atomic(ana_cfg, R"({"model": {"connection": "dense", "L": 3}})");

  std::vector<std::string> compared;
  bool same = true;
  for (const std::string stage : {"gen-attn", "train", "analyze"}) {
    std::map<std::string, std::string> runs[2];
    std::string stdout_text[2];
    for (int r = 0; r < 2; ++r) {
      // Same path both times, so echoed paths cannot differ.
      const std::string out = (work / stage).string();
      fs::remove_all(out);
      std::vector<std::string> args;
      if (stage == "gen-attn") {
        args = {"gen-attn", "--manifest", manifest, "--out", out, "--seed", "3"};
      } else if (stage == "train") {
        args = {"train", "--manifest", manifest, "--out", out, "--config", config,
                "--epochs", "5", "--seed", "3"};
      } else {
        args = {"analyze", "--config", ana_cfg, "--convention", "both", "--out", out};
      }
      if (cli(args, &stdout_text[r]) != 0) return {false, stage + " failed"};
      runs[r] = snapshot(out);
    }
    const bool eq = !runs[0].empty() && runs[0] == runs[1] && stdout_text[0] == stdout_text[1];
    same &= eq;
    compared.push_back(stage + " " + std::to_string(runs[0].size()) + " files " +
                       (eq ? "identical" : "DIFFER"));
  }
  std::string d;
  for (const auto& c : compared) d += (d.empty() ? "" : ", ") + c;
  return {same, d};
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / ("cednn_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "parameter counts within 1% of published", params_table},
      {2, "MAC totals within 15% and non-increasing in L", flops_table},
      {3, "grouped convolution equals block-diagonal dense convolution", conv_oracle},
      {4, "finite-difference gradient suite", gradient_suite},
      {5, "linear block equals assembled matrix product", linear_blocks},
      {6, "attention map nesting, zero stacks, pyramid", attention_properties},
      {7, "F1 against brute-force recount", metric_oracle},
      {8, "synthetic overfit reaches F1 >= 0.95", [&] { return overfit(work); }},
      {9, "non-reproducibility statement and timing harness", [&] { return timing_harness(work); }},
      {10, "seeded gen-attn, train and analyze are byte-identical",
       [&] { return determinism(work); }},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name
              << " | " << o.detail << std::endl;
  }
  fs::remove_all(work);
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed")
            << std::endl;
  return failed ? 1 : 0;
}
