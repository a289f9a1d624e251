// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cednn/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cednn/analysis.hpp"
#include "cednn/diagnostics.hpp"
#include "cednn/io.hpp"
#include "cednn/synthetic.hpp"
#include "cednn/train.hpp"

namespace cednn {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string manifest;
  std::string config;
  std::string out;
  std::string checkpoint;
  std::optional<int> fold;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool validate = false;
  std::string predictor = "model";
  double threshold = 0.5;
  std::string convention = "both";
  int record = 0;
  int block = 1;
  int trials = 12;
  int batch = 1;
  int cases = 100;
  int subjects = 8;
  int frames = 8;
  int aus = 4;
  bool no_jitter = false;
  bool identical = false;
};

AppConfig config_or_default(const Options& o) {
  AppConfig c = o.config.empty() ? AppConfig{} : load_config(o.config);
  if (o.seed) c.train.seed = *o.seed;
  if (o.epochs) c.train.epochs = *o.epochs;
  return c;
}

std::vector<std::size_t> all_indices(const DatasetManifest& m) {
  std::vector<std::size_t> idx(m.records.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

FoldSplit select_fold(const DatasetManifest& m, const AppConfig& c, int fold) {
  const auto folds = make_folds(m, c.fold_scheme, c.fold_groups);
  if (fold < 1 || fold > static_cast<int>(folds.size())) {
    throw std::invalid_argument("--fold " + std::to_string(fold) + " out of range 1.." +
                                std::to_string(folds.size()));
  }
  return folds[fold - 1];
}

// Stack of five empty maps at `size`, for running attention blocks without
// a face pair.
AttentionStack empty_stack(int size) {
  AttentionStack s;
  for (auto& m : s.maps) m = BinaryMap(size, size);
  s.pyramid = build_pyramid(s.maps);
  return s;
}

std::string join_lines(const std::vector<EpochRecord>& log) {
  std::string s;
  for (const auto& r : log) s += r.to_text() + "\n";
  return s;
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw std::invalid_argument("synth needs --out");
  std::vector<SyntheticFrame> frames;
  if (o.identical) {
    frames.push_back(make_identical_pair(o.seed.value_or(0), o.aus));
  } else {
    SyntheticOptions so;
    so.subjects = o.subjects;
    so.frames_per_subject = o.frames;
    so.num_aus = o.aus;
    so.jitter = !o.no_jitter;
    so.seed = o.seed.value_or(0);
    frames = make_synthetic_frames(so);
  }
  out << write_synthetic_dataset(frames, o.out).string() << '\n';
  return 0;
}

int cmd_gen_attn(const Options& o, std::ostream& out) {
  if (o.manifest.empty() || o.out.empty()) {
    throw std::invalid_argument("gen-attn needs --manifest and --out");
  }
  const AppConfig cfg = config_or_default(o);
  const DatasetManifest m = load_manifest(o.manifest);
  std::ostringstream index;
  index << "# record subject active_pixels_per_threshold\n";
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const AttentionResult r = process_record(m, m.records[i], cfg.attention);
    std::ostringstream name;
    name << "rec" << std::setw(4) << std::setfill('0') << i;
    const fs::path dir = fs::path(o.out) / name.str();
    save_attention_stack(dir, r.stack);
    write_png(dir / "masked_difference.png", r.masked_difference);
    write_png(dir / "face_mask.png", r.face_mask.mask);
    index << name.str() << ' ' << m.records[i].subject_id;
    for (const auto& map : r.stack.maps) {
      index << ' ' << std::count(map.pixels.begin(), map.pixels.end(), std::uint8_t{255});
    }
    if (r.face_mask.self_intersecting) index << " mask_self_intersecting";
    index << '\n';
  }
  write_file_atomic(fs::path(o.out) / "index.txt", index.str());
  out << "wrote " << m.records.size() << " attention stacks to " << o.out << '\n';
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  if (o.manifest.empty() || o.out.empty()) {
    throw std::invalid_argument("train needs --manifest and --out");
  }
  const AppConfig cfg = config_or_default(o);
  const DatasetManifest m = load_manifest(o.manifest);
  if (m.arity() != static_cast<std::size_t>(cfg.model.d)) {
    throw std::invalid_argument("manifest has " + std::to_string(m.arity()) +
                                " AU columns, model predicts " +
                                std::to_string(cfg.model.d));
  }
  std::vector<std::size_t> train_idx = all_indices(m), held_out;
  if (o.fold) {
    const FoldSplit split = select_fold(m, cfg, *o.fold);
    train_idx = split.train;
    held_out = split.test;
  }
  const auto train_set = load_samples(m, train_idx, cfg.attention, cfg.model.input_size);
  std::vector<Sample> val_set;
  if (o.validate && !held_out.empty()) {
    val_set = load_samples(m, held_out, cfg.attention, cfg.model.input_size);
  }
  ModelParams<float> model = build_model<float>(cfg.model, cfg.train.seed);
  const fs::path dir = o.out;
  std::string log_text;
  const TrainResult result = train(
      model, train_set, cfg.train, val_set.empty() ? nullptr : &val_set,
      [&](const EpochRecord& rec, ModelParams<float>&) {
        out << rec.to_text() << '\n';
        return true;
      });
  CheckpointMeta meta;
  meta.epoch = static_cast<int>(result.log.size());
  meta.seed = cfg.train.seed;
  meta.momentum = cfg.train.momentum;
  meta.weight_decay = cfg.train.weight_decay;
  meta.learning_rate = result.log.empty() ? cfg.train.schedule.base
                                          : result.log.back().learning_rate;
  save_checkpoint(dir / "checkpoint_final.ckpt", model, meta);
  if (result.best) {
    CheckpointMeta best_meta = meta;
    best_meta.epoch = result.best_epoch + 1;
    best_meta.learning_rate = result.log[result.best_epoch].learning_rate;
    ModelParams<float> best = *result.best;
    save_checkpoint(dir / "checkpoint_best.ckpt", best, best_meta);
  }
  write_file_atomic(dir / "train_log.txt", join_lines(result.log));
  write_file_atomic(dir / "config.json", config_to_json(cfg));
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.manifest.empty()) throw std::invalid_argument("eval needs --manifest");
  const AppConfig cfg = config_or_default(o);
  const DatasetManifest m = load_manifest(o.manifest);
  std::vector<std::size_t> idx = all_indices(m);
  if (o.fold) idx = select_fold(m, cfg, *o.fold).test;
  std::vector<LabelVector> labels;
  for (std::size_t i : idx) labels.push_back(m.records[i].labels);
  std::vector<std::vector<double>> probs;
  if (o.predictor == "labels") {
    for (const auto& l : labels) probs.emplace_back(l.begin(), l.end());
  } else if (o.predictor == "model") {
    if (o.checkpoint.empty()) throw std::invalid_argument("eval needs --checkpoint");
    ModelParams<float> model = load_checkpoint(o.checkpoint);
    const auto samples = load_samples(m, idx, cfg.attention, model.config.input_size);
    probs = predict(model, samples);
  } else {
    throw std::invalid_argument("unknown predictor '" + o.predictor + "'");
  }
  const EvalReport rep = evaluate_predictions(probs, labels, m.au_names, o.threshold);
  if (o.out.empty()) {
    out << rep.to_text();
  } else {
    write_file_atomic(o.out, rep.to_text());
    out << "average_f1 " << rep.average_f1 << '\n';
  }
  return 0;
}

int cmd_analyze(const Options& o, std::ostream& out) {
  const AppConfig cfg = config_or_default(o);
  std::vector<CountConvention> conventions;
  if (o.convention == "weights_only" || o.convention == "both") {
    conventions.push_back(CountConvention::weights_only);
  }
  if (o.convention == "implementation" || o.convention == "both") {
    conventions.push_back(CountConvention::implementation);
  }
  if (conventions.empty()) {
    throw std::invalid_argument("unknown convention '" + o.convention + "'");
  }
  for (CountConvention c : conventions) {
    const ComplexityReport rep = analyze_complexity(cfg.model, c);
    if (o.out.empty()) {
      out << rep.to_text();
    } else {
      const fs::path dir = o.out;
      write_file_atomic(dir / ("complexity_" + to_string(c) + ".txt"), rep.to_text());
      write_file_atomic(dir / ("summary_" + to_string(c) + ".json"), rep.summary_json());
      out << to_string(c) << " total_params " << rep.total_params << " total_macs "
          << rep.total_macs << '\n';
    }
  }
  return 0;
}

int cmd_viz(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty() || o.manifest.empty() || o.out.empty()) {
    throw std::invalid_argument("viz needs --checkpoint, --manifest and --out");
  }
  const AppConfig cfg = config_or_default(o);
  ModelParams<float> model = load_checkpoint(o.checkpoint);
  const DatasetManifest m = load_manifest(o.manifest);
  if (o.record < 0 || o.record >= static_cast<int>(m.records.size())) {
    throw std::invalid_argument("--record out of range");
  }
  const auto samples = load_samples(m, {static_cast<std::size_t>(o.record)},
                                    cfg.attention, model.config.input_size);
  const Tensor input = tile_entry_input(samples[0].image);
  const fs::path dir = o.out;
  const std::string stem = "block" + std::to_string(o.block);
  export_feature_maps(model, input, {&samples[0].stack}, o.block,
                      dir / (stem + "_attention.png"));
  const AttentionStack none = empty_stack(samples[0].stack.maps[0].width);
  export_feature_maps(model, input, {&none}, o.block, dir / (stem + "_no_attention.png"));
  out << "wrote " << (dir / (stem + "_attention.png")).string() << " and "
      << (dir / (stem + "_no_attention.png")).string() << '\n';
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const std::uint64_t seed = o.seed.value_or(0);
  DiagnosticReport rep = grouped_conv_oracle(o.cases, seed);
  rep.append(op_gradient_suite(seed));
  rep.append(model_gradient_check(seed));
  out << rep.to_text();
  if (!o.out.empty()) write_file_atomic(o.out, rep.to_text());
  return rep.passed() ? 0 : 1;
}

int cmd_time(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw std::invalid_argument("time needs --checkpoint");
  if (o.batch < 1) throw std::invalid_argument("--batch must be >= 1");
  ModelParams<float> model = load_checkpoint(o.checkpoint);
  const int size = model.config.input_size;
  Tensor rgb;
  AttentionStack stack;
  if (!o.manifest.empty()) {
    const AppConfig cfg = config_or_default(o);
    const DatasetManifest m = load_manifest(o.manifest);
    auto samples = load_samples(m, {static_cast<std::size_t>(o.record)}, cfg.attention,
                                size);
    rgb = samples[0].image;
    stack = std::move(samples[0].stack);
  } else {
    std::mt19937_64 rng(o.seed.value_or(0));
    rgb = random_tensor<float>(Shape{1, 3, size, size}, rng, 0.0f, 1.0f);
    stack = empty_stack(size);
  }
  Tensor input(Shape{o.batch, kEntryChannels, size, size});
  const Tensor one = tile_entry_input(rgb);
  for (int n = 0; n < o.batch; ++n) {
    std::copy(one.values().begin(), one.values().end(),
              input.values().begin() + static_cast<std::ptrdiff_t>(n) * one.size());
  }
  const std::vector<const AttentionStack*> stacks(o.batch, &stack);
  const TimingReport t = time_inference(
      [&] { model_forward(input, stacks, model, Mode::eval); }, o.trials);
  const std::string table =
      timing_table(model.config.name(), t,
                   analyze_complexity(model.config, CountConvention::weights_only));
  out << table;
  if (!o.out.empty()) write_file_atomic(o.out, table);
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err) {
  CLI::App app{"CEDNN: facial action unit detection with spatial attention", "cednn"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* s) { s->add_option("--seed", o.seed, "Random seed"); };
  auto add_config = [&](CLI::App* s) {
    s->add_option("--config", o.config, "JSON configuration file");
  };

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and manifest");
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--subjects", o.subjects, "Number of subjects");
  synth->add_option("--frames", o.frames, "Frames per subject");
  synth->add_option("--aus", o.aus, "Pseudo-AU count (1-4)");
  synth->add_flag("--no-jitter", o.no_jitter, "Render without pose jitter");
  synth->add_flag("--identical", o.identical, "Write one identical action/neutral pair");
  add_seed(synth);

  auto* gen = app.add_subcommand("gen-attn", "Generate attention stacks for a manifest");
  gen->add_option("--manifest", o.manifest, "Dataset manifest")->required();
  gen->add_option("--out", o.out, "Output directory")->required();
  add_config(gen);
  add_seed(gen);

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--manifest", o.manifest, "Dataset manifest")->required();
  tr->add_option("--out", o.out, "Output directory")->required();
  tr->add_option("--fold", o.fold, "Hold out this fold (1-based)");
  tr->add_option("--epochs", o.epochs, "Override the configured epoch count");
  tr->add_flag("--validate", o.validate, "Report F1 on the held-out fold each epoch");
  add_config(tr);
  add_seed(tr);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--manifest", o.manifest, "Dataset manifest")->required();
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
  ev->add_option("--fold", o.fold, "Evaluate this fold's test subjects");
  ev->add_option("--out", o.out, "Report file");
  ev->add_option("--threshold", o.threshold, "Decision threshold");
  ev->add_option("--predictor", o.predictor, "model, or labels to echo ground truth");
  add_config(ev);
  add_seed(ev);

  auto* an = app.add_subcommand("analyze", "Parameter and FLOP accounting");
  an->add_option("--out", o.out, "Output directory");
  an->add_option("--convention", o.convention, "weights_only, implementation or both");
  add_config(an);
  add_seed(an);

  auto* viz = app.add_subcommand("viz", "Export feature-map grids");
  viz->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  viz->add_option("--manifest", o.manifest, "Dataset manifest")->required();
  viz->add_option("--record", o.record, "Record index");
  viz->add_option("--block", o.block, "Block index (1-based)");
  viz->add_option("--out", o.out, "Output directory")->required();
  add_config(viz);
  add_seed(viz);

  auto* gc = app.add_subcommand("gradcheck", "Run the oracle and gradient suites");
  gc->add_option("--cases", o.cases, "Grouped-convolution oracle cases");
  gc->add_option("--out", o.out, "Report file");
  add_seed(gc);

  auto* tm = app.add_subcommand("time", "Inference timing table");
  tm->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  tm->add_option("--manifest", o.manifest, "Take the input from this manifest");
  tm->add_option("--record", o.record, "Record index");
  tm->add_option("--trials", o.trials, "Timed trials");
  tm->add_option("--batch", o.batch, "Batch size");
  tm->add_option("--out", o.out, "Report file");
  add_config(tm);
  add_seed(tm);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*synth) return cmd_synth(o, out);
    if (*gen) return cmd_gen_attn(o, out);
    if (*tr) return cmd_train(o, out);
    if (*ev) return cmd_eval(o, out);
    if (*an) return cmd_analyze(o, out);
    if (*viz) return cmd_viz(o, out);
    if (*gc) return cmd_gradcheck(o, out);
    if (*tm) return cmd_time(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace cednn
