// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cednn/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cednn {

int binarize_intensity(int intensity) {
  if (intensity < 0 || intensity > 5) {
    throw std::invalid_argument("AU intensity " + std::to_string(intensity) +
                                " outside 0..5");
  }
  return intensity >= 2 ? 1 : 0;
}

std::filesystem::path DatasetManifest::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

std::vector<std::string> DatasetManifest::subjects() const {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.subject_id);
  return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
LossResult<T> bce_loss(const BasicTensor<T>& logits,
                       const std::vector<LabelVector>& labels) {
  const int n = logits.n();
  const int d = static_cast<int>(logits.size() / std::max(n, 1));
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("bce_loss: batch has " + std::to_string(n) +
                                " rows but " + std::to_string(labels.size()) +
                                " label vectors");
  }
  LossResult<T> r;
  r.logits_grad = BasicTensor<T>(logits.shape());
  using W = Accum<T>;
  const W scale = W(1) / (static_cast<W>(n) * d);
  W total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(labels[i].size()) != d) {
      throw std::invalid_argument("bce_loss: label arity " +
                                  std::to_string(labels[i].size()) +
                                  " does not match " + std::to_string(d) + " outputs");
    }
    for (int k = 0; k < d; ++k) {
      const int y = labels[i][k];
      if (y != 0 && y != 1) throw std::invalid_argument("bce_loss: label not in {0,1}");
      const std::size_t idx = static_cast<std::size_t>(i) * d + k;
      const W z = logits[idx];
      total += std::max(z, W(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
      r.logits_grad[idx] = static_cast<T>((sigmoid(z) - y) * scale);
    }
  }
  r.loss = total * scale;
  return r;
}

template LossResult<float> bce_loss<float>(const BasicTensor<float>&,
                                           const std::vector<LabelVector>&);
template LossResult<double> bce_loss<double>(const BasicTensor<double>&,
                                             const std::vector<LabelVector>&);
template LossResult<long double> bce_loss<long double>(const BasicTensor<long double>&,
                                                       const std::vector<LabelVector>&);

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
void sgd_momentum_step(std::vector<ParamRef<T>>& params, OptimizerState<T>& state) {
  std::size_t slot = 0;
  for (auto& p : params) {
    if (p.kind == ParamKind::buffer) continue;
    if (slot == state.velocity.size()) state.velocity.emplace_back(p.count(), T(0));
    auto& v = state.velocity[slot++];
    if (v.size() != p.count()) {
      throw std::invalid_argument("optimizer state does not match " + p.name);
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double vi = state.momentum * v[i] + p.grad[i] +
                        state.weight_decay * p.value[i];
      v[i] = static_cast<T>(vi);
      p.value[i] = static_cast<T>(p.value[i] - state.learning_rate * vi);
    }
  }
}

template void sgd_momentum_step<float>(std::vector<ParamRef<float>>&,
                                       OptimizerState<float>&);
template void sgd_momentum_step<double>(std::vector<ParamRef<double>>&,
                                        OptimizerState<double>&);

LrSchedule LrSchedule::parse(const std::string& profile) {
  if (profile == "ck") return ck();
  if (profile == "disfa") return disfa();
  if (profile == "custom") return custom(0.01, 0.1, 20);
  throw std::invalid_argument("unknown learning-rate profile '" + profile + "'");
}

double LrSchedule::rate(int epoch) const {
  if (epoch < 0) throw std::invalid_argument("negative epoch");
  if (step_epochs <= 0) return base;
  return base * std::pow(factor, epoch / step_epochs);
}

double lr_schedule(int epoch, const LrSchedule& schedule) {
  return schedule.rate(epoch);
}

// ---------------------------------------------------------------------------
// Folds

const std::vector<std::vector<std::string>>& disfa_fold_subjects() {
  static const std::vector<std::vector<std::string>> folds{
      {"SN027", "SN010", "SN007"},
      {"SN013", "SN025", "SN003"},
      {"SN009", "SN001", "SN004"}};
  return folds;
}

std::vector<FoldSplit> make_folds(const DatasetManifest& manifest,
                                  FoldScheme scheme, int groups) {
  std::map<std::string, int> fold_of;  // subject -> 1-based fold
  int nfolds = 0;
  if (scheme == FoldScheme::fixed_three_fold) {
    const auto& table = disfa_fold_subjects();
    nfolds = static_cast<int>(table.size());
    for (int f = 0; f < nfolds; ++f) {
      for (const auto& s : table[f]) fold_of[s] = f + 1;
    }
    for (const auto& r : manifest.records) {
      if (!fold_of.count(r.subject_id)) {
        throw std::invalid_argument("subject " + r.subject_id +
                                    " is not part of the fixed three-fold split");
      }
    }
  } else {
    const bool explicit_ids =
        std::any_of(manifest.records.begin(), manifest.records.end(),
                    [](const ManifestRecord& r) { return r.fold_id.has_value(); });
    if (explicit_ids) {
      for (const auto& r : manifest.records) {
        if (!r.fold_id) {
          throw std::invalid_argument("record of subject " + r.subject_id +
                                      " lacks a fold id");
        }
        auto [it, inserted] = fold_of.emplace(r.subject_id, *r.fold_id);
        if (!inserted && it->second != *r.fold_id) {
          throw std::invalid_argument("subject " + r.subject_id +
                                      " appears in two folds");
        }
        nfolds = std::max(nfolds, *r.fold_id);
      }
    } else {
      if (groups < 2) throw std::invalid_argument("need at least two fold groups");
      const auto subjects = manifest.subjects();
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        fold_of[subjects[i]] = static_cast<int>(i % groups) + 1;
      }
      nfolds = groups;
    }
  }
  std::vector<FoldSplit> splits(nfolds);
  for (int f = 0; f < nfolds; ++f) splits[f].fold = f + 1;
  for (const auto& [subject, f] : fold_of) {
    if (f < 1) throw std::invalid_argument("fold ids must be >= 1");
    splits[f - 1].test_subjects.push_back(subject);
  }
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const int f = fold_of.at(manifest.records[i].subject_id);
    for (auto& s : splits) (s.fold == f ? s.test : s.train).push_back(i);
  }
  return splits;
}

// ---------------------------------------------------------------------------
// Metrics

F1Score f1_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  if (tp < 0 || fp < 0 || fn < 0) throw std::invalid_argument("negative count");
  F1Score s;
  s.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  const double pr = s.precision + s.recall;
  s.f1 = pr > 0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  return s;
}

EvalReport evaluate_predictions(const std::vector<std::vector<double>>& probabilities,
                                const std::vector<LabelVector>& labels,
                                const std::vector<std::string>& au_names,
                                double threshold) {
  if (probabilities.size() != labels.size()) {
    throw std::invalid_argument("evaluate: prediction/label count mismatch");
  }
  const std::size_t d = labels.empty() ? au_names.size() : labels.front().size();
  EvalReport rep;
  rep.frames = labels.size();
  rep.per_au.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    rep.per_au[k].name = k < au_names.size() ? au_names[k] : "AU" + std::to_string(k);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].size() != d || probabilities[i].size() != d) {
      throw std::invalid_argument("evaluate: inconsistent AU arity at frame " +
                                  std::to_string(i));
    }
    for (std::size_t k = 0; k < d; ++k) {
      const bool pred = probabilities[i][k] >= threshold;
      const bool truth = labels[i][k] != 0;
      AuScore& a = rep.per_au[k];
      if (pred && truth) ++a.tp;
      else if (pred && !truth) ++a.fp;
      else if (!pred && truth) ++a.fn;
      else ++a.tn;
    }
  }
  double sum = 0.0;
  for (AuScore& a : rep.per_au) {
    a.score = f1_from_counts(a.tp, a.fp, a.fn);
    sum += a.score.f1;
  }
  rep.average_f1 = d ? sum / d : 0.0;
  return rep;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "# au tp fp fn tn precision recall f1\n";
  for (const AuScore& a : per_au) {
    os << a.name << ' ' << a.tp << ' ' << a.fp << ' ' << a.fn << ' ' << a.tn << ' '
       << a.score.precision << ' ' << a.score.recall << ' ' << a.score.f1 << '\n';
  }
  os << "frames " << frames << '\n';
  os << "average_f1 " << average_f1 << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Training

Tensor batch_input(const std::vector<Sample>& samples,
                   std::span<const std::size_t> idx,
                   std::vector<const AttentionStack*>& stacks) {
  if (idx.empty()) throw std::invalid_argument("empty batch");
  const Shape s0 = samples[idx[0]].image.shape();
  Tensor rgb(Shape{static_cast<int>(idx.size()), 3, s0.h, s0.w});
  stacks.clear();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Sample& s = samples[idx[b]];
    if (!(s.image.shape() == s0)) throw ShapeError("batch images differ in size");
    for (int c = 0; c < 3; ++c) {
      auto src = s.image.channel(0, c);
      std::copy(src.begin(), src.end(), rgb.channel(static_cast<int>(b), c).begin());
    }
    stacks.push_back(&s.stack);
  }
  return tile_entry_input(rgb);
}

std::vector<std::vector<double>> predict(ModelParams<float>& model,
                                         const std::vector<Sample>& samples,
                                         int batch_size) {
  std::vector<std::vector<double>> out;
  std::vector<const AttentionStack*> stacks;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) {
      idx.push_back(i);
    }
    Tensor input = batch_input(samples, idx, stacks);
    ForwardOutput<float> fo = model_forward(input, stacks, model, Mode::eval);
    const int d = fo.probabilities.c();
    for (int n = 0; n < fo.probabilities.n(); ++n) {
      std::vector<double> row(d);
      for (int k = 0; k < d; ++k) row[k] = fo.probabilities.at(n, k, 0, 0);
      out.push_back(std::move(row));
    }
  }
  return out;
}

EvalReport evaluate(ModelParams<float>& model, const std::vector<Sample>& samples,
                    const std::vector<std::string>& au_names, double threshold) {
  std::vector<LabelVector> labels;
  for (const Sample& s : samples) labels.push_back(s.labels);
  return evaluate_predictions(predict(model, samples), labels, au_names, threshold);
}

std::string EpochRecord::to_text() const {
  std::ostringstream os;
  os << "epoch " << epoch << " lr " << std::setprecision(9) << learning_rate
     << " loss " << std::setprecision(9) << mean_loss;
  if (val_f1) os << " val_f1 " << std::setprecision(6) << *val_f1;
  return os.str();
}

double train_step(ModelParams<float>& model, const std::vector<Sample>& samples,
                  std::span<const std::size_t> batch, OptimizerState<float>& opt) {
  std::vector<const AttentionStack*> stacks;
  Tensor input = batch_input(samples, batch, stacks);
  std::vector<LabelVector> labels;
  for (std::size_t i : batch) labels.push_back(samples[i].labels);
  ForwardState<float> state;
  ForwardOutput<float> fo = model_forward(input, stacks, model, Mode::train, &state);
  LossResult<float> loss = bce_loss(fo.logits, labels);
  model.zero_grad();
  model_backward(loss.logits_grad, model, state);
  auto params = model.inventory();
  sgd_momentum_step(params, opt);
  return loss.loss;
}

TrainResult train(ModelParams<float>& model, const std::vector<Sample>& train_set,
                  const TrainConfig& config, const std::vector<Sample>* validation,
                  const EpochCallback& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("training split is empty");
  for (const Sample& s : train_set) {
    if (static_cast<int>(s.labels.size()) != model.config.d) {
      throw std::invalid_argument("sample of subject " + s.subject_id + " has " +
                                  std::to_string(s.labels.size()) +
                                  " labels, model predicts " +
                                  std::to_string(model.config.d));
    }
  }
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  OptimizerState<float> opt;
  opt.momentum = config.momentum;
  opt.weight_decay = config.weight_decay;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    opt.learning_rate = config.schedule.rate(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len =
          std::min<std::size_t>(config.batch_size, order.size() - start);
      std::span<const std::size_t> batch(order.data() + start, len);
      loss_sum += train_step(model, train_set, batch, opt) * len;
      seen += len;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = opt.learning_rate;
    rec.mean_loss = loss_sum / seen;
    if (validation && !validation->empty()) {
      rec.val_f1 = evaluate(model, *validation).average_f1;
    }
    result.log.push_back(rec);
    const double score = rec.val_f1 ? *rec.val_f1 : -rec.mean_loss;
    if (score > best_score) {
      best_score = score;
      result.best_epoch = epoch;
      result.best = model;
    }
    if (on_epoch && !on_epoch(rec, model)) break;
  }
  return result;
}

}  // namespace cednn
