// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace cednn {

struct GradCheckOptions {
  double step = 1e-4;
  /// Denominator floor: relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  /// Above this many elements a seeded random subsample is checked.
  std::size_t max_elements = 10000;
  std::uint64_t seed = 0;
  /// When the forward and backward one-sided differences disagree by more
  /// than kink_tolerance * max(|central|, floor), the probe straddles a
  /// non-differentiable point (relu, max-pool switch) and the step is cut
  /// tenfold, at most kink_retries times.
  double kink_tolerance = 1e-2;
  int kink_retries = 2;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;

  bool within(double tolerance) const { return max_relative_error <= tolerance; }
  void merge(const GradCheckResult& other) {
    if (other.max_relative_error > max_relative_error) {
      max_relative_error = other.max_relative_error;
      worst_index = other.worst_index;
      analytic_at_worst = other.analytic_at_worst;
      numeric_at_worst = other.numeric_at_worst;
    }
    checked += other.checked;
  }
};

/// All indices, or a seeded sorted subsample of max_elements of them.
inline std::vector<std::size_t> sample_indices(std::size_t n,
                                               const GradCheckOptions& options) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n > options.max_elements) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(options.max_elements);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Central difference of `loss` with respect to `value`, shrinking the step
/// across kinks. `value` is restored before returning.
template <typename T, typename LossFn>
double numeric_derivative(LossFn&& loss, T& value, const GradCheckOptions& options) {
  using W = std::common_type_t<T, double>;
  const T saved = value;
  const W mid = static_cast<W>(loss());
  W step = static_cast<W>(options.step);
  W best = 0, best_asym = std::numeric_limits<W>::infinity();
  for (int attempt = 0; attempt <= options.kink_retries; ++attempt, step /= 10) {
    // The representable perturbation differs from `step` in single precision.
    const T hi = static_cast<T>(saved + step);
    const T lo = static_cast<T>(saved - step);
    value = hi;
    const W up = static_cast<W>(loss());
    value = lo;
    const W down = static_cast<W>(loss());
    value = saved;
    const W dh = static_cast<W>(hi) - static_cast<W>(saved);
    const W dl = static_cast<W>(saved) - static_cast<W>(lo);
    if (dh <= 0 || dl <= 0) break;
    const W central = (up - down) / (dh + dl);
    const W asym = std::abs((up - mid) / dh - (mid - down) / dl);
    if (asym < best_asym) {
      best = central;
      best_asym = asym;
    }
    if (asym <= options.kink_tolerance * std::max<W>(std::abs(central), options.floor)) {
      return static_cast<double>(central);
    }
  }
  return static_cast<double>(best);
}

/// Central-difference check of `analytic` (dLoss/dvalues) against `loss`,
/// which must re-evaluate the scalar loss from the current contents of
/// `values`. Each probed element is restored after probing.
template <typename T, typename LossFn>
GradCheckResult grad_check(LossFn&& loss, std::span<T> values,
                           std::span<const T> analytic,
                           const GradCheckOptions& options = {}) {
  if (values.size() != analytic.size()) {
    throw std::invalid_argument("grad_check: value/gradient length mismatch");
  }
  GradCheckResult result;
  for (std::size_t i : sample_indices(values.size(), options)) {
    const double numeric = numeric_derivative(loss, values[i], options);
    const double err = relative_error(analytic[i], numeric, options.floor);
    if (err > result.max_relative_error || result.checked == 0) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.analytic_at_worst = analytic[i];
      result.numeric_at_worst = numeric;
    }
    ++result.checked;
  }
  return result;
}

}  // namespace cednn
