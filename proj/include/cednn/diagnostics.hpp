// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Self-checks run by `cednn gradcheck`: grouped convolution against a dense
// masked reference, finite-difference checks of every differentiable op, and
// a whole-model check on a reduced configuration.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cednn/model.hpp"

namespace cednn {

inline constexpr double kWideTolerance = 1e-5;
inline constexpr double kStandardTolerance = 1e-3;
/// Relative-error denominator floor for single-precision gradients; below
/// it, float accumulation error rather than the derivative dominates.
inline constexpr double kFloatGradientFloor = 1e-4;

struct DiagnosticLine {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;  // worst element, when applicable
};

struct DiagnosticReport {
  std::vector<DiagnosticLine> lines;

  bool passed() const;
  std::string to_text() const;
  void append(const DiagnosticReport& other);
};

/// Two blocks at 28x28 with narrow top layers; every block takes attention.
ModelConfig reduced_model_config(Connection connection = Connection::res,
                                 SeMode se = SeMode::none);

/// Dense direct convolution with zeros outside the group-diagonal blocks of
/// the weight matrix; the reference for conv2d_grouped.
BasicTensor<double> dense_masked_conv(const BasicTensor<double>& input,
                                      const ConvParams<double>& grouped);

/// `cases` random geometries in double precision; measured = max |diff|.
DiagnosticReport grouped_conv_oracle(int cases = 100, std::uint64_t seed = 0);

/// Every differentiable op in double (tolerance 1e-5) and float (1e-3).
DiagnosticReport op_gradient_suite(std::uint64_t seed = 0);

/// Whole-model BCE gradient of every trainable tensor on the reduced
/// configurations, in double and float, tolerance 1e-3.
DiagnosticReport model_gradient_check(std::uint64_t seed = 0);

DiagnosticReport run_all_diagnostics(std::uint64_t seed = 0);

}  // namespace cednn
