// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Procedurally rendered faces with brightness-patch pseudo-AUs, used for
// desk-scale training and pipeline tests.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cednn/attention.hpp"
#include "cednn/dataset.hpp"

namespace cednn {

struct SyntheticFrame {
  std::string subject;
  RgbImage action;
  RgbImage neutral;
  LandmarkSet five_action;
  LandmarkSet five_neutral;
  LandmarkSet dense_action;  // in action-frame coordinates
  LabelVector labels;
};

struct SyntheticOptions {
  int subjects = 8;
  int frames_per_subject = 8;
  int num_aus = 4;           // at most 4 patch locations
  int size = 224;
  double patch_gain = 60.0;  // added to every channel inside an active patch
  bool jitter = true;        // independent small similarity per frame
  std::uint64_t seed = 0;
};

/// The 68 canonical landmarks in the 224 template frame.
std::vector<Point> canonical_dense_landmarks();
/// Eye centres, nose tip and mouth corners of the canonical face.
std::vector<Point> canonical_five_landmarks();

std::vector<SyntheticFrame> make_synthetic_frames(const SyntheticOptions& options);

/// Renders a single pair whose action and neutral frames are identical.
SyntheticFrame make_identical_pair(std::uint64_t seed, int num_aus = 4);

/// Writes images and landmark files under `dir` plus `dir/manifest.csv`.
/// Subjects are assigned to three folds round-robin. Returns the manifest path.
std::filesystem::path write_synthetic_dataset(const std::vector<SyntheticFrame>& frames,
                                              const std::filesystem::path& dir);

}  // namespace cednn
