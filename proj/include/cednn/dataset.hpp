// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cednn {

using LabelVector = std::vector<std::uint8_t>;

/// Frames at intensity 2 or above count as positive.
int binarize_intensity(int intensity);

struct ManifestRecord {
  std::string subject_id;
  // Paths exactly as written in the manifest; resolve() makes them absolute.
  std::string frame_path;
  std::string neutral_frame_path;
  std::string landmarks5_path;
  std::string landmarks5_neutral_path;
  std::string landmarks_dense_path;
  std::optional<int> fold_id;
  LabelVector labels;
};

struct DatasetManifest {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::vector<std::string> au_names;
  std::vector<ManifestRecord> records;

  std::size_t arity() const { return au_names.size(); }
  std::filesystem::path resolve(const std::string& p) const;
  std::vector<std::string> subjects() const;  // sorted, unique
};

}  // namespace cednn
