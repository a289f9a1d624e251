// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0
//
// File formats: PNG images, "index,x,y" landmark files, the CSV dataset
// manifest, JSON configuration and the binary checkpoint.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cednn/attention.hpp"
#include "cednn/dataset.hpp"
#include "cednn/model.hpp"
#include "cednn/train.hpp"

namespace cednn {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes through a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// Images -------------------------------------------------------------------

RgbImage read_png_rgb(const std::filesystem::path& path);
GrayImage read_png_gray(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& img);
void write_png(const std::filesystem::path& path, const GrayImage& img);
void write_png(const std::filesystem::path& path, const BinaryMap& map);

// Landmarks ----------------------------------------------------------------

LandmarkSet read_landmarks(const std::filesystem::path& path, LandmarkScheme scheme);
void write_landmarks(const std::filesystem::path& path, const LandmarkSet& set);

// Manifest -----------------------------------------------------------------

/// Header-bearing CSV:
///   subject_id,frame,neutral,landmarks5,landmarks5_neutral,landmarks_dense,fold,<AU...>
/// A "# labels=intensity" line before the header marks the AU columns as
/// 0..5 intensities, binarized on load; otherwise they must be 0 or 1.
/// Relative paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path,
                              bool check_paths = true);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Configuration ------------------------------------------------------------

struct AppConfig {
  ModelConfig model = ModelConfig::standard(Connection::res, 6);
  TrainConfig train;
  PipelineOptions attention;
  FoldScheme fold_scheme = FoldScheme::leave_groups;
  int fold_groups = 3;
};

AppConfig parse_config(const std::string& json_text);
AppConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const AppConfig& config);
std::string model_config_to_json(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& json_text);

// Checkpoints --------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  int epoch = 0;
  std::uint64_t seed = 0;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double learning_rate = 0.01;
};

struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  std::uint64_t offset = 0;  // bytes into the payload
  std::uint64_t count = 0;
};

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  ModelConfig config;
  std::vector<CheckpointEntry> inventory;
  CheckpointMeta meta;
  std::uint64_t payload_bytes = 0;
};

/// Layout: "CEDNNCKP", u32 version, u64 header length, JSON header, then
/// every inventory tensor as little-endian float32 in inventory order.
void save_checkpoint(const std::filesystem::path& path, ModelParams<float>& params,
                     const CheckpointMeta& meta);
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);
ModelParams<float> load_checkpoint(const std::filesystem::path& path,
                                   CheckpointMeta* meta = nullptr);

// Attention stacks on disk -------------------------------------------------

/// Five PNG maps (map_<threshold>.png) plus stack.json with the thresholds
/// and pyramid sizes.
void save_attention_stack(const std::filesystem::path& dir, const AttentionStack& stack);
AttentionStack load_attention_stack(const std::filesystem::path& dir);

// Samples ------------------------------------------------------------------

/// Loads images and landmarks for one record and runs the attention pipeline.
AttentionResult process_record(const DatasetManifest& manifest,
                               const ManifestRecord& record,
                               const PipelineOptions& options);

/// Network-ready samples at `input_size` for the given record indices.
std::vector<Sample> load_samples(const DatasetManifest& manifest,
                                 const std::vector<std::size_t>& indices,
                                 const PipelineOptions& options, int input_size);

}  // namespace cednn
