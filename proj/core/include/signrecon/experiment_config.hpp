// Copyright 2026 The signrecon Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "signrecon/backbones.hpp"
#include "signrecon/datasets.hpp"
#include "signrecon/side_encoding.hpp"
#include "signrecon/training.hpp"

namespace signrecon {

struct EvalConfig {
  std::vector<double> accelerations{4.0};
  int batch_size = 8;
  std::vector<std::string> ablation{"true"};
  int recon_dump = 2;
};

/// One JSON file drives data generation, masks, model, training and evaluation.
struct ExperimentConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;

  data::SyntheticConfig data;  // data.seed is independent of the training seed
  std::optional<std::filesystem::path> dataset_dir;  // external manifest directory
  std::array<double, 3> split{0.8, 0.1, 0.1};
  data::MaskParams mask;
  nets::ModelConfig model;
  train::TrainConfig train;
  EvalConfig eval;

  /// "desk": 64x64, small D5C5, 30 + 10 epochs. "full": 320x320, 32 channels,
  /// five cascades of five convolutions, 100 + 20 epochs.
  static ExperimentConfig preset_defaults(std::string_view preset);

  /// Unknown keys and invalid values raise ConfigError.
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);

  std::string to_json_text() const;

  void set_seed(std::uint64_t s);
  void validate() const;

  /// FNV-1a of the canonical JSON without the eval section, so evaluation
  /// settings can change without invalidating checkpoints.
  std::uint64_t hash() const;

  /// Fixed across models and training seeds so comparisons share masks.
  std::uint64_t val_mask_seed() const;
  std::uint64_t test_mask_seed() const;

  const side::SideInfoSchema& schema() const { return model.schema; }
};

std::string hash_hex(std::uint64_t h);

}  // namespace signrecon
