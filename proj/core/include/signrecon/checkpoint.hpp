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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "signrecon/backbones.hpp"
#include "signrecon/side_encoding.hpp"

namespace signrecon::train {

enum class Stage { kPretrain, kFinetune };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

struct MetricsRow {
  Stage stage = Stage::kPretrain;
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double psnr = 0.0;  // NaN when not measured
  double ssim = 0.0;
};

class MetricsLog {
 public:
  void add(MetricsRow row) { rows_.push_back(std::move(row)); }
  const std::vector<MetricsRow>& rows() const { return rows_; }
  std::vector<MetricsRow>& rows() { return rows_; }

  /// stage,epoch,split,loss,psnr,ssim
  std::string to_csv() const;

 private:
  std::vector<MetricsRow> rows_;
};

/// Everything needed to restore a model and continue training.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t config_hash = 0;
  std::string model_name;
  Stage stage = Stage::kPretrain;
  int epoch = 0;  // completed epochs within `stage`
  std::vector<std::string> param_names;
  std::vector<ag::Shape> param_shapes;
  std::vector<std::vector<double>> params;
  side::ContinuousStats stats;

  // Training continuation state; empty in exported best checkpoints.
  AdamState adam;
  std::string rng_state;
  double best_val_psnr = -1.0;
  int best_epoch = 0;
  std::vector<std::vector<double>> best_params;
  MetricsLog log;

  /// Captures parameters and continuous statistics.
  static Checkpoint capture(const nets::ReconModel& model, std::uint64_t config_hash);
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws CorruptFileError on truncation or checksum failure and VersionError
/// on a format version or config hash mismatch. `expected_hash` of nullopt
/// skips the hash comparison.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_hash);

/// Copies parameters and statistics into `model`; VersionError when the
/// parameter layout differs.
void apply_checkpoint(const Checkpoint& ckpt, nets::ReconModel& model);

}  // namespace signrecon::train
