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

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "signrecon/backbones.hpp"
#include "signrecon/checkpoint.hpp"
#include "signrecon/datasets.hpp"
#include "signrecon/evalkit.hpp"
#include "signrecon/experiment_config.hpp"
#include "signrecon/training.hpp"

namespace signrecon {

struct ExperimentData {
  std::vector<data::Slice> train;
  std::vector<data::Slice> val;
  std::vector<data::Slice> test;
};

/// Reads the manifest in `dir` (or the config's dataset_dir), or renders the
/// synthetic dataset in memory when neither is given, then splits by volume.
ExperimentData load_experiment_data(const ExperimentConfig& cfg,
                                    const std::optional<std::filesystem::path>& dir = {});

struct TrainOptions {
  bool pretrain_only = false;
  bool resume = false;  // continue from <out>/<stage>_last.ckpt when present
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const train::MetricsRow&)> on_epoch;
};

struct TrainOutcome {
  std::unique_ptr<nets::ReconModel> model;  // holds the final parameters
  train::MetricsLog log;
  train::Checkpoint final_checkpoint;
  double pretrain_val_psnr = 0.0;  // best validation PSNR of each stage
  std::optional<double> finetune_val_psnr;
  std::uint64_t conv_hash_pretrain = 0;
  std::optional<std::uint64_t> conv_hash_finetune;
};

/// Pretrains, then fine-tunes the SIGN parameters when the model has them.
/// With an output directory, writes per-stage best/last checkpoints,
/// model.ckpt, metrics.csv and the resolved config.
TrainOutcome run_training(const ExperimentConfig& cfg, const ExperimentData& data,
                          const TrainOptions& opts = {});

/// Builds the configured model and loads a checkpoint written for `cfg`.
std::unique_ptr<nets::ReconModel> load_model(const ExperimentConfig& cfg,
                                             const std::filesystem::path& checkpoint);

/// Test-split evaluation at the given acceleration with the fixed test masks.
eval::MetricReport evaluate_on_test(const eval::Reconstructor& recon, const ExperimentConfig& cfg,
                                    const ExperimentData& data, double acceleration);

}  // namespace signrecon
