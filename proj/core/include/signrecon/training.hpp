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
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "signrecon/backbones.hpp"
#include "signrecon/checkpoint.hpp"
#include "signrecon/datasets.hpp"

namespace signrecon::train {

struct TrainConfig {
  int pretrain_epochs = 30;
  int finetune_epochs = 10;
  double pretrain_lr = 1e-3;
  double finetune_lr = 1e-4;
  double weight_decay = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 4;
  std::uint64_t seed = 0;
  std::optional<double> grad_clip;  // global L2 norm

  int epochs(Stage s) const { return s == Stage::kPretrain ? pretrain_epochs : finetune_epochs; }
  double lr(Stage s) const { return s == Stage::kPretrain ? pretrain_lr : finetune_lr; }
  /// Zero learning rates are allowed; negative values and empty stages are not.
  void validate() const;
};

/// Adam with decoupled weight decay, applied only to parameters flagged for decay.
class AdamW {
 public:
  AdamW(const TrainConfig& cfg, double lr) : cfg_(cfg), lr_(lr) {}

  /// Updates parameters whose `trainable` flag is set; others are untouched.
  void step(ParamSet& params, const std::vector<std::uint8_t>& trainable);

  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  TrainConfig cfg_;
  double lr_;
  AdamState state_;
};

/// 1 for every parameter updated in `stage`: everything when pretraining,
/// every non-convolutional group when fine-tuning.
std::vector<std::uint8_t> trainable_mask(const ParamSet& params, Stage stage);

/// Global L2 norm of the gradients of the trainable parameters.
double grad_norm(const ParamSet& params, const std::vector<std::uint8_t>& trainable);

struct TrainData {
  std::span<const data::Slice> train;
  std::span<const data::Slice> val;
  data::MaskParams mask;
  std::uint64_t val_mask_seed = 0;
};

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_epoch;
  std::function<void(int step, double loss)> on_step;
  /// Stop (returning the state so far) after this many epochs of the stage.
  std::optional<int> stop_after;
};

struct StageResult {
  Checkpoint best;  // parameters with the best validation PSNR in this stage
  Checkpoint last;  // full continuation state
};

/// Joint optimisation of every parameter group with an MAE image loss.
/// Leaves `model` holding the best-validation parameters.
StageResult pretrain(nets::ReconModel& model, const TrainData& data, const TrainConfig& cfg,
                     std::uint64_t config_hash, const Checkpoint* resume = nullptr,
                     const TrainHooks& hooks = {});

/// Convolutions frozen; SIGN heads, embeddings and the continuous map trained.
/// ConfigError when the model has no SIGN modules.
StageResult finetune_sign(nets::ReconModel& model, const TrainData& data, const TrainConfig& cfg,
                          std::uint64_t config_hash, const Checkpoint* resume = nullptr,
                          const TrainHooks& hooks = {});

}  // namespace signrecon::train
