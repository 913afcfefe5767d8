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

#include "signrecon/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "signrecon/errors.hpp"
#include "signrecon/evalkit.hpp"
#include "signrecon/random.hpp"

namespace signrecon::train {

namespace {

// Frozen parameters stop requesting gradients for the duration of a stage, so
// the backward pass skips their weight gradients entirely.
class FreezeGuard {
 public:
  FreezeGuard(ParamSet& params, const std::vector<std::uint8_t>& trainable) : params_(params) {
    for (std::size_t i = 0; i < params.items().size(); ++i) {
      auto* node = params.items()[i].var.node();
      saved_.push_back(node->requires_grad);
      node->requires_grad = trainable[i] != 0;
    }
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < saved_.size(); ++i) {
      params_.items()[i].var.node()->requires_grad = saved_[i];
    }
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamSet& params_;
  std::vector<bool> saved_;
};

std::string engine_state(const std::mt19937_64& engine) {
  std::ostringstream os;
  os << engine;
  return os.str();
}

void set_engine_state(std::mt19937_64& engine, const std::string& state) {
  std::istringstream is(state);
  is >> engine;
  if (!is) throw CorruptFileError("checkpoint: unreadable RNG state");
}

std::string nan_diagnostic(const nets::ReconModel& model, Stage stage, int epoch, int step,
                           const nets::ReconBatch& batch) {
  std::ostringstream os;
  os << "non-finite loss in " << to_string(stage) << " epoch " << epoch << " step " << step
     << " (model " << model.name() << ", slices";
  for (int id : batch.slice_ids) os << " " << id;
  os << ")";
  for (const auto& p : model.params().items()) {
    double norm = 0.0;
    for (double v : p.var.value()) norm += v * v;
    if (!std::isfinite(norm)) {
      os << "; first non-finite parameter: " << p.name;
      break;
    }
  }
  return os.str();
}

StageResult run_stage(nets::ReconModel& model, const TrainData& data, const TrainConfig& cfg,
                      Stage stage, std::uint64_t config_hash, const Checkpoint* resume,
                      const TrainHooks& hooks) {
  cfg.validate();
  if (data.train.empty()) throw ConfigError("training split is empty");
  if (data.val.empty()) throw ConfigError("validation split is empty");

  auto& params = model.params();
  const auto trainable = trainable_mask(params, stage);
  AdamW opt(cfg, cfg.lr(stage));
  Rng rng(derive_seed(cfg.seed, "batching", {static_cast<std::uint64_t>(stage)}));
  MetricsLog log;
  double best_psnr = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  std::vector<std::vector<double>> best_params;
  int start = 0;

  if (resume) {
    if (resume->stage != stage) {
      throw ConfigError("cannot resume " + std::string(to_string(stage)) + " from a " +
                        std::string(to_string(resume->stage)) + " checkpoint");
    }
    if (resume->config_hash != config_hash) {
      throw VersionError("resume checkpoint was written for a different config");
    }
    apply_checkpoint(*resume, model);
    opt.state() = resume->adam;
    set_engine_state(rng.engine(), resume->rng_state);
    log = resume->log;
    best_psnr = resume->best_val_psnr;
    best_epoch = resume->best_epoch;
    best_params = resume->best_params;
    start = resume->epoch;
  } else if (stage == Stage::kPretrain) {
    std::vector<side::SideInfoRecord> records;
    for (const auto& s : data.train) records.push_back(s.side);
    model.set_continuous_stats(
        side::ContinuousStats::from_records(records, model.schema().n_continuous()));
  }

  FreezeGuard freeze(params, trainable);
  const int stage_index = static_cast<int>(stage);
  const int last_epoch = hooks.stop_after ? std::min(*hooks.stop_after, cfg.epochs(stage))
                                          : cfg.epochs(stage);
  std::vector<std::size_t> order(data.train.size());
  int epoch = start;
  for (epoch = start + 1; epoch <= last_epoch; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    const auto mask_seed = derive_seed(cfg.seed, "train-masks",
                                       {static_cast<std::uint64_t>(stage_index),
                                        static_cast<std::uint64_t>(epoch)});
    const auto batches =
        data::build_batches(data.train, order, data.mask, cfg.batch_size, mask_seed);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    int step = 0;
    for (const auto& batch : batches) {
      params.zero_grad();
      const auto loss = ag::mae(model.forward(batch), batch.target);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingAbortedError(nan_diagnostic(model, stage, epoch, step, batch));
      }
      ag::backward(loss);
      if (cfg.grad_clip) {
        const double norm = grad_norm(params, trainable);
        if (norm > *cfg.grad_clip) {
          const double factor = *cfg.grad_clip / norm;
          for (std::size_t i = 0; i < params.items().size(); ++i) {
            if (!trainable[i]) continue;
            for (auto& g : params.items()[i].var.node()->grad) g *= factor;
          }
        }
      }
      opt.step(params, trainable);
      loss_sum += value * batch.size();
      seen += static_cast<std::size_t>(batch.size());
      if (hooks.on_step) hooks.on_step(step, value);
      ++step;
    }
    params.zero_grad();

    const auto report = eval::evaluate(eval::model_reconstructor(model), data.val, data.mask,
                                       data.val_mask_seed, 8, eval::default_workers());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    MetricsRow train_row{stage, epoch, "train", loss_sum / static_cast<double>(seen), nan, nan};
    MetricsRow val_row{stage, epoch, "val", report.mean_mae, report.mean_psnr, report.mean_ssim};
    log.add(train_row);
    log.add(val_row);
    if (report.mean_psnr > best_psnr) {
      best_psnr = report.mean_psnr;
      best_epoch = epoch;
      best_params = params.snapshot();
    }
    if (hooks.on_epoch) {
      hooks.on_epoch(train_row);
      hooks.on_epoch(val_row);
    }
  }

  StageResult result;
  result.last = Checkpoint::capture(model, config_hash);
  result.last.stage = stage;
  result.last.epoch = std::max(start, epoch - 1);
  result.last.adam = opt.state();
  result.last.rng_state = engine_state(rng.engine());
  result.last.best_val_psnr = best_psnr;
  result.last.best_epoch = best_epoch;
  result.last.best_params = best_params;
  result.last.log = log;

  if (!best_params.empty()) params.restore(best_params);
  result.best = Checkpoint::capture(model, config_hash);
  result.best.stage = stage;
  result.best.epoch = best_epoch;
  result.best.best_val_psnr = best_psnr;
  result.best.best_epoch = best_epoch;
  result.best.log = log;
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (pretrain_epochs < 1 || finetune_epochs < 1) throw ConfigError("epochs must be positive");
  if (!(pretrain_lr >= 0.0) || !(finetune_lr >= 0.0)) {
    throw ConfigError("learning rates must be non-negative");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("gradient clip must be positive");
}

void AdamW::step(ParamSet& params, const std::vector<std::uint8_t>& trainable) {
  auto& items = params.items();
  if (state_.m.empty()) {
    for (const auto& p : items) {
      state_.m.emplace_back(p.var.numel(), 0.0);
      state_.v.emplace_back(p.var.numel(), 0.0);
    }
  }
  if (state_.m.size() != items.size()) throw InvalidInputError("AdamW: parameter set changed");
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!trainable[i]) continue;
    auto& p = items[i];
    auto& w = p.var.mutable_value();
    const auto& g = p.var.grad();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    const double decay = p.weight_decay ? 1.0 - lr_ * cfg_.weight_decay : 1.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.adam_eps);
      w[k] = w[k] * decay - lr_ * update;
    }
  }
}

std::vector<std::uint8_t> trainable_mask(const ParamSet& params, Stage stage) {
  std::vector<std::uint8_t> mask;
  for (const auto& p : params.items()) {
    mask.push_back(stage == Stage::kPretrain || !is_conv_group(p.group) ? 1 : 0);
  }
  return mask;
}

double grad_norm(const ParamSet& params, const std::vector<std::uint8_t>& trainable) {
  double s = 0.0;
  for (std::size_t i = 0; i < params.items().size(); ++i) {
    if (!trainable[i]) continue;
    for (double g : params.items()[i].var.grad()) s += g * g;
  }
  return std::sqrt(s);
}

StageResult pretrain(nets::ReconModel& model, const TrainData& data, const TrainConfig& cfg,
                     std::uint64_t config_hash, const Checkpoint* resume,
                     const TrainHooks& hooks) {
  return run_stage(model, data, cfg, Stage::kPretrain, config_hash, resume, hooks);
}

StageResult finetune_sign(nets::ReconModel& model, const TrainData& data, const TrainConfig& cfg,
                          std::uint64_t config_hash, const Checkpoint* resume,
                          const TrainHooks& hooks) {
  if (!model.uses_sign()) {
    throw ConfigError("finetune_sign: model " + model.name() + " has no SIGN modules");
  }
  return run_stage(model, data, cfg, Stage::kFinetune, config_hash, resume, hooks);
}

}  // namespace signrecon::train
