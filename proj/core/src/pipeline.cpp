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

#include "signrecon/pipeline.hpp"

#include <fstream>

#include "signrecon/errors.hpp"
#include "signrecon/random.hpp"

namespace signrecon {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::filesystem::path stage_file(const std::filesystem::path& dir, train::Stage s,
                                 const char* kind) {
  return dir / (std::string(train::to_string(s)) + "_" + kind + ".ckpt");
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& cfg,
                                    const std::optional<std::filesystem::path>& dir) {
  const auto& schema = cfg.schema();
  data::DatasetManifest manifest;
  const auto source = dir ? dir : cfg.dataset_dir;
  if (source) {
    manifest = data::load_manifest(*source / "manifest.json", schema);
  } else {
    manifest = data::generate_synthetic(cfg.data, schema);
  }
  const auto parts = data::split_by_volume(manifest, cfg.split, cfg.data.seed);
  ExperimentData out;
  out.train = data::load_slices(parts[0], cfg.data.image_size);
  out.val = data::load_slices(parts[1], cfg.data.image_size);
  out.test = data::load_slices(parts[2], cfg.data.image_size);
  return out;
}

TrainOutcome run_training(const ExperimentConfig& cfg, const ExperimentData& data,
                          const TrainOptions& opts) {
  cfg.validate();
  const auto hash = cfg.hash();
  TrainOutcome outcome;
  outcome.model = nets::make_model(cfg.model, cfg.seed);
  auto& model = *outcome.model;

  train::TrainData td{data.train, data.val, cfg.mask, cfg.val_mask_seed()};
  train::TrainHooks hooks;
  hooks.on_epoch = opts.on_epoch;
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    write_text(*opts.out_dir / "config.json", cfg.to_json_text() + "\n");
  }

  auto resume_from = [&](train::Stage s) -> std::optional<train::Checkpoint> {
    if (!opts.resume || !opts.out_dir) return std::nullopt;
    const auto path = stage_file(*opts.out_dir, s, "last");
    if (!std::filesystem::exists(path)) return std::nullopt;
    return train::load_checkpoint(path, hash);
  };
  auto save_stage = [&](train::Stage s, const train::StageResult& r) {
    if (!opts.out_dir) return;
    train::save_checkpoint(r.best, stage_file(*opts.out_dir, s, "best"));
    train::save_checkpoint(r.last, stage_file(*opts.out_dir, s, "last"));
  };

  const auto pre_resume = resume_from(train::Stage::kPretrain);
  const auto pre = train::pretrain(model, td, cfg.train, hash,
                                   pre_resume ? &*pre_resume : nullptr, hooks);
  save_stage(train::Stage::kPretrain, pre);
  outcome.log = pre.last.log;
  outcome.pretrain_val_psnr = pre.best.best_val_psnr;
  outcome.conv_hash_pretrain = model.params().hash(true);
  outcome.final_checkpoint = pre.best;

  if (model.uses_sign() && !opts.pretrain_only) {
    const auto ft_resume = resume_from(train::Stage::kFinetune);
    const auto ft = train::finetune_sign(model, td, cfg.train, hash,
                                         ft_resume ? &*ft_resume : nullptr, hooks);
    save_stage(train::Stage::kFinetune, ft);
    for (const auto& row : ft.last.log.rows()) outcome.log.add(row);
    outcome.finetune_val_psnr = ft.best.best_val_psnr;
    outcome.conv_hash_finetune = model.params().hash(true);
    outcome.final_checkpoint = ft.best;
  }

  if (opts.out_dir) {
    const auto final_path = *opts.out_dir / "model.ckpt";
    train::save_checkpoint(outcome.final_checkpoint, final_path);
    write_text(*opts.out_dir / "metrics.csv", outcome.log.to_csv());
    // A checkpoint that cannot be read back is a failed run.
    (void)train::load_checkpoint(final_path, hash);
  }
  return outcome;
}

std::unique_ptr<nets::ReconModel> load_model(const ExperimentConfig& cfg,
                                             const std::filesystem::path& checkpoint) {
  auto model = nets::make_model(cfg.model, cfg.seed);
  train::apply_checkpoint(train::load_checkpoint(checkpoint, cfg.hash()), *model);
  return model;
}

eval::MetricReport evaluate_on_test(const eval::Reconstructor& recon, const ExperimentConfig& cfg,
                                    const ExperimentData& data, double acceleration) {
  auto mask = cfg.mask;
  mask.acceleration = acceleration;
  return eval::evaluate(recon, data.test, mask, cfg.test_mask_seed(), cfg.eval.batch_size,
                        eval::default_workers());
}

}  // namespace signrecon
