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

#include "commands.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "signrecon/errors.hpp"
#include "signrecon/evalkit.hpp"
#include "signrecon/experiment_config.hpp"
#include "signrecon/image_io.hpp"
#include "signrecon/pipeline.hpp"

namespace signrecon::cli {

namespace {

ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed = {}) {
  auto cfg = ExperimentConfig::load(path);
  if (seed) cfg.set_seed(*seed);
  cfg.validate();
  return cfg;
}

bool non_empty_dir(const std::filesystem::path& p) {
  return std::filesystem::is_directory(p) && !std::filesystem::is_empty(p);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Models compared in one table must see the same slices and masks.
void require_same_data(const ExperimentConfig& a, const ExperimentConfig& b) {
  auto strip = [](const ExperimentConfig& c) {
    return std::tuple(c.data.volumes, c.data.slices_per_volume, c.data.image_size, c.data.seed,
                      c.split, c.dataset_dir, c.mask.center_fraction, c.mask.std_fraction);
  };
  if (strip(a) != strip(b)) {
    throw ConfigError("configs compared together must share their data and mask sections");
  }
}

mri::Image sampled_pattern(const mri::SamplingMask& mask, int height) {
  mri::Image img(height, mask.width());
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < mask.width(); ++c) img.at(r, c) = mask.sampled(c) ? 1.0 : 0.0;
  return img;
}

}  // namespace

int cmd_gen_data(const GenDataArgs& a) {
  auto cfg = load_config(a.config);
  if (a.seed) cfg.data.seed = *a.seed;
  if (non_empty_dir(a.out) && !a.force) {
    std::cerr << "refusing to write into non-empty directory " << a.out
              << " (pass --force to overwrite)\n";
    return 2;
  }
  const auto manifest = data::generate_synthetic(cfg.data, cfg.schema());
  manifest.validate(cfg.schema());
  data::write_dataset(manifest, a.out, cfg.schema());

  std::map<std::string, int> contrast_counts;
  const auto& contrast = cfg.schema().categorical.front();
  for (const auto& v : manifest.volumes) {
    const int id = v.slices.front().side.categorical_ids.front();
    contrast_counts[id < 0 ? "(masked)" : contrast.vocabulary[id]] += 1;
  }
  std::cout << "wrote " << manifest.volumes.size() << " volumes, " << manifest.slice_count()
            << " slices to " << a.out.string() << "\n";
  for (const auto& [name, n] : contrast_counts) std::cout << "  " << name << ": " << n << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  const auto cfg = load_config(a.config, a.seed);
  if (non_empty_dir(a.out) && !a.force && !a.resume) {
    std::cerr << "refusing to overwrite run directory " << a.out
              << " (pass --force, or --resume to continue)\n";
    return 2;
  }
  const auto data = load_experiment_data(cfg, a.data);
  std::cout << "config hash " << hash_hex(cfg.hash()) << "; " << data.train.size() << " train, "
            << data.val.size() << " val, " << data.test.size() << " test slices\n";
  TrainOptions opts;
  opts.pretrain_only = a.stage == "pretrain-only";
  opts.resume = a.resume;
  opts.out_dir = a.out;
  opts.on_epoch = [](const train::MetricsRow& r) {
    if (r.split != "val") return;
    std::cout << std::fixed << std::setprecision(4) << train::to_string(r.stage) << " epoch "
              << r.epoch << "  val loss " << r.loss << "  PSNR " << r.psnr << "  SSIM " << r.ssim
              << std::endl;
  };
  try {
    const auto outcome = run_training(cfg, data, opts);
    std::cout << outcome.model->name() << ": best pretrain val PSNR "
              << outcome.pretrain_val_psnr;
    if (outcome.finetune_val_psnr) std::cout << ", fine-tune " << *outcome.finetune_val_psnr;
    std::cout << "\nwrote " << (a.out / "model.ckpt").string() << "\n";
  } catch (const TrainingAbortedError& e) {
    std::filesystem::create_directories(a.out);
    write_text(a.out / "abort.txt", std::string(e.what()) + "\n");
    throw;
  }
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  if (a.configs.size() != a.checkpoints.size()) {
    throw ConfigError("eval: pass one --checkpoint per --config");
  }
  std::vector<ExperimentConfig> cfgs;
  for (const auto& p : a.configs) {
    cfgs.push_back(load_config(p));
    require_same_data(cfgs.front(), cfgs.back());
  }
  std::vector<std::unique_ptr<nets::ReconModel>> models;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    models.push_back(load_model(cfgs[i], a.checkpoints[i]));
  }
  const auto& base = cfgs.front();
  const auto data = load_experiment_data(base, a.data);

  eval::ResultTable table;
  table.accelerations = base.eval.accelerations;
  auto add_row = [&](const std::string& name, const eval::Reconstructor& recon,
                     const std::string& dump_tag) {
    eval::ResultTable::Row row{name, {}, {}};
    for (double acc : table.accelerations) {
      const auto report = evaluate_on_test(recon, base, data, acc);
      row.psnr.push_back(report.mean_psnr);
      row.ssim.push_back(report.mean_ssim);
      if (a.out) {
        std::ostringstream fn;
        fn << "per_image_" << dump_tag << "_" << acc << "x.csv";
        write_text(*a.out / fn.str(), report.per_image_csv());
      }
    }
    table.rows.push_back(std::move(row));
  };
  if (a.out) std::filesystem::create_directories(*a.out);
  add_row("Zero-filled", eval::zero_filled_reconstructor(), "zero_filled");
  if (a.oracle) add_row("Ground truth", eval::oracle_reconstructor(), "ground_truth");
  for (std::size_t i = 0; i < models.size(); ++i) {
    add_row(models[i]->name(), eval::model_reconstructor(*models[i]), "model" + std::to_string(i));
  }
  std::cout << table.to_text();
  if (a.out) {
    write_text(*a.out / "results.txt", table.to_text());
    write_text(*a.out / "results.csv", table.to_csv());
  }
  return 0;
}

int cmd_ablate(const AblateArgs& a) {
  const auto cfg = load_config(a.config);
  const auto model = load_model(cfg, a.checkpoint);
  const auto& schema = cfg.schema();
  eval::AblationSpec spec;
  if (!a.conditions.empty()) {
    for (const auto& c : a.conditions) {
      spec.conditions.push_back(eval::AblationSpec::parse_condition(c, schema));
    }
  } else if (a.suite == "corruption") {
    spec = eval::AblationSpec::true_random_wrong(schema);
  } else if (a.suite == "branches") {
    spec = eval::AblationSpec::single_branch_masks(schema);
    for (auto& c : eval::AblationSpec::branch_subsets(schema).conditions) {
      if (!c.mode) continue;
      c.label = "keep:" + c.label;
      spec.conditions.push_back(std::move(c));
    }
  } else {
    for (const auto& c : cfg.eval.ablation) {
      spec.conditions.push_back(eval::AblationSpec::parse_condition(c, schema));
    }
  }
  spec.validate(schema);
  const auto data = load_experiment_data(cfg, a.data);
  const auto results = eval::run_ablation(*model, data.test, spec, cfg.mask, cfg.test_mask_seed(),
                                          a.seed.value_or(cfg.seed), eval::default_workers());
  std::cout << model->name() << " at " << cfg.mask.acceleration << "x\n"
            << eval::ablation_table_text(results);
  if (a.out) {
    std::filesystem::create_directories(*a.out);
    write_text(*a.out / "ablation.txt", eval::ablation_table_text(results));
    write_text(*a.out / "ablation.csv", eval::ablation_table_csv(results));
  }
  return 0;
}

int cmd_mask_preview(const MaskPreviewArgs& a) {
  auto cfg = load_config(a.config);
  if (a.acceleration) cfg.mask.acceleration = *a.acceleration;
  const int size = cfg.data.image_size;
  const auto seed = a.seed.value_or(cfg.seed);
  const auto mask = mri::gen_gaussian_mask(size, cfg.mask.acceleration, cfg.mask.center_fraction,
                                           seed, cfg.mask.std_fraction);
  std::filesystem::create_directories(a.out);
  mri::save_mask(mask, a.out / "mask.bin");
  io::write_pgm(sampled_pattern(mask, size), a.out / "mask.pgm");

  auto one = cfg.data;
  one.volumes = 1;
  one.slices_per_volume = 1;
  const auto manifest = data::generate_synthetic(one, cfg.schema());
  const auto slices = data::load_slices(manifest, size);
  const auto& truth = slices.front().image;
  const auto zf = mri::zero_filled_recon(mri::undersample(mri::fft2c(truth), mask));
  io::write_pgm(io::hstack({truth, zf, sampled_pattern(mask, size)}), a.out / "preview.pgm");

  std::cout << "mask: " << mask.count() << " of " << mask.width() << " columns sampled ("
            << mri::center_band_width(size, cfg.mask.center_fraction) << " central), "
            << "acceleration " << cfg.mask.acceleration << ", seed " << seed << "\n"
            << "zero-filled PSNR on the example slice: " << std::fixed << std::setprecision(2)
            << eval::psnr(truth, zf) << " dB\n";
  return 0;
}

int cmd_recon_dump(const ReconDumpArgs& a) {
  const auto cfg = load_config(a.config);
  const auto base_cfg = load_config(a.baseline_config);
  require_same_data(cfg, base_cfg);
  const auto sign_model = load_model(cfg, a.checkpoint);
  const auto base_model = load_model(base_cfg, a.baseline_checkpoint);
  const int n = a.count.value_or(cfg.eval.recon_dump);
  if (n < 0) throw ConfigError("recon-dump: count must be non-negative");
  const auto data = load_experiment_data(cfg, a.data);
  if (static_cast<std::size_t>(n) > data.test.size()) {
    throw ConfigError("recon-dump: only " + std::to_string(data.test.size()) + " test slices");
  }
  const std::span<const data::Slice> picked(data.test.data(), static_cast<std::size_t>(n));
  const auto batches = data::build_batches(picked, cfg.mask, std::max(1, n), cfg.test_mask_seed());
  std::filesystem::create_directories(a.out);
  int written = 0;
  for (const auto& batch : batches) {
    const auto truth = eval::to_images(batch.target);
    const auto zf = eval::to_images(batch.zero_filled);
    const auto base = eval::model_reconstructor(*base_model)(batch);
    const auto sign = eval::model_reconstructor(*sign_model)(batch);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      std::ostringstream fn;
      fn << "recon_" << std::setw(3) << std::setfill('0') << written++ << ".pgm";
      io::write_pgm(io::hstack({truth[i], zf[i], base[i], sign[i]}), a.out / fn.str());
      std::cout << fn.str() << ": slice " << batch.slice_ids[i] << "  zero-filled "
                << std::fixed << std::setprecision(2) << eval::psnr(truth[i], zf[i]) << " dB, "
                << base_model->name() << " " << eval::psnr(truth[i], base[i]) << " dB, "
                << sign_model->name() << " " << eval::psnr(truth[i], sign[i]) << " dB\n";
    }
  }
  return 0;
}

int cmd_summary(const SummaryArgs& a) {
  const auto cfg = load_config(a.config, a.seed);
  const auto model = nets::make_model(cfg.model, cfg.seed);
  std::cout << "config hash " << hash_hex(cfg.hash()) << "\n" << model->summary();
  return 0;
}

}  // namespace signrecon::cli
