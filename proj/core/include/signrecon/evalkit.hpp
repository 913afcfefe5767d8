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
#include <string>
#include <vector>

#include "signrecon/backbones.hpp"
#include "signrecon/datasets.hpp"
#include "signrecon/mri_forward.hpp"
#include "signrecon/side_encoding.hpp"

namespace signrecon::eval {

/// Identical images have infinite PSNR; tables and means report this value instead.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(range^2 / MSE); +infinity for identical images.
double psnr(const mri::Image& ref, const mri::Image& test, double data_range = 1.0);
double capped_psnr(double value);

/// Mean local SSIM over the valid region of an 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03.
double ssim(const mri::Image& ref, const mri::Image& test, double data_range = 1.0);

double mean_absolute_error(std::span<const double> pred, std::span<const double> target);

/// Maps a batch to reconstructed images, one per sample.
using Reconstructor = std::function<std::vector<mri::Image>(const nets::ReconBatch&)>;

Reconstructor model_reconstructor(const nets::ReconModel& model);
Reconstructor zero_filled_reconstructor();
/// Returns the ground truth; used to sanity-check the metric plumbing.
Reconstructor oracle_reconstructor();

/// Splits a [B, 1, H, W] tensor into images.
std::vector<mri::Image> to_images(const ag::Var& batch_images);

struct ImageMetrics {
  int slice_id = 0;
  double psnr = 0.0;  // uncapped
  double ssim = 0.0;
  double mae = 0.0;
};

struct MetricReport {
  std::vector<ImageMetrics> images;
  double mean_psnr = 0.0;  // mean of capped per-image PSNR
  double mean_ssim = 0.0;
  double mean_mae = 0.0;

  /// slice_id,psnr,ssim,mae per image.
  std::string per_image_csv() const;
};

/// Aggregates in slice order, so the result does not depend on `workers`.
MetricReport summarise(std::vector<ImageMetrics> images);

/// Reconstructs every slice under fixed masks (seeded by `mask_seed`) and
/// averages the metrics. `workers` batches are evaluated concurrently.
MetricReport evaluate(const Reconstructor& recon, std::span<const data::Slice> test,
                      const data::MaskParams& mask, std::uint64_t mask_seed, int batch_size = 8,
                      int workers = 1);

/// SIGNRECON_WORKERS, default 1.
int default_workers();

struct AblationCondition {
  std::string label;
  std::optional<side::CorruptionMode> mode;  // nullopt: true side information
  std::vector<std::string> fields;
};

struct AblationSpec {
  std::vector<AblationCondition> conditions;

  void validate(const side::SideInfoSchema& schema) const;

  /// true / random / wrong over all categorical fields.
  static AblationSpec true_random_wrong(const side::SideInfoSchema& schema);
  /// "true", then keep one or two categorical branches and mask the other categorical ones.
  static AblationSpec branch_subsets(const side::SideInfoSchema& schema);
  /// Mask each branch (each categorical field, then all continuous fields) alone.
  static AblationSpec single_branch_masks(const side::SideInfoSchema& schema);
  /// Parses "true", "random:contrast+view", "mask:source", "keep:contrast", ...
  static AblationCondition parse_condition(std::string_view text,
                                           const side::SideInfoSchema& schema);
};

struct AblationResult {
  AblationCondition condition;
  MetricReport report;
};

/// Re-evaluates a SIGN model with corrupted side information. Corruption of
/// slice s uses seed derive_seed(seed, "ablation", {s.id}).
std::vector<AblationResult> run_ablation(const nets::ReconModel& model,
                                         std::span<const data::Slice> test,
                                         const AblationSpec& spec, const data::MaskParams& mask,
                                         std::uint64_t mask_seed, std::uint64_t seed,
                                         int workers = 1);

/// Models x {PSNR, SSIM} x accelerations, mirroring the published comparison table.
struct ResultTable {
  struct Row {
    std::string model;
    std::vector<double> psnr;  // one per acceleration
    std::vector<double> ssim;  // fraction
  };
  std::vector<double> accelerations;
  std::vector<Row> rows;

  std::string to_text() const;
  std::string to_csv() const;
};

/// One row per condition; SSIM printed in percent.
std::string ablation_table_text(const std::vector<AblationResult>& results);
std::string ablation_table_csv(const std::vector<AblationResult>& results);

}  // namespace signrecon::eval
