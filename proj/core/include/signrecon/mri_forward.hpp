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

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace signrecon::mri {

using Complex = std::complex<double>;

/// Real-valued magnitude image stored row-major (height rows x width cols).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0);
  Image(int h, int w, std::vector<double> values);

  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const { return pixels.size(); }
  bool all_finite() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Complex k-space samples with the DC component at (height/2, width/2).
struct KSpaceGrid {
  int height = 0;
  int width = 0;
  std::vector<Complex> values;

  KSpaceGrid() = default;
  KSpaceGrid(int h, int w);
  KSpaceGrid(int h, int w, std::vector<Complex> v);

  Complex& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
  const Complex& at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * width + col];
  }
  std::size_t size() const { return values.size(); }
  bool all_finite() const;
};

/// Cartesian column mask: a k-space column is either fully acquired or skipped.
struct SamplingMask {
  std::vector<std::uint8_t> columns;
  double acceleration = 1.0;
  double center_fraction = 0.0;
  double std_fraction = 1.0 / 6.0;
  std::uint64_t seed = 0;

  int width() const { return static_cast<int>(columns.size()); }
  bool sampled(int col) const { return columns[static_cast<std::size_t>(col)] != 0; }
  int count() const;

  friend bool operator==(const SamplingMask&, const SamplingMask&) = default;
};

/// Data-consistency weight. An infinite lambda replaces sampled columns outright.
struct DCConfig {
  double lambda = std::numeric_limits<double>::infinity();

  bool hard() const { return std::isinf(lambda); }
  void validate() const;
};

/// Orthonormal centered 2D DFT.
KSpaceGrid fft2c(const Image& img);
KSpaceGrid fft2c(const KSpaceGrid& grid);
/// Inverse of fft2c; returns the complex image.
KSpaceGrid ifft2c(const KSpaceGrid& k);

/// In-place transforms on raw row-major buffers (no validation); shared with
/// the autograd data-consistency layer.
void fft2c_inplace(std::span<Complex> data, int height, int width);
void ifft2c_inplace(std::span<Complex> data, int height, int width);

/// Number of always-sampled central columns, ceil(width * center_fraction).
int center_band_width(int width, double center_fraction);
/// Total sampled column budget, round(width / acceleration).
int column_budget(int width, double acceleration);

/// Variable-density 1D Gaussian column mask. The central band is fully sampled,
/// the rest of the budget is drawn without replacement with probability
/// proportional to a Gaussian centred on the middle column.
SamplingMask gen_gaussian_mask(int width, double acceleration, double center_fraction,
                               std::uint64_t seed, double std_fraction = 1.0 / 6.0);

KSpaceGrid undersample(const KSpaceGrid& k, const SamplingMask& mask);

/// Magnitude of the inverse transform of (possibly undersampled) k-space.
Image zero_filled_recon(const KSpaceGrid& k_undersampled);

/// k-space after the consistency step, before the magnitude is taken.
KSpaceGrid data_consistency_kspace(const Image& pred, const KSpaceGrid& measured,
                                   const SamplingMask& mask, const DCConfig& cfg);
Image data_consistency(const Image& pred, const KSpaceGrid& measured, const SamplingMask& mask,
                       const DCConfig& cfg);

/// Throws InvalidInputError when measured k-space is non-zero in a skipped column.
void check_zero_off_mask(const KSpaceGrid& measured, const SamplingMask& mask);

Image magnitude(const KSpaceGrid& complex_image);

// Mask file: "SIGNMASK" | u32 width | f64 acceleration | f64 center_fraction |
// u64 seed | width bytes of 0/1. Little-endian.
void save_mask(const SamplingMask& mask, const std::filesystem::path& path);
SamplingMask load_mask(const std::filesystem::path& path);

}  // namespace signrecon::mri
