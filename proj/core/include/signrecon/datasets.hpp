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
#include <span>
#include <string>
#include <vector>

#include "signrecon/backbones.hpp"
#include "signrecon/mri_forward.hpp"
#include "signrecon/side_encoding.hpp"

namespace signrecon::data {

struct SliceEntry {
  std::filesystem::path path;  // relative to the manifest directory
  side::SideInfoRecord side;
  std::optional<mri::Image> pixels;  // in-memory slices skip the file read
};

struct VolumeEntry {
  std::string id;
  std::optional<std::string> split;  // "train", "val" or "test"
  std::vector<SliceEntry> slices;
};

/// Volumes -> slices -> {array path, side information}.
struct DatasetManifest {
  std::filesystem::path root;  // directory the slice paths are relative to
  std::vector<VolumeEntry> volumes;

  std::size_t slice_count() const;
  void validate(const side::SideInfoSchema& schema) const;
};

/// JSON manifest: {"format": "signrecon-manifest", "version": 1, "volumes": [
///   {"id": ..., "split": ..., "slices": [{"path": ..., "side": {"contrast": "T1w",
///   "view": "axial", "source": "GE", "TR": 1200.0, "TE": null, ...}}]}]}
/// A null continuous value marks it unknown.
DatasetManifest load_manifest(const std::filesystem::path& path, const side::SideInfoSchema& schema);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path,
                   const side::SideInfoSchema& schema);

// Slice array file: "SIGNARR1" | u32 height | u32 width | height*width f32, little-endian.
void write_slice_array(const mri::Image& img, const std::filesystem::path& path);
mri::Image read_slice_array(const std::filesystem::path& path);

/// Centre-crop to a square, bilinear resize to size x size, and divide by the
/// slice maximum. Returns nullopt for an all-zero slice.
std::optional<mri::Image> preprocess(const mri::Image& raw, int size);

/// Partition at volume granularity. Volumes carrying a split hint keep it.
std::array<DatasetManifest, 3> split_by_volume(const DatasetManifest& manifest,
                                               std::array<double, 3> ratios, std::uint64_t seed);

/// Deterministic appearance model keyed by side information.
struct PhantomStyleSpec {
  std::vector<double> contrast_exponent{0.5, 0.8, 1.2, 1.6, 2.2, 2.8, 3.5};
  std::vector<double> view_rotation_deg{0.0, 90.0, 45.0};
  std::vector<double> view_aspect{1.0, 0.72, 0.85};
  std::vector<double> source_noise_std{0.01, 0.02, 0.03, 0.02};

  double exponent(int contrast_id) const;
  double rotation_rad(int view_id) const;
  double aspect(int view_id) const;
  double noise_std(int source_id) const;
  /// Increasing in TR and flip angle.
  static double brightness(double tr_ms, double flip_deg);
  /// Gaussian blur sigma in pixels, increasing in TE.
  static double blur_sigma(double te_ms);
};

/// Random ellipse/line phantom rendered in the style of `style`.
mri::Image synth_phantom(const side::SideInfoRecord& style, const PhantomStyleSpec& spec, int size,
                         std::uint64_t seed);
/// The same rendering without the additive noise.
mri::Image synth_phantom_noiseless(const side::SideInfoRecord& style, const PhantomStyleSpec& spec,
                                   int size, std::uint64_t seed);

/// Draws a volume-level style: uniform categorical ids, uniform scan
/// parameters; an unknown source also hides the scan parameters.
side::SideInfoRecord sample_style(const side::SideInfoSchema& schema, Rng& rng);

struct SyntheticConfig {
  int volumes = 40;
  int slices_per_volume = 8;
  int image_size = 64;
  std::uint64_t seed = 0;
};

/// In-memory styled dataset (pixels rounded to f32 so that a round trip
/// through slice files is lossless).
DatasetManifest generate_synthetic(const SyntheticConfig& cfg, const side::SideInfoSchema& schema,
                                   const PhantomStyleSpec& spec = {});

/// Writes every slice array and the manifest into `dir`.
void write_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir,
                   const side::SideInfoSchema& schema);

struct Slice {
  mri::Image image;  // preprocessed ground truth
  side::SideInfoRecord side;
  std::string volume_id;
  int id = 0;  // stable index used to derive per-slice seeds
};

/// Loads and preprocesses every slice; degenerate slices are skipped with a
/// warning on stderr. Slice ids are a stable hash of (volume id, slice index).
std::vector<Slice> load_slices(const DatasetManifest& manifest, int image_size);

struct MaskParams {
  double acceleration = 4.0;
  double center_fraction = 0.08;
  double std_fraction = 1.0 / 6.0;
};

/// Per slice: fft2c -> seeded mask -> undersample -> zero-fill, grouped into
/// batches following `order`. Each slice's mask seed is
/// derive_seed(mask_seed, "mask", {slice.id}).
std::vector<nets::ReconBatch> build_batches(std::span<const Slice> slices,
                                            std::span<const std::size_t> order,
                                            const MaskParams& mask, int batch_size,
                                            std::uint64_t mask_seed);
std::vector<nets::ReconBatch> build_batches(std::span<const Slice> slices, const MaskParams& mask,
                                            int batch_size, std::uint64_t mask_seed);

}  // namespace signrecon::data
