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

#include "signrecon/mri_forward.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include "signrecon/errors.hpp"
#include "signrecon/random.hpp"

namespace signrecon::mri {

namespace {

// fftw planning is not thread-safe; execution of an existing plan is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(int height, int width, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(height, width, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const auto n = static_cast<std::size_t>(height) * width;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    fftw_plan plan =
        fftw_plan_dft_2d(height, width, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

// out[(r + sr) % h][(c + sc) % w] = in[r][c]
void roll(std::span<const Complex> in, std::span<Complex> out, int height, int width, int sr,
          int sc) {
  for (int r = 0; r < height; ++r) {
    const int rr = (r + sr) % height;
    for (int c = 0; c < width; ++c) {
      out[static_cast<std::size_t>(rr) * width + (c + sc) % width] =
          in[static_cast<std::size_t>(r) * width + c];
    }
  }
}

void centered_transform(std::span<Complex> data, int height, int width, int sign) {
  const auto n = static_cast<std::size_t>(height) * width;
  std::vector<Complex> shifted(n), spectrum(n);
  // ifftshift: roll by ceil(n/2); fftshift: roll by floor(n/2).
  roll(data, shifted, height, width, (height + 1) / 2, (width + 1) / 2);
  fftw_execute_dft(plan_cache().get(height, width, sign),
                   reinterpret_cast<fftw_complex*>(shifted.data()),
                   reinterpret_cast<fftw_complex*>(spectrum.data()));
  roll(spectrum, data, height, width, height / 2, width / 2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& v : data) v *= scale;
}

void require_same_shape(int h1, int w1, int h2, int w2, const char* what) {
  if (h1 != h2 || w1 != w2) {
    throw InvalidInputError(std::string(what) + ": shape mismatch (" + std::to_string(h1) + "x" +
                            std::to_string(w1) + " vs " + std::to_string(h2) + "x" +
                            std::to_string(w2) + ")");
  }
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CorruptFileError("mask file truncated");
  return v;
}

constexpr char kMaskMagic[8] = {'S', 'I', 'G', 'N', 'M', 'A', 'S', 'K'};

}  // namespace

Image::Image(int h, int w, double fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

Image::Image(int h, int w, std::vector<double> values)
    : height(h), width(w), pixels(std::move(values)) {
  if (pixels.size() != static_cast<std::size_t>(h) * w) {
    throw InvalidInputError("Image: pixel count does not match shape");
  }
}

bool Image::all_finite() const {
  return std::all_of(pixels.begin(), pixels.end(), [](double v) { return std::isfinite(v); });
}

KSpaceGrid::KSpaceGrid(int h, int w)
    : height(h), width(w), values(static_cast<std::size_t>(h) * w) {}

KSpaceGrid::KSpaceGrid(int h, int w, std::vector<Complex> v)
    : height(h), width(w), values(std::move(v)) {
  if (values.size() != static_cast<std::size_t>(h) * w) {
    throw InvalidInputError("KSpaceGrid: sample count does not match shape");
  }
}

bool KSpaceGrid::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](const Complex& v) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
  });
}

int SamplingMask::count() const {
  return static_cast<int>(std::count(columns.begin(), columns.end(), std::uint8_t{1}));
}

void DCConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("DCConfig: lambda must be positive");
}

void fft2c_inplace(std::span<Complex> data, int height, int width) {
  centered_transform(data, height, width, FFTW_FORWARD);
}

void ifft2c_inplace(std::span<Complex> data, int height, int width) {
  centered_transform(data, height, width, FFTW_BACKWARD);
}

KSpaceGrid fft2c(const Image& img) {
  if (!img.all_finite()) throw InvalidInputError("fft2c: non-finite input");
  KSpaceGrid k(img.height, img.width);
  std::copy(img.pixels.begin(), img.pixels.end(), k.values.begin());
  fft2c_inplace(k.values, k.height, k.width);
  return k;
}

KSpaceGrid fft2c(const KSpaceGrid& grid) {
  if (!grid.all_finite()) throw InvalidInputError("fft2c: non-finite input");
  KSpaceGrid k = grid;
  fft2c_inplace(k.values, k.height, k.width);
  return k;
}

KSpaceGrid ifft2c(const KSpaceGrid& k) {
  if (!k.all_finite()) throw InvalidInputError("ifft2c: non-finite input");
  KSpaceGrid out = k;
  ifft2c_inplace(out.values, out.height, out.width);
  return out;
}

int center_band_width(int width, double center_fraction) {
  // Subtract a hair so that e.g. 0.08 * 100 = 8.000000000000002 stays 8.
  return static_cast<int>(std::ceil(width * center_fraction - 1e-9));
}

int column_budget(int width, double acceleration) {
  return static_cast<int>(std::lround(width / acceleration));
}

SamplingMask gen_gaussian_mask(int width, double acceleration, double center_fraction,
                               std::uint64_t seed, double std_fraction) {
  if (width < 8) throw ConfigError("gen_gaussian_mask: width must be >= 8");
  if (!(acceleration >= 1.0)) throw ConfigError("gen_gaussian_mask: acceleration must be >= 1");
  if (!(center_fraction >= 0.0 && center_fraction < 1.0)) {
    throw ConfigError("gen_gaussian_mask: center_fraction must lie in [0, 1)");
  }
  if (!(std_fraction > 0.0)) throw ConfigError("gen_gaussian_mask: std_fraction must be positive");
  const int budget = column_budget(width, acceleration);
  const int band = center_band_width(width, center_fraction);
  if (budget < band) {
    throw ConfigError("gen_gaussian_mask: column budget " + std::to_string(budget) +
                      " smaller than center band " + std::to_string(band));
  }

  SamplingMask mask;
  mask.columns.assign(static_cast<std::size_t>(width), 0);
  mask.acceleration = acceleration;
  mask.center_fraction = center_fraction;
  mask.std_fraction = std_fraction;
  mask.seed = seed;

  const int center = width / 2;
  const int band_start = center - band / 2;
  for (int c = band_start; c < band_start + band; ++c) mask.columns[c] = 1;

  // Weighted sampling without replacement (Efraimidis-Spirakis): keep the
  // largest log(u) / w.
  const double sigma = std_fraction * width;
  Rng rng(derive_seed(seed, "gaussian-mask", {static_cast<std::uint64_t>(width)}));
  std::vector<std::pair<double, int>> keys;
  keys.reserve(static_cast<std::size_t>(width));
  for (int c = 0; c < width; ++c) {
    const double u = rng.uniform_open_zero();
    if (mask.columns[c]) continue;
    const double d = c - center;
    const double w = std::exp(-d * d / (2.0 * sigma * sigma));
    keys.emplace_back(std::log(u) / w, c);
  }
  const auto remaining = static_cast<std::size_t>(budget - band);
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(remaining), keys.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  for (std::size_t i = 0; i < remaining; ++i) mask.columns[keys[i].second] = 1;
  return mask;
}

KSpaceGrid undersample(const KSpaceGrid& k, const SamplingMask& mask) {
  if (k.width != mask.width()) {
    throw InvalidInputError("undersample: mask width " + std::to_string(mask.width()) +
                            " does not match k-space width " + std::to_string(k.width));
  }
  KSpaceGrid out(k.height, k.width);
  for (int r = 0; r < k.height; ++r) {
    for (int c = 0; c < k.width; ++c) {
      if (mask.sampled(c)) out.at(r, c) = k.at(r, c);
    }
  }
  return out;
}

Image magnitude(const KSpaceGrid& complex_image) {
  Image img(complex_image.height, complex_image.width);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = std::abs(complex_image.values[i]);
  return img;
}

Image zero_filled_recon(const KSpaceGrid& k_undersampled) {
  return magnitude(ifft2c(k_undersampled));
}

void check_zero_off_mask(const KSpaceGrid& measured, const SamplingMask& mask) {
  if (measured.width != mask.width()) {
    throw InvalidInputError("data_consistency: mask width does not match k-space");
  }
  for (int r = 0; r < measured.height; ++r) {
    for (int c = 0; c < measured.width; ++c) {
      if (!mask.sampled(c) && measured.at(r, c) != Complex{}) {
        throw InvalidInputError("data_consistency: measured k-space is non-zero in skipped column " +
                                std::to_string(c));
      }
    }
  }
}

KSpaceGrid data_consistency_kspace(const Image& pred, const KSpaceGrid& measured,
                                   const SamplingMask& mask, const DCConfig& cfg) {
  cfg.validate();
  require_same_shape(pred.height, pred.width, measured.height, measured.width, "data_consistency");
  check_zero_off_mask(measured, mask);
  KSpaceGrid k = fft2c(pred);
  const double lambda = cfg.lambda;
  for (int r = 0; r < k.height; ++r) {
    for (int c = 0; c < k.width; ++c) {
      if (!mask.sampled(c)) continue;
      if (cfg.hard()) {
        k.at(r, c) = measured.at(r, c);
      } else {
        k.at(r, c) = (k.at(r, c) + lambda * measured.at(r, c)) / (1.0 + lambda);
      }
    }
  }
  return k;
}

Image data_consistency(const Image& pred, const KSpaceGrid& measured, const SamplingMask& mask,
                       const DCConfig& cfg) {
  return zero_filled_recon(data_consistency_kspace(pred, measured, mask, cfg));
}

void save_mask(const SamplingMask& mask, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMaskMagic, sizeof(kMaskMagic));
  write_pod(os, static_cast<std::uint32_t>(mask.width()));
  write_pod(os, mask.acceleration);
  write_pod(os, mask.center_fraction);
  write_pod(os, mask.seed);
  os.write(reinterpret_cast<const char*>(mask.columns.data()),
           static_cast<std::streamsize>(mask.columns.size()));
}

SamplingMask load_mask(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMaskMagic, sizeof(magic)) != 0) {
    throw CorruptFileError(path.string() + ": not a mask file");
  }
  SamplingMask mask;
  const auto width = read_pod<std::uint32_t>(is);
  mask.acceleration = read_pod<double>(is);
  mask.center_fraction = read_pod<double>(is);
  mask.seed = read_pod<std::uint64_t>(is);
  mask.columns.resize(width);
  is.read(reinterpret_cast<char*>(mask.columns.data()), width);
  if (!is) throw CorruptFileError(path.string() + ": mask columns truncated");
  for (auto v : mask.columns) {
    if (v > 1) throw CorruptFileError(path.string() + ": mask entries must be 0 or 1");
  }
  return mask;
}

}  // namespace signrecon::mri
