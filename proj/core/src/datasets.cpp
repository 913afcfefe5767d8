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

#include "signrecon/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>

#include <nlohmann/json.hpp>

#include "signrecon/errors.hpp"
#include "signrecon/random.hpp"

namespace signrecon::data {

using nlohmann::json;

namespace {

constexpr char kArrayMagic[8] = {'S', 'I', 'G', 'N', 'A', 'R', 'R', '1'};

int stable_slice_id(const std::string& volume_id, std::size_t index) {
  return static_cast<int>(derive_seed(hash_tag(volume_id), "slice-id", {index}) & 0x7fffffffULL);
}

json side_to_json(const side::SideInfoRecord& rec, const side::SideInfoSchema& schema) {
  json j = json::object();
  for (int f = 0; f < schema.n_categorical(); ++f) {
    const int id = rec.categorical_ids[f];
    j[schema.categorical[f].name] =
        id == side::kNullId ? json(nullptr) : json(schema.categorical[f].vocabulary[id]);
  }
  for (int f = 0; f < schema.n_continuous(); ++f) {
    j[schema.continuous[f]] =
        rec.continuous_known[f] ? json(rec.continuous_values[f]) : json(nullptr);
  }
  return j;
}

side::SideInfoRecord side_from_json(const json& j, const side::SideInfoSchema& schema) {
  side::SideInfoRecord rec;
  for (const auto& field : schema.categorical) {
    if (!j.contains(field.name) || !j[field.name].is_string()) {
      throw CorruptFileError("manifest: missing categorical field '" + field.name + "'");
    }
    const auto token = j[field.name].get<std::string>();
    const int id = field.index_of(token);
    if (id < 0) {
      throw CorruptFileError("manifest: '" + token + "' is not in the " + field.name +
                             " vocabulary");
    }
    rec.categorical_ids.push_back(id);
  }
  for (const auto& name : schema.continuous) {
    const bool known = j.contains(name) && j[name].is_number();
    rec.continuous_values.push_back(known ? j[name].get<double>() : 0.0);
    rec.continuous_known.push_back(known ? 1 : 0);
    rec.continuous_masked.push_back(0);
  }
  return rec;
}

double bilinear(const mri::Image& img, double r, double c) {
  r = std::clamp(r, 0.0, static_cast<double>(img.height - 1));
  c = std::clamp(c, 0.0, static_cast<double>(img.width - 1));
  const int r0 = static_cast<int>(std::floor(r));
  const int c0 = static_cast<int>(std::floor(c));
  const int r1 = std::min(r0 + 1, img.height - 1);
  const int c1 = std::min(c0 + 1, img.width - 1);
  const double fr = r - r0, fc = c - c0;
  return (1 - fr) * ((1 - fc) * img.at(r0, c0) + fc * img.at(r0, c1)) +
         fr * ((1 - fc) * img.at(r1, c0) + fc * img.at(r1, c1));
}

void gaussian_blur(mri::Image& img, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  mri::Image tmp(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int cc = c + i;
        if (cc >= 0 && cc < img.width) s += k[i + radius] * img.at(r, cc);
      }
      tmp.at(r, c) = s;
    }
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int rr = r + i;
        if (rr >= 0 && rr < img.height) s += k[i + radius] * tmp.at(rr, c);
      }
      img.at(r, c) = s;
    }
}

struct Ellipse {
  double cx, cy, a, b, phi, value;
};

struct Bar {
  double cx, cy, half_len, half_width, phi, value;
};

mri::Image render(const side::SideInfoRecord& style, const PhantomStyleSpec& spec, int size,
                  std::uint64_t seed, bool noisy) {
  const int contrast = style.categorical_ids.at(0);
  const int view = style.categorical_ids.at(1);
  const int source = style.categorical_ids.at(2);
  const double tr = style.continuous_values.at(0);
  const double te = style.continuous_values.at(1);
  const double flip = style.continuous_values.at(2);

  Rng rng(derive_seed(seed, "phantom-geometry"));
  const double aspect = spec.aspect(view);
  std::vector<Ellipse> ellipses;
  ellipses.push_back({0.0, 0.0, 0.82, 0.82 * aspect, 0.0, rng.uniform(0.2, 0.35)});
  const int n_ell = 4 + static_cast<int>(rng.below(5));
  for (int i = 0; i < n_ell; ++i) {
    Ellipse e;
    e.cx = rng.uniform(-0.45, 0.45);
    e.cy = rng.uniform(-0.45, 0.45) * aspect;
    e.a = rng.uniform(0.06, 0.3);
    e.b = rng.uniform(0.06, 0.3) * aspect;
    e.phi = rng.uniform(0.0, std::numbers::pi);
    e.value = rng.uniform(0.1, 1.0);
    ellipses.push_back(e);
  }
  std::vector<Bar> bars;
  const int n_bars = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < n_bars; ++i) {
    Bar b;
    b.cx = rng.uniform(-0.4, 0.4);
    b.cy = rng.uniform(-0.4, 0.4) * aspect;
    b.half_len = rng.uniform(0.15, 0.4);
    b.half_width = rng.uniform(0.012, 0.022);
    b.phi = rng.uniform(0.0, std::numbers::pi);
    b.value = rng.uniform(0.7, 1.0);
    bars.push_back(b);
  }

  const double theta = spec.rotation_rad(view);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double p = spec.exponent(contrast);
  const double bright = PhantomStyleSpec::brightness(tr, flip);

  mri::Image img(size, size);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double x = (c + 0.5) / size * 2.0 - 1.0;
      const double y = (r + 0.5) / size * 2.0 - 1.0;
      const double u = ct * x + st * y;
      const double v = -st * x + ct * y;
      double value = 0.0;
      for (const auto& e : ellipses) {
        const double du = u - e.cx, dv = v - e.cy;
        const double cp = std::cos(e.phi), sp = std::sin(e.phi);
        const double eu = (cp * du + sp * dv) / e.a;
        const double ev = (-sp * du + cp * dv) / e.b;
        if (eu * eu + ev * ev <= 1.0) value = e.value;
      }
      for (const auto& b : bars) {
        const double du = u - b.cx, dv = v - b.cy;
        const double cp = std::cos(b.phi), sp = std::sin(b.phi);
        const double along = cp * du + sp * dv;
        const double across = -sp * du + cp * dv;
        if (std::abs(along) <= b.half_len && std::abs(across) <= b.half_width) value = b.value;
      }
      img.at(r, c) = bright * std::pow(value, p);
    }
  }
  gaussian_blur(img, PhantomStyleSpec::blur_sigma(te));
  if (noisy) {
    Rng noise(derive_seed(seed, "phantom-noise"));
    const double sd = spec.noise_std(source);
    for (auto& v : img.pixels) v += sd * noise.normal();
  }
  for (auto& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace

std::size_t DatasetManifest::slice_count() const {
  std::size_t n = 0;
  for (const auto& v : volumes) n += v.slices.size();
  return n;
}

void DatasetManifest::validate(const side::SideInfoSchema& schema) const {
  std::set<std::string> ids;
  for (const auto& v : volumes) {
    if (!ids.insert(v.id).second) throw ConfigError("manifest: duplicate volume id " + v.id);
    if (v.split && *v.split != "train" && *v.split != "val" && *v.split != "test") {
      throw ConfigError("manifest: volume " + v.id + " has unknown split '" + *v.split + "'");
    }
    for (const auto& s : v.slices) s.side.validate(schema);
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path,
                              const side::SideInfoSchema& schema) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw CorruptFileError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "signrecon-manifest") {
    throw CorruptFileError(path.string() + ": not a signrecon manifest");
  }
  if (j.value("version", 0) != 1) throw VersionError(path.string() + ": unsupported version");
  DatasetManifest m;
  m.root = path.parent_path();
  for (const auto& jv : j.at("volumes")) {
    VolumeEntry v;
    v.id = jv.at("id").get<std::string>();
    if (jv.contains("split") && jv["split"].is_string()) v.split = jv["split"].get<std::string>();
    for (const auto& js : jv.at("slices")) {
      SliceEntry s;
      s.path = js.at("path").get<std::string>();
      s.side = side_from_json(js.at("side"), schema);
      if (!std::filesystem::exists(m.root / s.path)) {
        throw ConfigError("manifest: missing slice file " + (m.root / s.path).string());
      }
      v.slices.push_back(std::move(s));
    }
    m.volumes.push_back(std::move(v));
  }
  m.validate(schema);
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path,
                   const side::SideInfoSchema& schema) {
  json j;
  j["format"] = "signrecon-manifest";
  j["version"] = 1;
  j["volumes"] = json::array();
  for (const auto& v : manifest.volumes) {
    json jv;
    jv["id"] = v.id;
    if (v.split) jv["split"] = *v.split;
    jv["slices"] = json::array();
    for (const auto& s : v.slices) {
      jv["slices"].push_back({{"path", s.path.generic_string()}, {"side", side_to_json(s.side, schema)}});
    }
    j["volumes"].push_back(std::move(jv));
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

void write_slice_array(const mri::Image& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kArrayMagic, sizeof(kArrayMagic));
  const std::uint32_t h = img.height, w = img.width;
  os.write(reinterpret_cast<const char*>(&h), sizeof(h));
  os.write(reinterpret_cast<const char*>(&w), sizeof(w));
  std::vector<float> buf(img.pixels.begin(), img.pixels.end());
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

mri::Image read_slice_array(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open slice array " + path.string());
  char magic[8];
  std::uint32_t h = 0, w = 0;
  is.read(magic, sizeof(magic));
  is.read(reinterpret_cast<char*>(&h), sizeof(h));
  is.read(reinterpret_cast<char*>(&w), sizeof(w));
  if (!is || std::memcmp(magic, kArrayMagic, sizeof(magic)) != 0) {
    throw CorruptFileError(path.string() + ": bad slice array header");
  }
  if (h == 0 || w == 0 || h > 16384 || w > 16384) {
    throw CorruptFileError(path.string() + ": implausible slice shape");
  }
  std::vector<float> buf(static_cast<std::size_t>(h) * w);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw CorruptFileError(path.string() + ": truncated slice array");
  mri::Image img(static_cast<int>(h), static_cast<int>(w));
  std::copy(buf.begin(), buf.end(), img.pixels.begin());
  if (!img.all_finite()) throw CorruptFileError(path.string() + ": non-finite pixels");
  return img;
}

std::optional<mri::Image> preprocess(const mri::Image& raw, int size) {
  if (raw.height < 32 || raw.width < 32) {
    throw InvalidInputError("preprocess: slices must be at least 32x32");
  }
  if (size < 1) throw ConfigError("preprocess: target size must be positive");
  if (!raw.all_finite()) throw InvalidInputError("preprocess: non-finite pixels");
  const int side_len = std::min(raw.height, raw.width);
  const int r0 = (raw.height - side_len) / 2;
  const int c0 = (raw.width - side_len) / 2;
  mri::Image crop(side_len, side_len);
  for (int r = 0; r < side_len; ++r)
    for (int c = 0; c < side_len; ++c) crop.at(r, c) = std::max(0.0, raw.at(r0 + r, c0 + c));

  mri::Image out(size, size);
  if (size == side_len) {
    out = crop;
  } else {
    const double scale = static_cast<double>(side_len) / size;
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c)
        out.at(r, c) = bilinear(crop, (r + 0.5) * scale - 0.5, (c + 0.5) * scale - 0.5);
  }
  const double peak = *std::max_element(out.pixels.begin(), out.pixels.end());
  if (!(peak > 0.0)) return std::nullopt;
  if (peak != 1.0) {
    for (auto& v : out.pixels) v /= peak;
  }
  return out;
}

std::array<DatasetManifest, 3> split_by_volume(const DatasetManifest& manifest,
                                               std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios)
    if (!(r >= 0.0)) throw ConfigError("split_by_volume: ratios must be non-negative");
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (!(total > 0.0)) throw ConfigError("split_by_volume: ratios sum to zero");

  std::array<DatasetManifest, 3> out;
  for (auto& m : out) m.root = manifest.root;
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < manifest.volumes.size(); ++i) {
    const auto& v = manifest.volumes[i];
    if (!v.split) {
      free.push_back(i);
      continue;
    }
    const int which = *v.split == "train" ? 0 : *v.split == "val" ? 1 : 2;
    out[which].volumes.push_back(v);
  }
  const int n = static_cast<int>(free.size());
  const int wanted = static_cast<int>(std::count_if(ratios.begin(), ratios.end(),
                                                    [](double r) { return r > 0.0; }));
  if (n < 3 || n < wanted) {
    throw ConfigError("split_by_volume: need at least 3 volumes, got " + std::to_string(n));
  }
  std::array<int, 3> counts{};
  for (int s = 1; s < 3; ++s) {
    counts[s] = static_cast<int>(std::lround(n * ratios[s] / total));
    if (ratios[s] > 0.0) counts[s] = std::max(counts[s], 1);
  }
  counts[0] = n - counts[1] - counts[2];
  if (counts[0] < (ratios[0] > 0.0 ? 1 : 0)) {
    throw ConfigError("split_by_volume: too few volumes for the requested ratios");
  }

  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = free.size(); i > 1; --i) {
    std::swap(free[i - 1], free[rng.below(i)]);
  }
  std::size_t k = 0;
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < counts[s]; ++i) out[s].volumes.push_back(manifest.volumes[free[k++]]);
  return out;
}

double PhantomStyleSpec::exponent(int contrast_id) const {
  return contrast_exponent.at(static_cast<std::size_t>(contrast_id));
}
double PhantomStyleSpec::rotation_rad(int view_id) const {
  return view_rotation_deg.at(static_cast<std::size_t>(view_id)) * std::numbers::pi / 180.0;
}
double PhantomStyleSpec::aspect(int view_id) const {
  return view_aspect.at(static_cast<std::size_t>(view_id));
}
double PhantomStyleSpec::noise_std(int source_id) const {
  return source_noise_std.at(static_cast<std::size_t>(source_id));
}
double PhantomStyleSpec::brightness(double tr_ms, double flip_deg) {
  const double tr = std::max(tr_ms, 0.0);
  const double flip = std::clamp(flip_deg, 0.0, 90.0) * std::numbers::pi / 180.0;
  return (0.5 + 0.5 * tr / (tr + 1000.0)) * (0.8 + 0.2 * std::sin(flip));
}
double PhantomStyleSpec::blur_sigma(double te_ms) {
  const double te = std::max(te_ms, 0.0);
  return 0.3 + 1.5 * te / (te + 60.0);
}

mri::Image synth_phantom(const side::SideInfoRecord& style, const PhantomStyleSpec& spec, int size,
                         std::uint64_t seed) {
  return render(style, spec, size, seed, true);
}

mri::Image synth_phantom_noiseless(const side::SideInfoRecord& style, const PhantomStyleSpec& spec,
                                   int size, std::uint64_t seed) {
  return render(style, spec, size, seed, false);
}

side::SideInfoRecord sample_style(const side::SideInfoSchema& schema, Rng& rng) {
  side::SideInfoRecord rec;
  for (const auto& f : schema.categorical) {
    rec.categorical_ids.push_back(static_cast<int>(rng.below(f.vocabulary.size())));
  }
  static constexpr double kLo[] = {300.0, 5.0, 10.0};
  static constexpr double kHi[] = {4000.0, 120.0, 90.0};
  const int src = schema.categorical_index("source");
  const bool unknown_source =
      src >= 0 && schema.categorical[src].vocabulary[rec.categorical_ids[src]] == "unknown";
  for (int f = 0; f < schema.n_continuous(); ++f) {
    const double lo = f < 3 ? kLo[f] : 0.0, hi = f < 3 ? kHi[f] : 1.0;
    rec.continuous_values.push_back(rng.uniform(lo, hi));
    rec.continuous_known.push_back(unknown_source ? 0 : 1);
    rec.continuous_masked.push_back(0);
  }
  return rec;
}

DatasetManifest generate_synthetic(const SyntheticConfig& cfg, const side::SideInfoSchema& schema,
                                   const PhantomStyleSpec& spec) {
  if (cfg.volumes < 1 || cfg.slices_per_volume < 1 || cfg.image_size < 32) {
    throw ConfigError("synthetic data: volumes and slices must be positive, image_size >= 32");
  }
  if (schema.n_categorical() < 3 || schema.n_continuous() < 3) {
    throw ConfigError("synthetic data: the phantom renderer needs contrast/view/source and TR/TE/flip");
  }
  DatasetManifest m;
  for (int v = 0; v < cfg.volumes; ++v) {
    VolumeEntry vol;
    char id[32];
    std::snprintf(id, sizeof(id), "vol%03d", v);
    vol.id = id;
    Rng style_rng(derive_seed(cfg.seed, "volume-style", {static_cast<std::uint64_t>(v)}));
    const auto style = sample_style(schema, style_rng);
    for (int s = 0; s < cfg.slices_per_volume; ++s) {
      SliceEntry slice;
      char name[32];
      std::snprintf(name, sizeof(name), "slice%02d.f32", s);
      slice.path = std::filesystem::path(vol.id) / name;
      slice.side = style;
      auto img = synth_phantom(style, spec, cfg.image_size,
                               derive_seed(cfg.seed, "slice", {static_cast<std::uint64_t>(v),
                                                               static_cast<std::uint64_t>(s)}));
      for (auto& p : img.pixels) p = static_cast<double>(static_cast<float>(p));
      slice.pixels = std::move(img);
      vol.slices.push_back(std::move(slice));
    }
    m.volumes.push_back(std::move(vol));
  }
  return m;
}

void write_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir,
                   const side::SideInfoSchema& schema) {
  std::filesystem::create_directories(dir);
  for (const auto& v : manifest.volumes) {
    for (const auto& s : v.slices) {
      if (!s.pixels) throw ConfigError("write_dataset: slice without in-memory pixels");
      std::filesystem::create_directories((dir / s.path).parent_path());
      write_slice_array(*s.pixels, dir / s.path);
    }
  }
  DatasetManifest out = manifest;
  out.root = dir;
  save_manifest(out, dir / "manifest.json", schema);
}

std::vector<Slice> load_slices(const DatasetManifest& manifest, int image_size) {
  std::vector<Slice> out;
  for (const auto& v : manifest.volumes) {
    for (std::size_t i = 0; i < v.slices.size(); ++i) {
      const auto& s = v.slices[i];
      const mri::Image raw = s.pixels ? *s.pixels : read_slice_array(manifest.root / s.path);
      auto img = preprocess(raw, image_size);
      if (!img) {
        std::cerr << "warning: skipping all-zero slice " << v.id << "/" << s.path.string() << "\n";
        continue;
      }
      Slice slice;
      slice.image = std::move(*img);
      slice.side = s.side;
      // Values hidden in the manifest are not visible to the model either.
      for (std::size_t f = 0; f < slice.side.continuous_known.size(); ++f) {
        if (!slice.side.continuous_known[f]) slice.side.continuous_values[f] = 0.0;
      }
      slice.volume_id = v.id;
      slice.id = stable_slice_id(v.id, i);
      out.push_back(std::move(slice));
    }
  }
  return out;
}

std::vector<nets::ReconBatch> build_batches(std::span<const Slice> slices,
                                            std::span<const std::size_t> order,
                                            const MaskParams& mask, int batch_size,
                                            std::uint64_t mask_seed) {
  if (batch_size < 1) throw ConfigError("build_batches: batch size must be positive");
  std::vector<nets::ReconBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    const int b = static_cast<int>(end - start);
    const int h = slices[order[start]].image.height, w = slices[order[start]].image.width;
    const auto plane = static_cast<std::size_t>(h) * w;
    std::vector<double> zf(b * plane), gt(b * plane);
    auto meas = std::make_shared<ag::Measurements>();
    nets::ReconBatch batch;
    for (int i = 0; i < b; ++i) {
      const Slice& s = slices[order[start + i]];
      if (s.image.height != h || s.image.width != w) {
        throw InvalidInputError("build_batches: slices in a batch must share a shape");
      }
      const auto m = mri::gen_gaussian_mask(
          w, mask.acceleration, mask.center_fraction,
          derive_seed(mask_seed, "mask", {static_cast<std::uint64_t>(s.id)}), mask.std_fraction);
      auto k = mri::undersample(mri::fft2c(s.image), m);
      const auto zero_filled = mri::zero_filled_recon(k);
      std::copy(zero_filled.pixels.begin(), zero_filled.pixels.end(), zf.begin() + i * plane);
      std::copy(s.image.pixels.begin(), s.image.pixels.end(), gt.begin() + i * plane);
      meas->kspace.push_back(std::move(k));
      meas->masks.push_back(m);
      batch.side.push_back(s.side);
      batch.slice_ids.push_back(s.id);
    }
    batch.zero_filled = ag::Var({b, 1, h, w}, std::move(zf));
    batch.target = ag::Var({b, 1, h, w}, std::move(gt));
    batch.measured = std::move(meas);
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<nets::ReconBatch> build_batches(std::span<const Slice> slices, const MaskParams& mask,
                                            int batch_size, std::uint64_t mask_seed) {
  std::vector<std::size_t> order(slices.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return build_batches(slices, order, mask, batch_size, mask_seed);
}

}  // namespace signrecon::data
