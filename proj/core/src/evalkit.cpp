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

#include "signrecon/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "signrecon/errors.hpp"

namespace signrecon::eval {

namespace {

void require_same_shape(const mri::Image& a, const mri::Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw InvalidInputError(std::string(what) + ": shape mismatch");
  }
}

// Separable "valid" filtering with a normalised Gaussian window.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int wo = w - n + 1, ho = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * wo);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < wo; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * img[static_cast<std::size_t>(r) * w + c + i];
      tmp[static_cast<std::size_t>(r) * wo + c] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ho) * wo);
  for (int r = 0; r < ho; ++r)
    for (int c = 0; c < wo; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(r + i) * wo + c];
      out[static_cast<std::size_t>(r) * wo + c] = s;
    }
  return out;
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - center;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

}  // namespace

double psnr(const mri::Image& ref, const mri::Image& test, double data_range) {
  require_same_shape(ref, test, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = ref.pixels[i] - test.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(ref.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double capped_psnr(double value) { return std::min(value, kPsnrCap); }

double ssim(const mri::Image& ref, const mri::Image& test, double data_range) {
  require_same_shape(ref, test, "ssim");
  constexpr int kWin = 11;
  if (ref.height < kWin || ref.width < kWin) {
    throw ConfigError("ssim: images must be at least 11x11");
  }
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const auto k = gaussian_window(kWin, 1.5);
  const int h = ref.height, w = ref.width;
  std::vector<double> aa(ref.size()), bb(ref.size()), ab(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    aa[i] = ref.pixels[i] * ref.pixels[i];
    bb[i] = test.pixels[i] * test.pixels[i];
    ab[i] = ref.pixels[i] * test.pixels[i];
  }
  const auto mu_a = filter_valid(ref.pixels, h, w, k);
  const auto mu_b = filter_valid(test.pixels, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k);
  const auto e_bb = filter_valid(bb, h, w, k);
  const auto e_ab = filter_valid(ab, h, w, k);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma2 = mu_a[i] * mu_a[i];
    const double mb2 = mu_b[i] * mu_b[i];
    const double mab = mu_a[i] * mu_b[i];
    const double va = e_aa[i] - ma2;
    const double vb = e_bb[i] - mb2;
    const double cov = e_ab[i] - mab;
    sum += ((2.0 * mab + c1) * (2.0 * cov + c2)) / ((ma2 + mb2 + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

double mean_absolute_error(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw InvalidInputError("mae: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

std::vector<mri::Image> to_images(const ag::Var& batch_images) {
  const int b = batch_images.dim(0), h = batch_images.dim(2), w = batch_images.dim(3);
  const auto plane = static_cast<std::size_t>(h) * w;
  std::vector<mri::Image> out;
  for (int i = 0; i < b; ++i) {
    const auto* p = batch_images.value().data() + i * plane;
    out.emplace_back(h, w, std::vector<double>(p, p + plane));
  }
  return out;
}

Reconstructor model_reconstructor(const nets::ReconModel& model) {
  return [&model](const nets::ReconBatch& batch) {
    ag::NoGradGuard guard;
    return to_images(model.forward(batch));
  };
}

Reconstructor zero_filled_reconstructor() {
  return [](const nets::ReconBatch& batch) { return to_images(batch.zero_filled); };
}

Reconstructor oracle_reconstructor() {
  return [](const nets::ReconBatch& batch) { return to_images(batch.target); };
}

std::string MetricReport::per_image_csv() const {
  std::ostringstream os;
  os << "slice_id,psnr,ssim,mae\n" << std::setprecision(10);
  for (const auto& m : images)
    os << m.slice_id << "," << capped_psnr(m.psnr) << "," << m.ssim << "," << m.mae << "\n";
  return os.str();
}

MetricReport summarise(std::vector<ImageMetrics> images) {
  MetricReport r;
  r.images = std::move(images);
  if (r.images.empty()) return r;
  for (const auto& m : r.images) {
    r.mean_psnr += capped_psnr(m.psnr);
    r.mean_ssim += m.ssim;
    r.mean_mae += m.mae;
  }
  const double n = static_cast<double>(r.images.size());
  r.mean_psnr /= n;
  r.mean_ssim /= n;
  r.mean_mae /= n;
  return r;
}

int default_workers() {
  const char* env = std::getenv("SIGNRECON_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  int n = 0;
  const auto end = env + std::strlen(env);
  const auto [ptr, ec] = std::from_chars(env, end, n);
  if (ec != std::errc{} || ptr != end || n < 1) {
    throw ConfigError("SIGNRECON_WORKERS must be a positive integer, got '" + std::string(env) + "'");
  }
  return n;
}

MetricReport evaluate(const Reconstructor& recon, std::span<const data::Slice> test,
                      const data::MaskParams& mask, std::uint64_t mask_seed, int batch_size,
                      int workers) {
  if (test.empty()) throw ConfigError("evaluate: empty test set");
  const auto batches = data::build_batches(test, mask, batch_size, mask_seed);
  std::vector<std::vector<ImageMetrics>> per_batch(batches.size());
  auto run = [&](std::size_t bi) {
    const auto& batch = batches[bi];
    const auto images = recon(batch);
    const auto truth = to_images(batch.target);
    if (images.size() != truth.size()) {
      throw InvalidInputError("evaluate: reconstructor returned the wrong number of images");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
      ImageMetrics m;
      m.slice_id = batch.slice_ids[i];
      m.psnr = psnr(truth[i], images[i]);
      m.ssim = ssim(truth[i], images[i]);
      m.mae = mean_absolute_error(images[i].pixels, truth[i].pixels);
      per_batch[bi].push_back(m);
    }
  };
  workers = std::max(1, std::min<int>(workers, static_cast<int>(batches.size())));
  if (workers == 1) {
    for (std::size_t bi = 0; bi < batches.size(); ++bi) run(bi);
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t bi = t; bi < batches.size(); bi += workers) run(bi);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::vector<ImageMetrics> all;
  for (auto& v : per_batch) all.insert(all.end(), v.begin(), v.end());
  return summarise(std::move(all));
}

void AblationSpec::validate(const side::SideInfoSchema& schema) const {
  for (const auto& c : conditions) {
    for (const auto& f : c.fields) {
      if (!schema.has_field(f)) throw ConfigError("ablation: unknown field '" + f + "'");
    }
    if (c.mode && *c.mode != side::CorruptionMode::kMask) {
      const bool any_cat = std::any_of(c.fields.begin(), c.fields.end(), [&](const auto& f) {
        return schema.categorical_index(f) >= 0;
      });
      if (!any_cat) throw ConfigError("ablation: condition '" + c.label + "' selects no categorical field");
    }
  }
}

AblationSpec AblationSpec::true_random_wrong(const side::SideInfoSchema& schema) {
  std::vector<std::string> cats;
  for (const auto& f : schema.categorical) cats.push_back(f.name);
  return {{{"true", std::nullopt, {}},
           {"random", side::CorruptionMode::kRandom, cats},
           {"wrong", side::CorruptionMode::kWrong, cats}}};
}

AblationSpec AblationSpec::branch_subsets(const side::SideInfoSchema& schema) {
  AblationSpec spec;
  spec.conditions.push_back({"true", std::nullopt, {}});
  const int n = schema.n_categorical();
  auto keep_only = [&](std::vector<int> kept) {
    AblationCondition c;
    std::vector<std::string> names;
    for (int k : kept) names.push_back(schema.categorical[k].name);
    c.label = join(names, "+");
    c.mode = side::CorruptionMode::kMask;
    for (int f = 0; f < n; ++f)
      if (std::find(kept.begin(), kept.end(), f) == kept.end())
        c.fields.push_back(schema.categorical[f].name);
    spec.conditions.push_back(std::move(c));
  };
  for (int i = 0; i < n; ++i) keep_only({i});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) keep_only({i, j});
  return spec;
}

AblationSpec AblationSpec::single_branch_masks(const side::SideInfoSchema& schema) {
  AblationSpec spec;
  spec.conditions.push_back({"true", std::nullopt, {}});
  for (const auto& f : schema.categorical) {
    spec.conditions.push_back({"mask:" + f.name, side::CorruptionMode::kMask, {f.name}});
  }
  if (!schema.continuous.empty()) {
    spec.conditions.push_back(
        {"mask:continuous", side::CorruptionMode::kMask, schema.continuous});
  }
  return spec;
}

AblationCondition AblationSpec::parse_condition(std::string_view text,
                                                const side::SideInfoSchema& schema) {
  if (text == "true") return {"true", std::nullopt, {}};
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("ablation condition '" + std::string(text) + "' needs mode:fields");
  }
  const std::string mode(text.substr(0, colon));
  std::vector<std::string> fields;
  std::string rest(text.substr(colon + 1));
  std::size_t pos = 0;
  while (pos <= rest.size()) {
    const auto plus = rest.find('+', pos);
    const auto tok = rest.substr(pos, plus == std::string::npos ? std::string::npos : plus - pos);
    if (tok == "continuous") {
      fields.insert(fields.end(), schema.continuous.begin(), schema.continuous.end());
    } else if (!tok.empty()) {
      fields.push_back(tok);
    }
    if (plus == std::string::npos) break;
    pos = plus + 1;
  }
  for (const auto& f : fields) {
    if (!schema.has_field(f)) throw ConfigError("ablation: unknown field '" + f + "'");
  }
  AblationCondition c;
  c.label = std::string(text);
  if (mode == "keep") {
    c.mode = side::CorruptionMode::kMask;
    for (const auto& f : schema.categorical)
      if (std::find(fields.begin(), fields.end(), f.name) == fields.end())
        c.fields.push_back(f.name);
  } else {
    c.mode = side::parse_corruption_mode(mode);
    c.fields = std::move(fields);
  }
  if (c.mode != side::CorruptionMode::kMask && c.fields.empty()) {
    throw ConfigError("ablation condition '" + c.label + "' selects no fields");
  }
  return c;
}

std::vector<AblationResult> run_ablation(const nets::ReconModel& model,
                                         std::span<const data::Slice> test,
                                         const AblationSpec& spec, const data::MaskParams& mask,
                                         std::uint64_t mask_seed, std::uint64_t seed,
                                         int workers) {
  if (!model.uses_sign() || model.encoder() == nullptr) {
    throw ConfigError("run_ablation: the model has no SIGN modules");
  }
  const auto& schema = model.encoder()->schema();
  spec.validate(schema);
  std::vector<AblationResult> out;
  for (const auto& cond : spec.conditions) {
    std::vector<data::Slice> corrupted(test.begin(), test.end());
    if (cond.mode) {
      for (auto& s : corrupted) {
        s.side = side::corrupt_side_info(s.side, schema, *cond.mode, cond.fields,
                                         derive_seed(seed, "ablation",
                                                     {static_cast<std::uint64_t>(s.id)}));
      }
    }
    out.push_back({cond, evaluate(model_reconstructor(model), corrupted, mask, mask_seed, 8,
                                  workers)});
  }
  return out;
}

std::string ResultTable::to_text() const {
  std::ostringstream os;
  std::size_t name_w = 12;
  for (const auto& r : rows) name_w = std::max(name_w, r.model.size());
  os << std::left << std::setw(static_cast<int>(name_w)) << "";
  for (double a : accelerations) {
    std::ostringstream h;
    h << a << "x";
    os << " | " << std::setw(21) << h.str();
  }
  os << "\n" << std::setw(static_cast<int>(name_w)) << "";
  for (std::size_t i = 0; i < accelerations.size(); ++i) os << " | PSNR(dB)   SSIM(%)  ";
  os << "\n" << std::string(name_w + accelerations.size() * 24, '-') << "\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(name_w)) << r.model;
    for (std::size_t i = 0; i < accelerations.size(); ++i) {
      os << " | " << std::right << std::setw(8) << capped_psnr(r.psnr[i]) << "   "
         << std::setw(7) << 100.0 * r.ssim[i] << "   " << std::left;
    }
    os << "\n";
  }
  return os.str();
}

std::string ResultTable::to_csv() const {
  std::ostringstream os;
  os << "model,acceleration,psnr_db,ssim\n" << std::setprecision(10);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < accelerations.size(); ++i)
      os << r.model << "," << accelerations[i] << "," << capped_psnr(r.psnr[i]) << ","
         << r.ssim[i] << "\n";
  return os.str();
}

std::string ablation_table_text(const std::vector<AblationResult>& results) {
  std::ostringstream os;
  std::size_t w = 10;
  for (const auto& r : results) w = std::max(w, r.condition.label.size());
  os << std::left << std::setw(static_cast<int>(w)) << "condition"
     << " | PSNR(dB) | SSIM(%)\n"
     << std::string(w + 22, '-') << "\n"
     << std::fixed << std::setprecision(2);
  for (const auto& r : results) {
    os << std::left << std::setw(static_cast<int>(w)) << r.condition.label << " | " << std::right
       << std::setw(8) << r.report.mean_psnr << " | " << std::setw(7)
       << 100.0 * r.report.mean_ssim << "\n";
  }
  return os.str();
}

std::string ablation_table_csv(const std::vector<AblationResult>& results) {
  std::ostringstream os;
  os << "condition,mode,fields,psnr_db,ssim\n" << std::setprecision(10);
  for (const auto& r : results) {
    os << r.condition.label << ","
       << (r.condition.mode ? std::string(side::to_string(*r.condition.mode)) : "true") << ","
       << join(r.condition.fields, "+") << "," << r.report.mean_psnr << ","
       << r.report.mean_ssim << "\n";
  }
  return os.str();
}

}  // namespace signrecon::eval
