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

// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments name
// the groups to run (oracles, desk); the default runs everything.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "signrecon/autograd.hpp"
#include "signrecon/backbones.hpp"
#include "signrecon/datasets.hpp"
#include "signrecon/evalkit.hpp"
#include "signrecon/experiment_config.hpp"
#include "signrecon/mri_forward.hpp"
#include "signrecon/pipeline.hpp"
#include "signrecon/sign_module.hpp"
#include "test_util.hpp"

namespace {

using namespace signrecon;
using Clock = std::chrono::steady_clock;

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  %-22s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------- oracles

void dc_exactness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto x = testing::random_image(64, 64, 1000 + i);
    const auto pred = testing::random_image(64, 64, 5000 + i);
    const auto m = mri::gen_gaussian_mask(64, 4.0, 0.08, 9000 + i);
    const auto y = mri::undersample(mri::fft2c(x), m);
    const auto k = mri::data_consistency_kspace(pred, y, m, {});
    double num = 0.0, den = 0.0;
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) {
        if (!m.sampled(c)) continue;
        num += std::norm(k.values[r * 64 + c] - y.values[r * 64 + c]);
        den += std::norm(y.values[r * 64 + c]);
      }
    worst = std::max(worst, std::sqrt(num / den));
  }
  const double t = seconds_since(t0);
  report("dc_exactness", worst <= 1e-5 && t < 10.0,
         fmt("200 pairs, worst relative error %.2e (<= 1e-5), %.2f s (< 10 s)", worst, t));
}

void transform_oracle() {
  double round_trip = 0.0, parseval = 0.0;
  Rng sizes(7);
  for (int i = 0; i < 100; ++i) {
    const int h = 2 + static_cast<int>(sizes.below(63));
    const int w = 2 + static_cast<int>(sizes.below(63));
    const auto x = testing::random_image(h, w, 300 + i);
    const auto k = mri::fft2c(x);
    const auto back = mri::ifft2c(k);
    double ex = 0.0, ek = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      round_trip = std::max(round_trip, std::abs(back.values[j] - mri::Complex(x.pixels[j], 0.0)));
      ex += x.pixels[j] * x.pixels[j];
      ek += std::norm(k.values[j]);
    }
    parseval = std::max(parseval, std::abs(ek - ex) / ex);
  }
  report("transform_oracle", round_trip <= 1e-6 && parseval <= 1e-6,
         fmt("100 cases, round trip %.2e (<= 1e-6), Parseval %.2e (<= 1e-6)", round_trip,
             parseval));
}

side::EncodedSideInfo random_encoding(int branches, int batch, int dim, std::uint64_t seed) {
  side::EncodedSideInfo enc;
  for (int b = 0; b < branches; ++b) {
    enc.branches.push_back(testing::random_var({batch, dim}, seed + b, true));
    enc.keep.emplace_back(batch, 1);
  }
  return enc;
}

double worst_gradcheck(const std::function<ag::Var()>& build, const std::vector<ag::Var>& wrt) {
  double worst = 0.0;
  for (const auto& v : wrt) {
    const auto a = testing::analytic_grad(build, wrt, v);
    const auto n = testing::numeric_grad([&] { return build().item(); }, v);
    worst = std::max(worst, testing::relative_error(a, n));
  }
  return worst;
}

// Relative error of the concatenated gradient over every input.
double joint_gradcheck(const std::function<ag::Var()>& build, const std::vector<ag::Var>& wrt) {
  std::vector<double> a, n;
  for (const auto& v : wrt) {
    const auto av = testing::analytic_grad(build, wrt, v);
    const auto nv = testing::numeric_grad([&] { return build().item(); }, v);
    a.insert(a.end(), av.begin(), av.end());
    n.insert(n.end(), nv.begin(), nv.end());
  }
  return testing::relative_error(a, n);
}

// Random output heads, plus shifted branch biases so no layer-norm input is exactly
// constant (sigma = 0 is a kink that finite differences straddle).
void randomise_heads(ParamSet& params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params.items()) {
    if (p.group == ParamGroup::kSignOutput)
      for (auto& v : p.var.mutable_value()) v = 0.3 * rng.normal();
    if (p.group == ParamGroup::kContinuousMap || p.group == ParamGroup::kSignBranch)
      for (auto& v : p.var.mutable_value()) v += 0.5 * rng.normal();
  }
}

void gradient_checks() {
  const auto t0 = Clock::now();
  // SIGN module feeding a conditional instance norm.
  ParamSet params;
  Rng rng(1);
  const sign::SignHead head("h", 4, 4, 3, params, rng);
  randomise_heads(params, 2);
  const auto enc = random_encoding(4, 2, 4, 10);
  const auto h = testing::random_var({2, 3, 5, 5}, 3, true);
  std::vector<ag::Var> wrt{h};
  for (const auto& p : params.items()) wrt.push_back(p.var);
  for (const auto& b : enc.branches) wrt.push_back(b);
  const double sign_err = worst_gradcheck(
      [&] { return testing::probe_loss(sign::conditional_instance_norm(h, head.forward(enc)), 4); },
      wrt);

  // Conditional instance norm with free affine inputs.
  const sign::AffinePair ab{testing::random_var({2, 3}, 5, true), testing::random_var({2, 3}, 6, true)};
  const double cin_err = worst_gradcheck(
      [&] { return testing::probe_loss(sign::conditional_instance_norm(h, ab), 7); },
      {h, ab.gamma, ab.beta});

  // One-cascade D5C5+SIGN at 8x8 with two channels, hard data consistency.
  const auto schema = side::SideInfoSchema::defaults();
  std::vector<data::Slice> slices(2);
  Rng style_rng(8);
  for (int i = 0; i < 2; ++i) {
    slices[i].image = testing::random_image(8, 8, 20 + i);
    slices[i].side = data::sample_style(schema, style_rng);
    slices[i].id = i;
  }
  data::MaskParams mask;
  mask.center_fraction = 0.25;
  const auto batch = data::build_batches(slices, mask, 2, 9).front();
  nets::D5C5Config cfg;
  cfg.n_cascades = 1;
  cfg.convs_per_block = 3;
  cfg.channels = 2;
  nets::D5C5 model(cfg, schema, 11);
  model.set_continuous_stats({{1000, 50, 45}, {500, 20, 20}});
  randomise_heads(model.params(), 12);
  std::vector<ag::Var> all;
  for (const auto& p : model.params().items()) all.push_back(p.var);
  const double net_err =
      joint_gradcheck([&] { return testing::probe_loss(model.forward(batch), 13); }, all);

  const double t = seconds_since(t0);
  const bool ok = sign_err < 1e-5 && cin_err < 1e-5 && net_err < 1e-4 && t < 60.0;
  report("gradient_checks", ok,
         fmt("SIGN %.1e, CIN %.1e (< 1e-5), D5C5+SIGN %.1e (< 1e-4), %.1f s (< 60 s)", sign_err,
             cin_err, net_err, t));
}

void identity_at_init() {
  const auto schema = side::SideInfoSchema::defaults();
  nets::D5C5Config d;
  d.n_cascades = 2;
  d.channels = 4;
  nets::OUCRConfig o;
  o.iterations = 2;
  o.channels = 4;
  auto d_in = d;
  d_in.norm = nets::NormKind::kInstance;
  auto o_in = o;
  o_in.norm = nets::NormKind::kInstance;
  const nets::D5C5 d_sign(d, schema, 3), d_plain(d_in, schema, 3);
  const nets::OUCR o_sign(o, schema, 4), o_plain(o_in, schema, 4);
  const auto slices = data::load_slices(
      data::generate_synthetic({.volumes = 20, .slices_per_volume = 1, .image_size = 32, .seed = 5},
                               schema),
      32);
  double d_worst = 0.0, o_worst = 0.0;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto batch = data::build_batches(std::span(slices).subspan(i, 1), {}, 1, 6).front();
    d_worst = std::max(d_worst, testing::max_abs_diff(d_sign.forward(batch).value(),
                                                      d_plain.forward(batch).value()));
    o_worst = std::max(o_worst, testing::max_abs_diff(o_sign.forward(batch).value(),
                                                      o_plain.forward(batch).value()));
  }
  report("identity_at_init", d_worst <= 1e-6 && o_worst <= 1e-6,
         fmt("20 inputs each: D5C5 %.1e, OUCR %.1e (<= 1e-6)", d_worst, o_worst));
}

void normalisation_statistics() {
  double mean_worst = 0.0, std_worst = 0.0;
  int seed = 0;
  for (int b : {1, 2, 3})
    for (int c : {1, 4, 7})
      for (int hw : {3, 8, 17, 32}) {
        const auto x = testing::random_var({b, c, hw, hw + 1}, ++seed, false, 3.0);
        const auto y = sign::instance_norm(ag::add_scalar(x, 2.0));
        const std::size_t plane = static_cast<std::size_t>(hw) * (hw + 1);
        for (int s = 0; s < b * c; ++s) {
          double m = 0.0, v = 0.0;
          for (std::size_t i = 0; i < plane; ++i) m += y.value()[s * plane + i];
          m /= plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const double d = y.value()[s * plane + i] - m;
            v += d * d;
          }
          mean_worst = std::max(mean_worst, std::abs(m));
          std_worst = std::max(std_worst, std::abs(std::sqrt(v / plane) - 1.0));
        }
      }
  report("normalisation_stats", mean_worst < 1e-5 && std_worst <= 1e-4,
         fmt("36 shapes: |mean| %.1e (< 1e-5), |std - 1| %.1e (<= 1e-4)", mean_worst, std_worst));
}

void metric_oracles() {
  const mri::Image a(32, 32, 0.3);
  auto shifted = [&](double e) {
    auto b = a;
    for (auto& v : b.pixels) v += e;
    return b;
  };
  const double p1 = eval::psnr(a, shifted(0.1));
  const double p2 = eval::psnr(a, shifted(0.5));
  bool self = true;
  for (int s = 0; s < 10; ++s) {
    const auto img = testing::random_image(20 + s, 24, s);
    self = self && eval::ssim(img, img) == 1.0;
  }
  report("metric_oracles", std::abs(p1 - 20.0) <= 0.01 && std::abs(p2 - 6.02) <= 0.01 && self,
         fmt("PSNR %.4f dB (20 +- 0.01), %.4f dB (6.02 +- 0.01), SSIM(a,a) == 1: %s", p1, p2,
             self ? "yes" : "no"));
}

// ----------------------------------------------------- desk-scale experiments

struct SeedRun {
  std::map<nets::NormKind, double> test_psnr;
  std::unique_ptr<nets::ReconModel> sign_model;
  TrainOutcome sign_outcome;
};

void desk_experiments() {
  const auto t0 = Clock::now();
  const auto base = ExperimentConfig::preset_defaults("desk");
  const auto data = load_experiment_data(base);
  std::printf("desk data: %zu train, %zu val, %zu test slices at %dx%d\n", data.train.size(),
              data.val.size(), data.test.size(), base.data.image_size, base.data.image_size);
  const auto zf = evaluate_on_test(eval::zero_filled_reconstructor(), base, data, 4.0);
  std::printf("zero-filled test PSNR %.3f dB\n", zf.mean_psnr);

  const std::vector<nets::NormKind> kinds{nets::NormKind::kNone, nets::NormKind::kInstance,
                                          nets::NormKind::kSign};
  std::vector<SeedRun> runs(3);
  std::string first_csv;
  for (int seed = 0; seed < 3; ++seed) {
    for (auto kind : kinds) {
      auto cfg = base;
      cfg.set_seed(static_cast<std::uint64_t>(seed));
      cfg.model.d5c5.norm = kind;
      const auto ts = Clock::now();
      auto outcome = run_training(cfg, data);
      const double psnr =
          evaluate_on_test(eval::model_reconstructor(*outcome.model), cfg, data, 4.0).mean_psnr;
      std::printf("  seed %d %-10s test PSNR %.3f dB (%.0f s)\n", seed,
                  outcome.model->name().c_str(), psnr, seconds_since(ts));
      std::fflush(stdout);
      runs[seed].test_psnr[kind] = psnr;
      if (kind == nets::NormKind::kSign) {
        if (seed == 0) first_csv = outcome.log.to_csv();
        runs[seed].sign_model = std::move(outcome.model);
        runs[seed].sign_outcome = std::move(outcome);
      }
    }
  }
  const double train_time = seconds_since(t0);

  std::map<nets::NormKind, double> mean;
  for (const auto& r : runs)
    for (const auto& [k, v] : r.test_psnr) mean[k] += v / runs.size();
  const double gain_none = mean[nets::NormKind::kSign] - mean[nets::NormKind::kNone];
  const double gain_in = mean[nets::NormKind::kSign] - mean[nets::NormKind::kInstance];
  report("sign_gain", gain_none >= 0.3 && gain_in >= 0.3 && train_time <= 45 * 60.0,
         fmt("3-seed mean PSNR: SIGN %.3f, D5C5 %.3f, D5C5+IN %.3f; gains %+.3f / %+.3f dB "
             "(>= 0.3); %.1f min (<= 45)",
             mean[nets::NormKind::kSign], mean[nets::NormKind::kNone],
             mean[nets::NormKind::kInstance], gain_none, gain_in, train_time / 60.0));

  // Side-information ablations on each seed's SIGN model, averaged over seeds.
  const auto schema = base.schema();
  std::map<std::string, double> cond_mean;
  std::vector<std::string> order;
  auto spec = eval::AblationSpec::true_random_wrong(schema);
  for (const auto& c : eval::AblationSpec::single_branch_masks(schema).conditions)
    if (c.mode) spec.conditions.push_back(c);
  for (const auto& r : runs) {
    const auto results = eval::run_ablation(*r.sign_model, data.test, spec, base.mask,
                                            base.test_mask_seed(), 0, eval::default_workers());
    for (const auto& res : results) {
      if (!cond_mean.contains(res.condition.label)) order.push_back(res.condition.label);
      cond_mean[res.condition.label] += res.report.mean_psnr / runs.size();
    }
  }
  for (const auto& label : order) std::printf("  ablation %-18s %.3f dB\n", label.c_str(), cond_mean[label]);
  const double d_random = cond_mean["true"] - cond_mean["random"];
  const double d_wrong = cond_mean["true"] - cond_mean["wrong"];
  report("corruption_ordering", d_random >= 0.1 && d_wrong >= 0.1,
         fmt("true - random %+.3f dB, true - wrong %+.3f dB (each >= 0.1)", d_random, d_wrong));
  double worst_gain = -1e9;
  std::string worst_label;
  for (const auto& label : order) {
    if (label.rfind("mask:", 0) != 0) continue;
    const double g = cond_mean[label] - cond_mean["true"];
    if (g > worst_gain) {
      worst_gain = g;
      worst_label = label;
    }
  }
  report("branch_masking", worst_gain <= 0.05,
         fmt("largest PSNR change from masking one branch %+.3f dB (%s; <= +0.05)", worst_gain,
             worst_label.c_str()));

  // Corrupting every branch must change the trained model's output.
  int changed = 0, total = 0;
  for (const auto& r : runs) {
    auto masked = data.test;
    std::vector<std::string> fields;
    for (const auto& f : schema.categorical) fields.push_back(f.name);
    for (const auto& f : schema.continuous) fields.push_back(f);
    for (auto& s : masked) s.side = side::corrupt_side_info(s.side, schema, side::CorruptionMode::kMask, fields, 0);
    const auto a = data::build_batches(data.test, base.mask, 8, base.test_mask_seed());
    const auto b = data::build_batches(masked, base.mask, 8, base.test_mask_seed());
    ag::NoGradGuard no_grad;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto ya = eval::to_images(r.sign_model->forward(a[i]));
      const auto yb = eval::to_images(r.sign_model->forward(b[i]));
      for (std::size_t j = 0; j < ya.size(); ++j) {
        changed += ya[j].pixels != yb[j].pixels ? 1 : 0;
        ++total;
      }
    }
  }
  report("side_info_liveness", changed >= 0.95 * total,
         fmt("%d of %d test outputs change when all side information is masked (>= 95%%)",
             changed, total));

  bool hashes = true;
  double worst_regression = -1e9;
  for (const auto& r : runs) {
    const auto& o = r.sign_outcome;
    hashes = hashes && o.conv_hash_finetune && *o.conv_hash_finetune == o.conv_hash_pretrain;
    worst_regression = std::max(worst_regression, o.pretrain_val_psnr - o.finetune_val_psnr.value_or(-1e9));
  }
  report("two_stage_contract", hashes && worst_regression <= 0.05,
         fmt("conv hashes unchanged: %s; worst val PSNR regression %+.3f dB (<= 0.05)",
             hashes ? "yes" : "no", worst_regression));

  auto cfg = base;
  cfg.set_seed(0);
  const auto repeat = run_training(cfg, data);
  const bool same = repeat.log.to_csv() == first_csv;
  report("determinism", same,
         fmt("seed-0 SIGN metrics CSV rerun %s (%zu rows)", same ? "identical" : "DIFFERS",
             repeat.log.rows().size()));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> groups(argv + 1, argv + argc);
  const bool all = groups.empty();
  if (all || groups.contains("oracles")) {
    dc_exactness();
    transform_oracle();
    gradient_checks();
    identity_at_init();
    normalisation_statistics();
    metric_oracles();
  }
  if (all || groups.contains("desk")) desk_experiments();
  std::printf("%s: %d criteria failed\n", g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures);
  return g_failures == 0 ? 0 : 1;
}
