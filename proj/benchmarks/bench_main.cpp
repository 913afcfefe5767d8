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

#include <benchmark/benchmark.h>

#include "signrecon/backbones.hpp"
#include "signrecon/datasets.hpp"
#include "signrecon/evalkit.hpp"
#include "signrecon/mri_forward.hpp"
#include "signrecon/sign_module.hpp"

namespace {

using namespace signrecon;

mri::Image noise_image(int n, std::uint64_t seed) {
  Rng rng(seed);
  mri::Image img(n, n);
  for (auto& p : img.pixels) p = rng.uniform();
  return img;
}

ag::Var noise_var(ag::Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(ag::numel(shape));
  for (auto& x : v) x = rng.normal();
  return ag::Var(std::move(shape), std::move(v));
}

void BM_Fft2c(benchmark::State& state) {
  const auto img = noise_image(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(mri::fft2c(img));
}
BENCHMARK(BM_Fft2c)->Arg(64)->Arg(320);

void BM_DataConsistency(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto x = noise_image(n, 2);
  const auto m = mri::gen_gaussian_mask(n, 4.0, 0.08, 3);
  const auto y = mri::undersample(mri::fft2c(x), m);
  const auto pred = noise_image(n, 4);
  for (auto _ : state) benchmark::DoNotOptimize(mri::data_consistency(pred, y, m, {}));
}
BENCHMARK(BM_DataConsistency)->Arg(64)->Arg(320);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  auto x = noise_var({4, c, 64, 64}, 5);
  ag::Var w({c, c, 3, 3}, noise_var({c, c, 3, 3}, 6).value(), true);
  ag::Var b({c}, std::vector<double>(c, 0.0), true);
  for (auto _ : state) {
    w.zero_grad();
    b.zero_grad();
    const auto y = ag::conv2d(x, w, b);
    ag::backward(ag::mae(y, x));
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(32);

void BM_SignForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  ParamSet params;
  Rng rng(7);
  const sign::SignHead head("h", 4, 32, c, params, rng);
  side::EncodedSideInfo enc;
  for (int i = 0; i < 4; ++i) {
    enc.branches.push_back(noise_var({4, 32}, 8 + i));
    enc.keep.emplace_back(4, 1);
  }
  const auto h = noise_var({4, c, 64, 64}, 20);
  ag::NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sign::conditional_instance_norm(h, head.forward(enc)).value().data());
  }
}
BENCHMARK(BM_SignForward)->Arg(8)->Arg(32);

void BM_D5C5DeskForward(benchmark::State& state) {
  const auto schema = side::SideInfoSchema::defaults();
  const auto slices = data::load_slices(
      data::generate_synthetic({.volumes = 4, .slices_per_volume = 1, .image_size = 64, .seed = 1},
                               schema),
      64);
  const auto batch = data::build_batches(slices, {}, 4, 0).front();
  nets::D5C5Config cfg;
  cfg.n_cascades = 3;
  cfg.convs_per_block = 3;
  cfg.channels = 8;
  const nets::D5C5 model(cfg, schema, 0);
  ag::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(batch).value().data());
}
BENCHMARK(BM_D5C5DeskForward)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = noise_image(n, 30), b = noise_image(n, 31);
  for (auto _ : state) benchmark::DoNotOptimize(eval::ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(320);

}  // namespace

BENCHMARK_MAIN();
