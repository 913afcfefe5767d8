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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "signrecon/autograd.hpp"
#include "signrecon/mri_forward.hpp"
#include "signrecon/random.hpp"

namespace signrecon::testing {

inline mri::Image random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  mri::Image img(h, w);
  for (auto& p : img.pixels) p = rng.uniform();
  return img;
}

inline ag::Var random_var(ag::Shape shape, std::uint64_t seed, bool requires_grad = false,
                          double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(ag::numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return ag::Var(std::move(shape), std::move(v), requires_grad);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// ||a - b|| / max(||a||, ||b||), or the absolute difference when both are tiny.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  return denom < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

/// Central finite differences of `loss` with respect to every entry of `wrt`.
inline std::vector<double> numeric_grad(const std::function<double()>& loss, ag::Var wrt,
                                        double h = 1e-6) {
  auto& v = wrt.mutable_value();
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + h;
    const double up = loss();
    v[i] = saved - h;
    const double down = loss();
    v[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Analytic gradient of `loss` with respect to `wrt` (zeros if none reached it).
inline std::vector<double> analytic_grad(const std::function<ag::Var()>& loss,
                                         const std::vector<ag::Var>& all, const ag::Var& wrt) {
  for (auto v : all) v.zero_grad();
  ag::backward(loss());
  auto g = wrt.grad();
  if (g.empty()) g.assign(wrt.numel(), 0.0);
  return g;
}

/// Weighted sum of all entries with fixed pseudo-random weights: a smooth scalar loss.
inline ag::Var probe_loss(const ag::Var& out, std::uint64_t seed) {
  const int n = static_cast<int>(out.numel());
  const ag::Var weight({1, n}, random_var({1, n}, seed).value());
  const ag::Var bias({1}, {0.0});
  return ag::linear(ag::reshape(out, {1, n}), weight, bias);
}

}  // namespace signrecon::testing
