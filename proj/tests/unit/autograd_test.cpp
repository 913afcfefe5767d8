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

#include "signrecon/autograd.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "signrecon/errors.hpp"
#include "test_util.hpp"

namespace signrecon::ag {
namespace {

using testing::analytic_grad;
using testing::numeric_grad;
using testing::probe_loss;
using testing::random_var;
using testing::relative_error;

// Compares analytic and central-difference gradients for every variable in `wrt`.
void expect_gradients(const std::function<Var()>& build, const std::vector<Var>& wrt,
                      double tol = 1e-5) {
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    const auto a = analytic_grad(build, wrt, wrt[i]);
    const auto n = numeric_grad([&] { return build().item(); }, wrt[i]);
    EXPECT_LT(relative_error(a, n), tol) << "input " << i;
  }
}

TEST(Autograd, ElementwiseOps) {
  auto a = random_var({2, 3}, 1, true);
  auto b = random_var({2, 3}, 2, true);
  auto c = random_var({2, 3}, 3, true);
  expect_gradients(
      [&] {
        const Var terms[] = {a, scale(b, -0.5), add_scalar(c, 2.0)};
        return probe_loss(relu(add(sub(add_n(terms), a), reshape(c, {2, 3}))), 4);
      },
      {a, b, c});
}

TEST(Autograd, Linear) {
  auto x = random_var({3, 4}, 5, true);
  auto w = random_var({2, 4}, 6, true);
  auto b = random_var({2}, 7, true);
  const auto y = linear(x, w, b);
  // y[i, o] = sum_k w[o, k] x[i, k] + b[o]
  for (int i = 0; i < 3; ++i)
    for (int o = 0; o < 2; ++o) {
      double s = b.value()[o];
      for (int k = 0; k < 4; ++k) s += w.value()[o * 4 + k] * x.value()[i * 4 + k];
      EXPECT_NEAR(y.value()[i * 2 + o], s, 1e-12);
    }
  expect_gradients([&] { return probe_loss(linear(x, w, b), 8); }, {x, w, b});
  EXPECT_THROW(linear(random_var({3, 5}, 1), w, b), InvalidInputError);
}

TEST(Autograd, LayerNorm) {
  auto x = random_var({3, 5}, 9, true);
  auto g = random_var({5}, 10, true);
  auto b = random_var({5}, 11, true);
  expect_gradients([&] { return probe_loss(layer_norm(x, g, b, 1e-5), 12); }, {x, g, b});
}

TEST(Autograd, EmbeddingGathersRowsAndNullIsZero) {
  auto table = random_var({4, 3}, 13, true);
  const int ids[] = {2, -1, 0, 2};
  const auto e = embedding(table, ids);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(e.value()[0 * 3 + k], table.value()[2 * 3 + k]);
    EXPECT_EQ(e.value()[1 * 3 + k], 0.0);
    EXPECT_EQ(e.value()[2 * 3 + k], table.value()[0 * 3 + k]);
  }
  expect_gradients([&] { return probe_loss(embedding(table, ids), 14); }, {table});
  // Row 1 is never looked up, and the null id contributes nothing.
  const auto g = analytic_grad([&] { return probe_loss(embedding(table, ids), 14); }, {table},
                               table);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(g[1 * 3 + k], 0.0);
  const int bad[] = {4};
  EXPECT_THROW(embedding(table, bad), InvalidInputError);
}

TEST(Autograd, RowMaskAndSliceCols) {
  auto x = random_var({3, 6}, 15, true);
  const std::uint8_t keep[] = {1, 0, 1};
  const auto m = row_mask(x, keep);
  for (int k = 0; k < 6; ++k) EXPECT_EQ(m.value()[6 + k], 0.0);
  expect_gradients([&] { return probe_loss(slice_cols(row_mask(x, keep), 2, 5), 16); }, {x});
}

TEST(Autograd, Conv2dMatchesDirectSum) {
  auto x = random_var({2, 3, 5, 6}, 17, true);
  auto w = random_var({4, 3, 3, 3}, 18, true);
  auto b = random_var({4}, 19, true);
  const auto y = conv2d(x, w, b);
  ASSERT_EQ(y.shape(), (Shape{2, 4, 5, 6}));
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 4; ++o)
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 6; ++c) {
          double s = b.value()[o];
          for (int i = 0; i < 3; ++i)
            for (int dr = -1; dr <= 1; ++dr)
              for (int dc = -1; dc <= 1; ++dc) {
                const int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= 5 || cc < 0 || cc >= 6) continue;
                s += w.value()[((o * 3 + i) * 3 + dr + 1) * 3 + dc + 1] *
                     x.value()[((n * 3 + i) * 5 + rr) * 6 + cc];
              }
          EXPECT_NEAR(y.value()[((n * 4 + o) * 5 + r) * 6 + c], s, 1e-12);
        }
  expect_gradients([&] { return probe_loss(conv2d(x, w, b), 20); }, {x, w, b});
}

TEST(Autograd, Conv2dWithoutBiasAndLargerKernel) {
  auto x = random_var({1, 2, 7, 7}, 21, true);
  auto w = random_var({2, 2, 5, 5}, 22, true);
  expect_gradients([&] { return probe_loss(conv2d(x, w, Var()), 23); }, {x, w});
}

TEST(Autograd, InstanceNormStatistics) {
  for (auto shape : {Shape{1, 1, 4, 4}, Shape{2, 3, 8, 5}, Shape{3, 2, 16, 16}, Shape{1, 4, 3, 7}}) {
    const auto x = random_var(shape, 24 + shape[2], false, 3.0);
    const auto y = instance_norm(add_scalar(x, 5.0), Var(), Var(), 1e-5);
    const std::size_t plane = static_cast<std::size_t>(shape[2]) * shape[3];
    for (std::size_t s = 0; s < y.numel() / plane; ++s) {
      double mean = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mean += y.value()[s * plane + i];
      mean /= static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = y.value()[s * plane + i] - mean;
        sq += d * d;
      }
      EXPECT_LT(std::abs(mean), 1e-5);
      EXPECT_NEAR(std::sqrt(sq / static_cast<double>(plane)), 1.0, 1e-4);
    }
  }
}

TEST(Autograd, InstanceNormGradients) {
  auto x = random_var({2, 3, 4, 5}, 25, true);
  auto g = random_var({2, 3}, 26, true);
  auto b = random_var({2, 3}, 27, true);
  expect_gradients([&] { return probe_loss(instance_norm(x, g, b, 1e-5), 28); }, {x, g, b});
  expect_gradients([&] { return probe_loss(instance_norm(x, Var(), Var(), 1e-5), 29); }, {x});
}

TEST(Autograd, PoolAndUpsample) {
  auto x = random_var({2, 2, 4, 6}, 30, true);
  const auto p = max_pool2(x);
  ASSERT_EQ(p.shape(), (Shape{2, 2, 2, 3}));
  EXPECT_EQ(p.value()[0], std::max({x.value()[0], x.value()[1], x.value()[6], x.value()[7]}));
  const auto u = upsample2(p);
  ASSERT_EQ(u.shape(), x.shape());
  EXPECT_EQ(u.value()[7], p.value()[0]);
  expect_gradients([&] { return probe_loss(upsample2(max_pool2(x)), 31); }, {x});
  EXPECT_THROW(max_pool2(random_var({1, 1, 3, 4}, 1)), InvalidInputError);
}

TEST(Autograd, MeanAbsoluteError) {
  const Var pred({1, 1, 2, 2}, {0, 0, 1, 1});
  const Var target({1, 1, 2, 2}, {1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(mae(pred, target).item(), 0.5);
  EXPECT_DOUBLE_EQ(mae(pred, pred).item(), 0.0);
  EXPECT_DOUBLE_EQ(mae(add_scalar(pred, 0.5), pred).item(), 0.5);
  EXPECT_THROW(mae(pred, Var({1, 4}, {0, 0, 0, 0})), InvalidInputError);
  auto p = random_var({2, 1, 3, 3}, 32, true);
  const auto t = random_var({2, 1, 3, 3}, 33);
  expect_gradients([&] { return mae(p, t); }, {p});
}

std::shared_ptr<Measurements> measurements(int b, int h, int w, std::uint64_t seed) {
  auto m = std::make_shared<Measurements>();
  for (int i = 0; i < b; ++i) {
    const auto x = testing::random_image(h, w, seed + i);
    const auto mask = mri::gen_gaussian_mask(w, 2.0, 0.25, seed + i);
    m->kspace.push_back(mri::undersample(mri::fft2c(x), mask));
    m->masks.push_back(mask);
  }
  return m;
}

TEST(Autograd, DataConsistencyMatchesImageLevelOperator) {
  const auto meas = measurements(2, 8, 8, 34);
  const auto pred = random_var({2, 1, 8, 8}, 35);
  for (double lambda : {std::numeric_limits<double>::infinity(), 0.5}) {
    const auto out = data_consistency(pred, meas, mri::DCConfig{lambda});
    for (int i = 0; i < 2; ++i) {
      mri::Image p(8, 8, std::vector<double>(pred.value().begin() + i * 64,
                                             pred.value().begin() + (i + 1) * 64));
      const auto ref = mri::data_consistency(p, meas->kspace[i], meas->masks[i], {lambda});
      for (int k = 0; k < 64; ++k) EXPECT_NEAR(out.value()[i * 64 + k], ref.pixels[k], 1e-12);
    }
  }
}

TEST(Autograd, DataConsistencyGradients) {
  const auto meas = measurements(2, 8, 8, 36);
  auto pred = random_var({2, 1, 8, 8}, 37, true);
  expect_gradients([&] { return probe_loss(data_consistency(pred, meas, {}), 38); }, {pred});
  expect_gradients([&] { return probe_loss(data_consistency(pred, meas, {2.0}), 39); }, {pred});
}

TEST(Autograd, NoGradGuardDetaches) {
  auto x = random_var({2, 2}, 40, true);
  NoGradGuard guard;
  EXPECT_FALSE(scale(x, 2.0).requires_grad());
}

TEST(Autograd, BackwardAccumulatesThroughSharedInputs) {
  auto x = Var({1, 2}, {1.0, 2.0}, true);
  const Var w({1, 2}, {1.0, 1.0});
  const Var b({1}, {0.0});
  // loss = sum(x) + sum(2x) = 3 * sum(x)
  const Var terms[] = {linear(x, w, b), linear(scale(x, 2.0), w, b)};
  backward(add_n(terms));
  EXPECT_EQ(x.grad(), (std::vector<double>{3.0, 3.0}));
}

}  // namespace
}  // namespace signrecon::ag
