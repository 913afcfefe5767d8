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

#include "signrecon/sign_module.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "signrecon/errors.hpp"
#include "test_util.hpp"

namespace signrecon::sign {
namespace {

using testing::random_var;

side::EncodedSideInfo random_encoding(int branches, int batch, int dim, std::uint64_t seed) {
  side::EncodedSideInfo enc;
  for (int i = 0; i < branches; ++i) {
    enc.branches.push_back(random_var({batch, dim}, seed + i, true));
    enc.keep.emplace_back(static_cast<std::size_t>(batch), 1);
  }
  return enc;
}

void randomise(ParamSet& params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params.items())
    for (auto& v : p.var.mutable_value()) v = 0.5 * rng.normal();
}

TEST(SignHead, ZeroHeadGivesIdentityAffine) {
  ParamSet params;
  Rng rng(1);
  const SignHead head("h", 4, 6, 5, params, rng);
  const auto ab = sign_forward(random_encoding(4, 3, 6, 10), head);
  for (double g : ab.gamma.value()) EXPECT_EQ(g, 1.0);
  for (double b : ab.beta.value()) EXPECT_EQ(b, 0.0);
}

TEST(SignHead, ZeroInputsAndBiasesGiveZeroMerge) {
  ParamSet params;
  Rng rng(2);
  SignHead head("h", 3, 4, 3, params, rng);
  randomise(params, 3);
  for (const auto& br : head.branches()) {
    auto b = br.bias;
    std::fill(b.mutable_value().begin(), b.mutable_value().end(), 0.0);
    auto lb = br.ln_bias;
    std::fill(lb.mutable_value().begin(), lb.mutable_value().end(), 0.0);
  }
  side::EncodedSideInfo enc;
  for (int i = 0; i < 3; ++i) {
    enc.branches.push_back(ag::Var::zeros({2, 4}));
    enc.keep.push_back({1, 1});
  }
  const auto ab = head.forward(enc);
  // A zero merge leaves only the head bias: gamma = 1 + bias[:C], beta = bias[C:].
  const auto& hb = head.head_bias().value();
  for (int c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(ab.gamma.value()[c], 1.0 + hb[c]);
    EXPECT_DOUBLE_EQ(ab.beta.value()[c], hb[3 + c]);
  }
}

TEST(SignHead, HandComputedTwoByTwo) {
  ParamSet params;
  Rng rng(4);
  SignHead head("h", 1, 2, 2, params, rng);
  const auto& br = head.branches()[0];
  auto w = br.weight;
  w.mutable_value() = {1, 0, 0, 1};
  auto hw = head.head_weight();
  hw.mutable_value() = {1, 0, 0, 1, 1, 0, 0, 1};
  side::EncodedSideInfo enc;
  enc.branches.push_back(ag::Var({1, 2}, {1.0, -1.0}));
  enc.keep.push_back({1});
  const auto ab = head.forward(enc);
  // FC: (1, -1). LN: mean 0, population std 1 -> (1, -1) / (1 + eps). ReLU: (a, 0).
  // Head [I; I]: (a, 0, a, 0).
  const double a = 1.0 / (1.0 + kNormEps);
  EXPECT_DOUBLE_EQ(ab.gamma.value()[0], 1.0 + a);
  EXPECT_DOUBLE_EQ(ab.gamma.value()[1], 1.0);
  EXPECT_DOUBLE_EQ(ab.beta.value()[0], a);
  EXPECT_DOUBLE_EQ(ab.beta.value()[1], 0.0);
}

TEST(SignHead, MaskedBranchEqualsZeroedContribution) {
  ParamSet params;
  Rng rng(5);
  SignHead head("h", 3, 4, 3, params, rng);
  randomise(params, 6);
  auto enc = random_encoding(3, 2, 4, 20);
  enc.keep[1] = {0, 1};
  const auto masked = head.forward(enc);

  // Manual merge with branch 1 of sample 0 left out.
  std::vector<double> merged(6, 0.0);
  for (int i = 0; i < 3; ++i) {
    const auto& br = head.branches()[i];
    auto h = ag::relu(ag::layer_norm(ag::linear(enc.branches[i], br.weight, br.bias), br.ln_gain,
                                     br.ln_bias, kNormEps));
    for (int s = 0; s < 2; ++s) {
      if (i == 1 && s == 0) continue;
      for (int c = 0; c < 3; ++c) merged[s * 3 + c] += h.value()[s * 3 + c];
    }
  }
  const auto out = ag::linear(ag::Var({2, 3}, merged), head.head_weight(), head.head_bias());
  for (int s = 0; s < 2; ++s)
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(masked.gamma.value()[s * 3 + c], 1.0 + out.value()[s * 6 + c], 1e-12);
      EXPECT_NEAR(masked.beta.value()[s * 3 + c], out.value()[s * 6 + 3 + c], 1e-12);
    }
}

TEST(SignHead, SensitiveToSideInformationOnceTrained) {
  ParamSet params;
  Rng rng(7);
  SignHead head("h", 2, 4, 3, params, rng);
  randomise(params, 8);
  auto a = random_encoding(2, 1, 4, 30);
  auto b = a;
  b.branches[0] = random_var({1, 4}, 99);
  EXPECT_GT(testing::max_abs_diff(head.forward(a).gamma.value(), head.forward(b).gamma.value()),
            1e-6);
}

TEST(SignHead, RejectsMismatchedEncoding) {
  ParamSet params;
  Rng rng(9);
  SignHead head("h", 2, 4, 3, params, rng);
  EXPECT_THROW(head.forward(random_encoding(3, 1, 4, 1)), InvalidInputError);
  EXPECT_THROW(head.forward(random_encoding(2, 1, 5, 1)), InvalidInputError);
}

TEST(SignHead, GradientsForEveryParameterGroup) {
  ParamSet params;
  Rng rng(10);
  SignHead head("h", 3, 4, 3, params, rng);
  randomise(params, 11);
  auto enc = random_encoding(3, 2, 4, 40);
  auto h = random_var({2, 3, 4, 4}, 41, true);
  auto build = [&] {
    return testing::probe_loss(conditional_instance_norm(h, head.forward(enc)), 42);
  };
  std::vector<ag::Var> all{h};
  for (const auto& p : params.items()) all.push_back(p.var);
  for (const auto& v : enc.branches) all.push_back(v);
  for (const auto& v : all) {
    const auto a = testing::analytic_grad(build, all, v);
    const auto n = testing::numeric_grad([&] { return build().item(); }, v);
    EXPECT_LT(testing::relative_error(a, n), 1e-5);
  }
}

TEST(ConditionalInstanceNorm, HandComputedSlab) {
  const ag::Var h({1, 1, 2, 2}, {1, 2, 3, 4});
  const AffinePair ab{ag::Var({1, 1}, {2.0}), ag::Var({1, 1}, {1.0})};
  const auto y = conditional_instance_norm(h, ab);
  const double sigma = std::sqrt(1.25);  // population std of (1, 2, 3, 4)
  const double x[] = {1, 2, 3, 4};
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(y.value()[i], 2.0 * (x[i] - 2.5) / (sigma + kNormEps) + 1.0, 1e-12);
  }
}

TEST(ConditionalInstanceNorm, ConstantSlabMapsToBeta) {
  const ag::Var h({1, 1, 3, 3}, std::vector<double>(9, 5.0));
  const auto y = instance_norm(h);
  for (double v : y.value()) EXPECT_EQ(v, 0.0);
}

TEST(ConditionalInstanceNorm, IdentityAtInitEqualsPlainInstanceNorm) {
  for (int trial = 0; trial < 10; ++trial) {
    ParamSet params;
    Rng rng(100 + trial);
    const SignHead head("h", 4, 8, 6, params, rng);
    const auto h = random_var({2, 6, 5, 7}, 200 + trial);
    const auto cin = conditional_instance_norm(h, head.forward(random_encoding(4, 2, 8, trial)));
    EXPECT_EQ(cin.value(), instance_norm(h).value());
  }
}

TEST(ConditionalInstanceNorm, ShapeContract) {
  for (auto shape : {ag::Shape{1, 1, 2, 2}, ag::Shape{3, 4, 5, 6}, ag::Shape{2, 8, 16, 1}}) {
    ParamSet params;
    Rng rng(1);
    const SignHead head("h", 2, 3, shape[1], params, rng);
    const auto y = conditional_instance_norm(random_var(shape, 2),
                                             head.forward(random_encoding(2, shape[0], 3, 3)));
    EXPECT_EQ(y.shape(), shape);
  }
}

TEST(LayerNorm, Examples) {
  const std::vector<double> ones{1, 1}, zeros{0, 0};
  for (double v : layer_norm(std::vector<double>{3, 3}, ones, zeros)) EXPECT_EQ(v, 0.0);
  const auto y = layer_norm(std::vector<double>{1, -1}, ones, zeros);
  EXPECT_NEAR(y[0], 1.0, 1e-4);
  EXPECT_NEAR(y[1], -1.0, 1e-4);
  const std::vector<double> bias{0.3, -0.7};
  EXPECT_EQ(layer_norm(std::vector<double>{5, -2}, zeros, bias), bias);
}

}  // namespace
}  // namespace signrecon::sign
