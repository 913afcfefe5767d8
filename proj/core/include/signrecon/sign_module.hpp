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

#include <span>
#include <string>
#include <vector>

#include "signrecon/autograd.hpp"
#include "signrecon/params.hpp"
#include "signrecon/side_encoding.hpp"

namespace signrecon::sign {

inline constexpr double kNormEps = 1e-5;

/// Per-sample, per-channel scale and shift, each [B, C].
struct AffinePair {
  ag::Var gamma;
  ag::Var beta;
};

/// One SIGN sub-network, owned by a single insertion site.
///
/// Every side-information branch goes through its own block
/// (fully-connected -> layer norm -> ReLU) of width C. Block outputs are summed
/// and mapped by a linear output head to 2C values (delta_gamma, beta); the
/// returned gamma is 1 + delta_gamma. The output head starts at zero, so a
/// fresh head is exactly an unconditional instance norm.
class SignHead {
 public:
  struct Branch {
    ag::Var weight;   // [C, embed_dim]
    ag::Var bias;     // [C]
    ag::Var ln_gain;  // [C]
    ag::Var ln_bias;  // [C]
  };

  SignHead() = default;
  SignHead(const std::string& prefix, int n_branches, int embed_dim, int channels,
           ParamSet& params, Rng& rng);

  AffinePair forward(const side::EncodedSideInfo& enc) const;

  int channels() const { return channels_; }
  int embed_dim() const { return embed_dim_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const ag::Var& head_weight() const { return head_weight_; }  // [2C, C]
  const ag::Var& head_bias() const { return head_bias_; }      // [2C]

 private:
  int channels_ = 0;
  int embed_dim_ = 0;
  std::vector<Branch> branches_;
  ag::Var head_weight_;
  ag::Var head_bias_;
};

inline AffinePair sign_forward(const side::EncodedSideInfo& enc, const SignHead& head) {
  return head.forward(enc);
}

/// gamma_c * (h - mu) / (sigma + eps) + beta_c over each sample-channel slab,
/// population standard deviation.
ag::Var conditional_instance_norm(const ag::Var& h, const AffinePair& ab,
                                  double eps = kNormEps);

/// Plain instance norm (gamma = 1, beta = 0).
ag::Var instance_norm(const ag::Var& h, double eps = kNormEps);

std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias, double eps = kNormEps);

}  // namespace signrecon::sign
