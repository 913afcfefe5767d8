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

#include "signrecon/errors.hpp"

namespace signrecon::sign {

SignHead::SignHead(const std::string& prefix, int n_branches, int embed_dim, int channels,
                   ParamSet& params, Rng& rng)
    : channels_(channels), embed_dim_(embed_dim) {
  if (n_branches < 1 || embed_dim < 1 || channels < 1) {
    throw ConfigError("SignHead: branches, embed_dim and channels must be positive");
  }
  const auto c = static_cast<std::size_t>(channels);
  for (int i = 0; i < n_branches; ++i) {
    const std::string p = prefix + ".branch" + std::to_string(i);
    Branch b;
    b.weight = params.add(p + ".fc.weight", ParamGroup::kSignBranch, true, {channels, embed_dim},
                          he_normal(c * embed_dim, embed_dim, rng));
    b.bias = params.add(p + ".fc.bias", ParamGroup::kSignBranch, false, {channels},
                        std::vector<double>(c, 0.0));
    b.ln_gain = params.add(p + ".ln.gain", ParamGroup::kSignLayerNorm, false, {channels},
                           std::vector<double>(c, 1.0));
    b.ln_bias = params.add(p + ".ln.bias", ParamGroup::kSignLayerNorm, false, {channels},
                           std::vector<double>(c, 0.0));
    branches_.push_back(std::move(b));
  }
  head_weight_ = params.add(prefix + ".head.weight", ParamGroup::kSignOutput, true,
                            {2 * channels, channels}, std::vector<double>(2 * c * c, 0.0));
  head_bias_ = params.add(prefix + ".head.bias", ParamGroup::kSignOutput, false, {2 * channels},
                          std::vector<double>(2 * c, 0.0));
}

AffinePair SignHead::forward(const side::EncodedSideInfo& enc) const {
  if (enc.branches.size() != branches_.size()) {
    throw InvalidInputError("SignHead: expected " + std::to_string(branches_.size()) +
                            " side-information branches, got " +
                            std::to_string(enc.branches.size()));
  }
  std::vector<ag::Var> terms;
  terms.reserve(branches_.size());
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const auto& v = enc.branches[i];
    if (v.shape().size() != 2 || v.dim(1) != embed_dim_) {
      throw InvalidInputError("SignHead: branch vectors must have length " +
                              std::to_string(embed_dim_));
    }
    const auto& br = branches_[i];
    ag::Var h = ag::linear(v, br.weight, br.bias);
    h = ag::layer_norm(h, br.ln_gain, br.ln_bias, kNormEps);
    h = ag::relu(h);
    terms.push_back(ag::row_mask(h, enc.keep[i]));
  }
  const ag::Var merged = ag::add_n(terms);
  const ag::Var out = ag::linear(merged, head_weight_, head_bias_);
  return {ag::add_scalar(ag::slice_cols(out, 0, channels_), 1.0),
          ag::slice_cols(out, channels_, 2 * channels_)};
}

ag::Var conditional_instance_norm(const ag::Var& h, const AffinePair& ab, double eps) {
  if (ab.gamma.defined() && h.shape().size() == 4 && ab.gamma.dim(1) != h.dim(1)) {
    throw InvalidInputError("conditional_instance_norm: gamma has " +
                            std::to_string(ab.gamma.dim(1)) + " channels, feature map has " +
                            std::to_string(h.dim(1)));
  }
  return ag::instance_norm(h, ab.gamma, ab.beta, eps);
}

ag::Var instance_norm(const ag::Var& h, double eps) { return ag::instance_norm(h, {}, {}, eps); }

std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias, double eps) {
  const int n = static_cast<int>(v.size());
  if (n < 1) throw InvalidInputError("layer_norm: empty vector");
  ag::Var x({1, n}, std::vector<double>(v.begin(), v.end()));
  ag::Var g({n}, std::vector<double>(gain.begin(), gain.end()));
  ag::Var b({n}, std::vector<double>(bias.begin(), bias.end()));
  return ag::layer_norm(x, g, b, eps).value();
}

}  // namespace signrecon::sign
