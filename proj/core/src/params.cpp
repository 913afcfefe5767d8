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

#include "signrecon/params.hpp"

#include <cmath>
#include <cstring>

#include "signrecon/errors.hpp"

namespace signrecon {

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kConvWeight: return "conv_weight";
    case ParamGroup::kConvBias: return "conv_bias";
    case ParamGroup::kEmbedding: return "embedding";
    case ParamGroup::kContinuousMap: return "continuous_map";
    case ParamGroup::kSignBranch: return "sign_branch";
    case ParamGroup::kSignLayerNorm: return "sign_layer_norm";
    case ParamGroup::kSignOutput: return "sign_output";
  }
  return "unknown";
}

bool is_conv_group(ParamGroup group) {
  return group == ParamGroup::kConvWeight || group == ParamGroup::kConvBias;
}

ag::Var ParamSet::add(std::string name, ParamGroup group, bool weight_decay, ag::Shape shape,
                      std::vector<double> init) {
  ag::Var v(std::move(shape), std::move(init), /*requires_grad=*/true);
  items_.push_back(Param{std::move(name), group, weight_decay, v});
  return v;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.var.numel();
  return n;
}

std::size_t ParamSet::scalar_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& p : items_)
    if (p.group == group) n += p.var.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : items_) p.var.zero_grad();
}

std::uint64_t ParamSet::hash(bool conv_only) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : items_) {
    if (conv_only && !is_conv_group(p.group)) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.var.value().data());
    for (std::size_t i = 0; i < p.var.numel() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::vector<std::vector<double>> ParamSet::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p.var.value());
  return out;
}

void ParamSet::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != items_.size()) {
    throw InvalidInputError("ParamSet::restore: expected " + std::to_string(items_.size()) +
                            " tensors, got " + std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto& dst = items_[i].var.mutable_value();
    if (dst.size() != values[i].size()) {
      throw InvalidInputError("ParamSet::restore: size mismatch for " + items_[i].name);
    }
    dst = values[i];
  }
}

std::vector<double> he_normal(std::size_t count, int fan_in, Rng& rng) {
  return normal_init(count, std::sqrt(2.0 / fan_in), rng);
}

std::vector<double> normal_init(std::size_t count, double std, Rng& rng) {
  std::vector<double> v(count);
  for (auto& x : v) x = std * rng.normal();
  return v;
}

}  // namespace signrecon
