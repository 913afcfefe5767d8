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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "signrecon/autograd.hpp"
#include "signrecon/random.hpp"

namespace signrecon {

/// Which part of the model a learnable tensor belongs to. Drives freezing
/// (convolutions are frozen during SIGN fine-tuning) and parameter counts.
enum class ParamGroup {
  kConvWeight,
  kConvBias,
  kEmbedding,       // categorical side-information tables
  kContinuousMap,   // linear map of continuous side information
  kSignBranch,      // per-branch fully-connected layers inside a SIGN head
  kSignLayerNorm,   // layer-norm gain/bias inside a SIGN head
  kSignOutput,      // output head producing (delta gamma, beta)
};

std::string_view to_string(ParamGroup group);

/// True for groups that are convolutional (frozen during fine-tuning).
bool is_conv_group(ParamGroup group);

struct Param {
  std::string name;
  ParamGroup group;
  bool weight_decay;
  ag::Var var;
};

/// Ordered registry of learnable tensors. Order is the serialisation order.
class ParamSet {
 public:
  ag::Var add(std::string name, ParamGroup group, bool weight_decay, ag::Shape shape,
              std::vector<double> init);

  const std::vector<Param>& items() const { return items_; }
  std::vector<Param>& items() { return items_; }
  std::size_t size() const { return items_.size(); }

  std::size_t scalar_count() const;
  std::size_t scalar_count(ParamGroup group) const;

  void zero_grad();

  /// FNV-1a over the raw bytes of every parameter of the selected groups.
  std::uint64_t hash(bool conv_only = false) const;

  /// Copies of every parameter's values, in registry order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<Param> items_;
};

/// He-normal initialisation, std = sqrt(2 / fan_in).
std::vector<double> he_normal(std::size_t count, int fan_in, Rng& rng);
std::vector<double> normal_init(std::size_t count, double std, Rng& rng);

}  // namespace signrecon
