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
#include <span>
#include <string>
#include <vector>

#include "signrecon/autograd.hpp"
#include "signrecon/params.hpp"

namespace signrecon::side {

/// Categorical id of a masked-out branch; it contributes nothing to the SIGN merge.
inline constexpr int kNullId = -1;

struct CategoricalField {
  std::string name;
  std::vector<std::string> vocabulary;

  /// Index of `token`, or -1.
  int index_of(std::string_view token) const;
};

struct SideInfoSchema {
  std::vector<CategoricalField> categorical;
  std::vector<std::string> continuous;
  int embed_dim = 32;

  /// contrast / view / source plus TR, TE, flip angle.
  static SideInfoSchema defaults();

  void validate() const;
  int n_categorical() const { return static_cast<int>(categorical.size()); }
  int n_continuous() const { return static_cast<int>(continuous.size()); }
  int categorical_index(std::string_view name) const;
  int continuous_index(std::string_view name) const;
  bool has_field(std::string_view name) const;
};

/// s = [s_e, s_c] for one image.
struct SideInfoRecord {
  std::vector<int> categorical_ids;
  std::vector<double> continuous_values;       // raw units (ms, degrees)
  std::vector<std::uint8_t> continuous_known;  // 0 = unknown, coded as zero
  std::vector<std::uint8_t> continuous_masked; // set by the mask ablation

  void validate(const SideInfoSchema& schema) const;
  /// True when every continuous field is masked, which drops the continuous branch.
  bool continuous_branch_masked() const;

  friend bool operator==(const SideInfoRecord&, const SideInfoRecord&) = default;
};

/// Per-field z-score statistics over the known entries of a training split.
struct ContinuousStats {
  std::vector<double> mean;
  std::vector<double> std;

  static ContinuousStats from_records(std::span<const SideInfoRecord> train, int n_continuous);
};

/// Branch vectors entering every SIGN head: n1 categorical branches followed by
/// the continuous branch, each [B, embed_dim], plus a per-sample keep flag.
struct EncodedSideInfo {
  std::vector<ag::Var> branches;
  std::vector<std::vector<std::uint8_t>> keep;

  int batch() const { return branches.empty() ? 0 : branches.front().dim(0); }
  int embed_dim() const { return branches.empty() ? 0 : branches.front().dim(1); }
};

/// Learned embedding tables (one per categorical field) and the linear map of
/// standardised continuous parameters. Shared by every SIGN head of a model.
class SideEncoder {
 public:
  SideEncoder() = default;
  SideEncoder(const SideInfoSchema& schema, ParamSet& params, Rng& rng);

  EncodedSideInfo encode(std::span<const SideInfoRecord> batch, const ContinuousStats& stats) const;

  const SideInfoSchema& schema() const { return schema_; }
  const std::vector<ag::Var>& tables() const { return tables_; }
  const ag::Var& continuous_weight() const { return cont_weight_; }
  const ag::Var& continuous_bias() const { return cont_bias_; }

 private:
  SideInfoSchema schema_;
  std::vector<ag::Var> tables_;
  ag::Var cont_weight_;  // [embed_dim, n2]
  ag::Var cont_bias_;    // [embed_dim]
};

/// V_e^i for each categorical field (zero vector for a null id).
std::vector<std::vector<double>> encode_categorical(const SideInfoRecord& rec,
                                                    std::span<const ag::Var> tables);

/// Known entries -> (value - mean) / std; unknown or masked -> exactly 0.
std::vector<double> normalize_continuous(const SideInfoRecord& rec, const ContinuousStats& stats);

/// V_c = W z + b.
std::vector<double> encode_continuous(std::span<const double> z, const ag::Var& weight,
                                      const ag::Var& bias);

enum class CorruptionMode { kRandom, kWrong, kMask };

CorruptionMode parse_corruption_mode(std::string_view s);
std::string_view to_string(CorruptionMode mode);

/// random: selected categorical fields resampled uniformly (seeded).
/// wrong: selected categorical fields shifted cyclically by one vocabulary entry.
/// mask: selected categorical fields set to kNullId, selected continuous fields zeroed.
SideInfoRecord corrupt_side_info(const SideInfoRecord& rec, const SideInfoSchema& schema,
                                 CorruptionMode mode, std::span<const std::string> fields,
                                 std::uint64_t seed);

}  // namespace signrecon::side
