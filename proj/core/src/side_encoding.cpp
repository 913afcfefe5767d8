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

#include "signrecon/side_encoding.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "signrecon/errors.hpp"

namespace signrecon::side {

int CategoricalField::index_of(std::string_view token) const {
  for (std::size_t i = 0; i < vocabulary.size(); ++i)
    if (vocabulary[i] == token) return static_cast<int>(i);
  return -1;
}

SideInfoSchema SideInfoSchema::defaults() {
  SideInfoSchema s;
  s.categorical = {
      {"contrast", {"T1w", "T2w", "PDw", "MRA", "T2w-FS", "PDw-FS", "DESS"}},
      {"view", {"axial", "sagittal", "coronal"}},
      {"source", {"Siemens", "Philips", "GE", "unknown"}},
  };
  s.continuous = {"TR", "TE", "flip_angle"};
  s.embed_dim = 32;
  return s;
}

void SideInfoSchema::validate() const {
  if (embed_dim < 1) throw ConfigError("schema: embed_dim must be positive");
  std::set<std::string> names;
  for (const auto& f : categorical) {
    if (f.vocabulary.empty()) throw ConfigError("schema: empty vocabulary for " + f.name);
    std::set<std::string> uniq(f.vocabulary.begin(), f.vocabulary.end());
    if (uniq.size() != f.vocabulary.size()) {
      throw ConfigError("schema: duplicate vocabulary entry in " + f.name);
    }
    if (!names.insert(f.name).second) throw ConfigError("schema: duplicate field " + f.name);
  }
  for (const auto& c : continuous)
    if (!names.insert(c).second) throw ConfigError("schema: duplicate field " + c);
}

int SideInfoSchema::categorical_index(std::string_view name) const {
  for (std::size_t i = 0; i < categorical.size(); ++i)
    if (categorical[i].name == name) return static_cast<int>(i);
  return -1;
}

int SideInfoSchema::continuous_index(std::string_view name) const {
  for (std::size_t i = 0; i < continuous.size(); ++i)
    if (continuous[i] == name) return static_cast<int>(i);
  return -1;
}

bool SideInfoSchema::has_field(std::string_view name) const {
  return categorical_index(name) >= 0 || continuous_index(name) >= 0;
}

void SideInfoRecord::validate(const SideInfoSchema& schema) const {
  if (categorical_ids.size() != schema.categorical.size()) {
    throw InvalidInputError("side info: expected " + std::to_string(schema.categorical.size()) +
                            " categorical ids");
  }
  for (std::size_t i = 0; i < categorical_ids.size(); ++i) {
    const int id = categorical_ids[i];
    const int vocab = static_cast<int>(schema.categorical[i].vocabulary.size());
    if (id != kNullId && (id < 0 || id >= vocab)) {
      throw InvalidInputError("side info: id " + std::to_string(id) + " out of range for " +
                              schema.categorical[i].name);
    }
  }
  const auto n2 = schema.continuous.size();
  if (continuous_values.size() != n2 || continuous_known.size() != n2 ||
      continuous_masked.size() != n2) {
    throw InvalidInputError("side info: expected " + std::to_string(n2) + " continuous fields");
  }
  for (double v : continuous_values)
    if (!std::isfinite(v)) throw InvalidInputError("side info: non-finite continuous value");
}

bool SideInfoRecord::continuous_branch_masked() const {
  return !continuous_masked.empty() &&
         std::all_of(continuous_masked.begin(), continuous_masked.end(),
                     [](std::uint8_t m) { return m != 0; });
}

ContinuousStats ContinuousStats::from_records(std::span<const SideInfoRecord> train,
                                              int n_continuous) {
  ContinuousStats st;
  st.mean.assign(n_continuous, 0.0);
  st.std.assign(n_continuous, 1.0);
  for (int f = 0; f < n_continuous; ++f) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : train)
      if (r.continuous_known[f]) {
        sum += r.continuous_values[f];
        ++n;
      }
    if (n == 0) continue;
    const double mean = sum / static_cast<double>(n);
    double var = 0.0;
    for (const auto& r : train)
      if (r.continuous_known[f]) {
        const double d = r.continuous_values[f] - mean;
        var += d * d;
      }
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (!(sd > 0.0)) {
      throw ConfigError("continuous field " + std::to_string(f) +
                        " has zero spread on the training split");
    }
    st.mean[f] = mean;
    st.std[f] = sd;
  }
  return st;
}

SideEncoder::SideEncoder(const SideInfoSchema& schema, ParamSet& params, Rng& rng)
    : schema_(schema) {
  schema_.validate();
  const int d = schema_.embed_dim;
  for (const auto& f : schema_.categorical) {
    const auto vocab = static_cast<int>(f.vocabulary.size());
    tables_.push_back(params.add("embed." + f.name, ParamGroup::kEmbedding, false, {vocab, d},
                                 normal_init(static_cast<std::size_t>(vocab) * d, 1.0, rng)));
  }
  const int n2 = schema_.n_continuous();
  cont_weight_ = params.add("continuous.weight", ParamGroup::kContinuousMap, true, {d, n2},
                            he_normal(static_cast<std::size_t>(d) * n2, std::max(n2, 1), rng));
  cont_bias_ = params.add("continuous.bias", ParamGroup::kContinuousMap, false, {d},
                          std::vector<double>(static_cast<std::size_t>(d), 0.0));
}

EncodedSideInfo SideEncoder::encode(std::span<const SideInfoRecord> batch,
                                    const ContinuousStats& stats) const {
  const int b = static_cast<int>(batch.size());
  for (const auto& rec : batch) rec.validate(schema_);
  EncodedSideInfo enc;
  for (int f = 0; f < schema_.n_categorical(); ++f) {
    std::vector<int> ids(b);
    std::vector<std::uint8_t> keep(b);
    for (int i = 0; i < b; ++i) {
      ids[i] = batch[i].categorical_ids[f];
      keep[i] = ids[i] != kNullId;
    }
    enc.branches.push_back(ag::embedding(tables_[f], ids));
    enc.keep.push_back(std::move(keep));
  }
  const int n2 = schema_.n_continuous();
  std::vector<double> z;
  z.reserve(static_cast<std::size_t>(b) * n2);
  std::vector<std::uint8_t> keep(b);
  for (int i = 0; i < b; ++i) {
    auto zi = normalize_continuous(batch[i], stats);
    z.insert(z.end(), zi.begin(), zi.end());
    keep[i] = !batch[i].continuous_branch_masked();
  }
  enc.branches.push_back(ag::linear(ag::Var({b, n2}, std::move(z)), cont_weight_, cont_bias_));
  enc.keep.push_back(std::move(keep));
  return enc;
}

std::vector<std::vector<double>> encode_categorical(const SideInfoRecord& rec,
                                                    std::span<const ag::Var> tables) {
  if (rec.categorical_ids.size() != tables.size()) {
    throw InvalidInputError("encode_categorical: one table per categorical field required");
  }
  std::vector<std::vector<double>> out;
  for (std::size_t f = 0; f < tables.size(); ++f) {
    const int id = rec.categorical_ids[f];
    if (id != kNullId && (id < 0 || id >= tables[f].dim(0))) {
      throw InvalidInputError("encode_categorical: id " + std::to_string(id) +
                              " out of vocabulary range");
    }
    const int ids[] = {id};
    out.push_back(ag::embedding(tables[f], ids).value());
  }
  return out;
}

std::vector<double> normalize_continuous(const SideInfoRecord& rec, const ContinuousStats& stats) {
  const std::size_t n2 = rec.continuous_values.size();
  if (stats.mean.size() != n2 || stats.std.size() != n2) {
    throw InvalidInputError("normalize_continuous: statistics do not match record");
  }
  std::vector<double> z(n2, 0.0);
  for (std::size_t f = 0; f < n2; ++f) {
    const bool masked = !rec.continuous_masked.empty() && rec.continuous_masked[f];
    if (rec.continuous_known[f] && !masked) {
      z[f] = (rec.continuous_values[f] - stats.mean[f]) / stats.std[f];
    }
  }
  return z;
}

std::vector<double> encode_continuous(std::span<const double> z, const ag::Var& weight,
                                      const ag::Var& bias) {
  if (weight.shape().size() != 2 || weight.dim(1) != static_cast<int>(z.size()) ||
      bias.numel() != static_cast<std::size_t>(weight.dim(0))) {
    throw InvalidInputError("encode_continuous: shape mismatch");
  }
  ag::Var zv({1, static_cast<int>(z.size())}, std::vector<double>(z.begin(), z.end()));
  return ag::linear(zv, weight, bias).value();
}

CorruptionMode parse_corruption_mode(std::string_view s) {
  if (s == "random") return CorruptionMode::kRandom;
  if (s == "wrong") return CorruptionMode::kWrong;
  if (s == "mask") return CorruptionMode::kMask;
  throw ConfigError("unknown corruption mode '" + std::string(s) + "'");
}

std::string_view to_string(CorruptionMode mode) {
  switch (mode) {
    case CorruptionMode::kRandom: return "random";
    case CorruptionMode::kWrong: return "wrong";
    case CorruptionMode::kMask: return "mask";
  }
  return "?";
}

SideInfoRecord corrupt_side_info(const SideInfoRecord& rec, const SideInfoSchema& schema,
                                 CorruptionMode mode, std::span<const std::string> fields,
                                 std::uint64_t seed) {
  rec.validate(schema);
  std::vector<int> cat_sel, cont_sel;
  for (const auto& name : fields) {
    if (const int ci = schema.categorical_index(name); ci >= 0) {
      cat_sel.push_back(ci);
    } else if (const int ki = schema.continuous_index(name); ki >= 0) {
      cont_sel.push_back(ki);
    } else {
      throw ConfigError("corrupt_side_info: unknown field '" + name + "'");
    }
  }
  SideInfoRecord out = rec;
  if (mode != CorruptionMode::kMask && cat_sel.empty()) {
    throw ConfigError("corrupt_side_info: random/wrong modes need at least one categorical field");
  }
  Rng rng(derive_seed(seed, "corruption"));
  for (int f : cat_sel) {
    const int vocab = static_cast<int>(schema.categorical[f].vocabulary.size());
    int& id = out.categorical_ids[f];
    switch (mode) {
      case CorruptionMode::kRandom:
        id = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab)));
        break;
      case CorruptionMode::kWrong:
        if (vocab < 2) {
          throw ConfigError("corrupt_side_info: field " + schema.categorical[f].name +
                            " has no alternative value");
        }
        id = id == kNullId ? 0 : (id + 1) % vocab;
        break;
      case CorruptionMode::kMask:
        id = kNullId;
        break;
    }
  }
  if (mode == CorruptionMode::kMask) {
    for (int f : cont_sel) {
      out.continuous_values[f] = 0.0;
      out.continuous_known[f] = 0;
      out.continuous_masked[f] = 1;
    }
  }
  return out;
}

}  // namespace signrecon::side
