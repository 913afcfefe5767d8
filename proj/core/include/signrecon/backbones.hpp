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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "signrecon/autograd.hpp"
#include "signrecon/mri_forward.hpp"
#include "signrecon/params.hpp"
#include "signrecon/side_encoding.hpp"
#include "signrecon/sign_module.hpp"

namespace signrecon::nets {

/// Normalisation after each non-final convolution.
///   kNone      faithful D5C5 / OUCR, no normalisation
///   kInstance  unconditional instance norm (gamma = 1, beta = 0)
///   kSign      side-information-guided normalisation
enum class NormKind { kNone, kInstance, kSign };

enum class BackboneKind { kD5C5, kOUCR };

NormKind parse_norm_kind(std::string_view s);
std::string_view to_string(NormKind k);
BackboneKind parse_backbone(std::string_view s);
std::string_view to_string(BackboneKind k);

struct D5C5Config {
  int n_cascades = 5;
  int convs_per_block = 5;
  int channels = 32;
  int kernel = 3;
  mri::DCConfig dc;
  NormKind norm = NormKind::kSign;

  bool use_sign() const { return norm == NormKind::kSign; }
  void validate() const;
};

struct OUCRConfig {
  int iterations = 5;
  int channels = 32;
  int kernel = 3;
  int refine_convs = 3;
  mri::DCConfig dc;
  NormKind norm = NormKind::kSign;

  bool use_sign() const { return norm == NormKind::kSign; }
  void validate() const;
};

struct ModelConfig {
  BackboneKind backbone = BackboneKind::kD5C5;
  D5C5Config d5c5;
  OUCRConfig oucr;
  side::SideInfoSchema schema = side::SideInfoSchema::defaults();

  NormKind norm() const { return backbone == BackboneKind::kD5C5 ? d5c5.norm : oucr.norm; }
  void validate() const;
};

/// Batch-aligned inputs of one reconstruction step.
struct ReconBatch {
  ag::Var zero_filled;  // [B, 1, H, W]
  ag::Var target;       // [B, 1, H, W]
  std::shared_ptr<const ag::Measurements> measured;
  std::vector<side::SideInfoRecord> side;
  std::vector<int> slice_ids;

  int size() const { return zero_filled.defined() ? zero_filled.dim(0) : 0; }
  void validate() const;
};

struct Conv {
  ag::Var weight;  // [Cout, Cin, k, k]
  ag::Var bias;    // [Cout] or undefined
};

Conv make_conv(ParamSet& params, const std::string& name, int cin, int cout, int kernel,
               bool with_bias, Rng& rng);

/// Normalisation slot after a convolution.
struct NormSite {
  NormKind kind = NormKind::kNone;
  std::optional<sign::SignHead> head;

  ag::Var apply(const ag::Var& x, const side::EncodedSideInfo* side) const;
};

NormSite make_norm_site(ParamSet& params, const std::string& name, NormKind kind, int channels,
                        const side::SideInfoSchema& schema, Rng& rng);

/// One D5C5 CNN block: [conv -> norm -> ReLU] x (n - 1) -> conv, plus the
/// residual connection from the block input.
struct CnnBlockParams {
  std::vector<Conv> convs;
  std::vector<NormSite> norms;  // convs.size() - 1 entries
};

ag::Var cnn_block_forward(const ag::Var& x, const side::EncodedSideInfo* side,
                          const CnnBlockParams& block);

struct ParamBreakdown {
  std::size_t backbone_convs = 0;
  std::size_t sign_heads = 0;
  std::size_t encoders = 0;
  std::size_t total() const { return backbone_convs + sign_heads + encoders; }
};

ParamBreakdown count_parameters(const ParamSet& params);

class ReconModel {
 public:
  virtual ~ReconModel() = default;

  /// Reconstructed magnitude images [B, 1, H, W].
  virtual ag::Var forward(const ReconBatch& batch) const = 0;
  virtual std::string name() const = 0;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  bool uses_sign() const { return norm_ == NormKind::kSign; }
  NormKind norm() const { return norm_; }
  const side::SideInfoSchema& schema() const { return schema_; }

  const side::ContinuousStats& continuous_stats() const { return stats_; }
  void set_continuous_stats(side::ContinuousStats stats) { stats_ = std::move(stats); }
  const side::SideEncoder* encoder() const { return encoder_ ? &*encoder_ : nullptr; }

  /// Parameter listing with shapes and group totals.
  std::string summary() const;

 protected:
  ReconModel(NormKind norm, const side::SideInfoSchema& schema, std::uint64_t seed);

  std::optional<side::EncodedSideInfo> encode(const ReconBatch& batch) const;

  ParamSet params_;
  NormKind norm_;
  side::SideInfoSchema schema_;
  std::optional<side::SideEncoder> encoder_;
  side::ContinuousStats stats_;
};

class D5C5 final : public ReconModel {
 public:
  D5C5(const D5C5Config& cfg, const side::SideInfoSchema& schema, std::uint64_t seed);

  ag::Var forward(const ReconBatch& batch) const override;
  std::string name() const override;

  const D5C5Config& config() const { return cfg_; }
  const std::vector<CnnBlockParams>& blocks() const { return blocks_; }

 private:
  D5C5Config cfg_;
  std::vector<CnnBlockParams> blocks_;
};

/// Over- and under-complete convolutional recurrent network with a refine tail.
///
/// Each iteration runs an under-complete branch (conv -> maxpool -> recurrent
/// cell -> residual block -> upsample -> decoder) and an over-complete branch
/// (conv -> upsample -> recurrent cell -> residual block -> maxpool ->
/// decoder). The recurrent cells carry hidden states across iterations. The
/// two single-channel branch outputs are added to the current estimate and a
/// DC layer follows. A refine block and a final DC close the network.
class OUCR final : public ReconModel {
 public:
  OUCR(const OUCRConfig& cfg, const side::SideInfoSchema& schema, std::uint64_t seed);

  ag::Var forward(const ReconBatch& batch) const override;
  std::string name() const override;

  const OUCRConfig& config() const { return cfg_; }

 private:
  struct Branch {
    Conv enc;
    NormSite enc_norm;
    Conv cell_x;
    Conv cell_h;  // no bias
    NormSite cell_norm;
    Conv res1;
    NormSite res1_norm;
    Conv res2;
    NormSite res2_norm;
    Conv dec1;
    NormSite dec1_norm;
    Conv dec2;  // last decoder conv, no normalisation
  };

  Branch make_branch(const std::string& name, Rng& conv_rng, Rng& sign_rng);
  ag::Var run_branch(const Branch& br, const ag::Var& x, ag::Var& hidden, bool over_complete,
                     const side::EncodedSideInfo* side) const;

  OUCRConfig cfg_;
  Branch uc_;
  Branch oc_;
  std::vector<Conv> refine_;
  std::vector<NormSite> refine_norms_;
};

std::unique_ptr<ReconModel> make_model(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace signrecon::nets
