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

#include "signrecon/backbones.hpp"

#include <iomanip>
#include <sstream>

#include "signrecon/errors.hpp"

namespace signrecon::nets {

NormKind parse_norm_kind(std::string_view s) {
  if (s == "none") return NormKind::kNone;
  if (s == "instance") return NormKind::kInstance;
  if (s == "sign") return NormKind::kSign;
  throw ConfigError("unknown norm '" + std::string(s) + "' (expected none, instance or sign)");
}

std::string_view to_string(NormKind k) {
  switch (k) {
    case NormKind::kNone: return "none";
    case NormKind::kInstance: return "instance";
    case NormKind::kSign: return "sign";
  }
  return "?";
}

BackboneKind parse_backbone(std::string_view s) {
  if (s == "d5c5") return BackboneKind::kD5C5;
  if (s == "oucr") return BackboneKind::kOUCR;
  throw ConfigError("unknown backbone '" + std::string(s) + "' (expected d5c5 or oucr)");
}

std::string_view to_string(BackboneKind k) {
  return k == BackboneKind::kD5C5 ? "d5c5" : "oucr";
}

void D5C5Config::validate() const {
  if (n_cascades < 1) throw ConfigError("d5c5: n_cascades must be >= 1");
  if (convs_per_block < 2) throw ConfigError("d5c5: convs_per_block must be >= 2");
  if (channels < 1) throw ConfigError("d5c5: channels must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("d5c5: kernel must be odd");
  dc.validate();
}

void OUCRConfig::validate() const {
  if (iterations < 1) throw ConfigError("oucr: iterations must be >= 1");
  if (channels < 1) throw ConfigError("oucr: channels must be >= 1");
  if (refine_convs < 2) throw ConfigError("oucr: refine_convs must be >= 2");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("oucr: kernel must be odd");
  dc.validate();
}

void ModelConfig::validate() const {
  schema.validate();
  if (backbone == BackboneKind::kD5C5) d5c5.validate();
  else oucr.validate();
}

void ReconBatch::validate() const {
  if (!zero_filled.defined() || zero_filled.shape().size() != 4 || zero_filled.dim(1) != 1) {
    throw InvalidInputError("ReconBatch: zero-filled images must be [B, 1, H, W]");
  }
  const auto b = static_cast<std::size_t>(zero_filled.dim(0));
  if (!measured || measured->kspace.size() != b || measured->masks.size() != b ||
      side.size() != b) {
    throw InvalidInputError("ReconBatch: inconsistent batch size");
  }
  if (target.defined() && target.shape() != zero_filled.shape()) {
    throw InvalidInputError("ReconBatch: target shape differs from input");
  }
}

Conv make_conv(ParamSet& params, const std::string& name, int cin, int cout, int kernel,
               bool with_bias, Rng& rng) {
  Conv c;
  const auto n = static_cast<std::size_t>(cout) * cin * kernel * kernel;
  c.weight = params.add(name + ".weight", ParamGroup::kConvWeight, true,
                        {cout, cin, kernel, kernel}, he_normal(n, cin * kernel * kernel, rng));
  if (with_bias) {
    c.bias = params.add(name + ".bias", ParamGroup::kConvBias, false, {cout},
                        std::vector<double>(static_cast<std::size_t>(cout), 0.0));
  }
  return c;
}

NormSite make_norm_site(ParamSet& params, const std::string& name, NormKind kind, int channels,
                        const side::SideInfoSchema& schema, Rng& rng) {
  NormSite site;
  site.kind = kind;
  if (kind == NormKind::kSign) {
    site.head.emplace(name + ".sign", schema.n_categorical() + 1, schema.embed_dim, channels,
                      params, rng);
  }
  return site;
}

ag::Var NormSite::apply(const ag::Var& x, const side::EncodedSideInfo* side) const {
  switch (kind) {
    case NormKind::kNone:
      return x;
    case NormKind::kInstance:
      return sign::instance_norm(x);
    case NormKind::kSign:
      if (!head || side == nullptr) {
        throw ConfigError("SIGN normalisation requires a head and encoded side information");
      }
      return sign::conditional_instance_norm(x, head->forward(*side));
  }
  return x;
}

ag::Var cnn_block_forward(const ag::Var& x, const side::EncodedSideInfo* side,
                          const CnnBlockParams& block) {
  if (block.convs.size() < 2 || block.norms.size() + 1 != block.convs.size()) {
    throw ConfigError("cnn block: need n >= 2 convolutions and n - 1 normalisation sites");
  }
  ag::Var h = x;
  for (std::size_t i = 0; i + 1 < block.convs.size(); ++i) {
    h = ag::conv2d(h, block.convs[i].weight, block.convs[i].bias);
    h = block.norms[i].apply(h, side);
    h = ag::relu(h);
  }
  h = ag::conv2d(h, block.convs.back().weight, block.convs.back().bias);
  return ag::add(x, h);
}

ParamBreakdown count_parameters(const ParamSet& params) {
  ParamBreakdown b;
  for (const auto& p : params.items()) {
    switch (p.group) {
      case ParamGroup::kConvWeight:
      case ParamGroup::kConvBias:
        b.backbone_convs += p.var.numel();
        break;
      case ParamGroup::kEmbedding:
      case ParamGroup::kContinuousMap:
        b.encoders += p.var.numel();
        break;
      case ParamGroup::kSignBranch:
      case ParamGroup::kSignLayerNorm:
      case ParamGroup::kSignOutput:
        b.sign_heads += p.var.numel();
        break;
    }
  }
  return b;
}

// ---- ReconModel --------------------------------------------------------------

ReconModel::ReconModel(NormKind norm, const side::SideInfoSchema& schema, std::uint64_t seed)
    : norm_(norm), schema_(schema) {
  schema_.validate();
  stats_.mean.assign(schema_.continuous.size(), 0.0);
  stats_.std.assign(schema_.continuous.size(), 1.0);
  if (norm_ == NormKind::kSign) {
    Rng rng(derive_seed(seed, "init-encoder"));
    encoder_.emplace(schema_, params_, rng);
  }
}

std::optional<side::EncodedSideInfo> ReconModel::encode(const ReconBatch& batch) const {
  if (!encoder_) return std::nullopt;
  return encoder_->encode(batch.side, stats_);
}

std::string ReconModel::summary() const {
  std::ostringstream os;
  os << name() << "\n";
  for (const auto& p : params_.items()) {
    os << "  " << std::left << std::setw(40) << p.name << " [";
    for (std::size_t i = 0; i < p.var.shape().size(); ++i) os << (i ? "," : "") << p.var.dim(i);
    os << "] " << to_string(p.group) << "\n";
  }
  const auto b = count_parameters(params_);
  os << "parameters: total " << b.total() << " (backbone convs " << b.backbone_convs
     << ", SIGN heads " << b.sign_heads << ", encoders " << b.encoders << ")\n";
  return os.str();
}

// ---- D5C5 --------------------------------------------------------------------

D5C5::D5C5(const D5C5Config& cfg, const side::SideInfoSchema& schema, std::uint64_t seed)
    : ReconModel(cfg.norm, schema, seed), cfg_(cfg) {
  cfg_.validate();
  Rng conv_rng(derive_seed(seed, "init-conv"));
  Rng sign_rng(derive_seed(seed, "init-sign"));
  const int c = cfg_.channels, k = cfg_.kernel;
  for (int b = 0; b < cfg_.n_cascades; ++b) {
    CnnBlockParams block;
    for (int i = 0; i < cfg_.convs_per_block; ++i) {
      const std::string name = "block" + std::to_string(b) + ".conv" + std::to_string(i);
      const int cin = i == 0 ? 1 : c;
      const int cout = i + 1 == cfg_.convs_per_block ? 1 : c;
      block.convs.push_back(make_conv(params_, name, cin, cout, k, true, conv_rng));
      if (i + 1 < cfg_.convs_per_block) {
        block.norms.push_back(make_norm_site(params_, name, cfg_.norm, c, schema_, sign_rng));
      }
    }
    blocks_.push_back(std::move(block));
  }
}

std::string D5C5::name() const {
  std::string n = "D5C5";
  if (cfg_.norm == NormKind::kSign) n += "+SIGN";
  if (cfg_.norm == NormKind::kInstance) n += "+IN";
  return n;
}

ag::Var D5C5::forward(const ReconBatch& batch) const {
  batch.validate();
  const auto enc = encode(batch);
  const side::EncodedSideInfo* side = enc ? &*enc : nullptr;
  ag::Var x = batch.zero_filled;
  for (const auto& block : blocks_) {
    x = cnn_block_forward(x, side, block);
    x = ag::data_consistency(x, batch.measured, cfg_.dc);
  }
  return x;
}

// ---- OUCR --------------------------------------------------------------------

OUCR::OUCR(const OUCRConfig& cfg, const side::SideInfoSchema& schema, std::uint64_t seed)
    : ReconModel(cfg.norm, schema, seed), cfg_(cfg) {
  cfg_.validate();
  Rng conv_rng(derive_seed(seed, "init-conv"));
  Rng sign_rng(derive_seed(seed, "init-sign"));
  uc_ = make_branch("uc", conv_rng, sign_rng);
  oc_ = make_branch("oc", conv_rng, sign_rng);
  const int c = cfg_.channels, k = cfg_.kernel;
  for (int i = 0; i < cfg_.refine_convs; ++i) {
    const std::string name = "refine.conv" + std::to_string(i);
    const int cin = i == 0 ? 1 : c;
    const int cout = i + 1 == cfg_.refine_convs ? 1 : c;
    refine_.push_back(make_conv(params_, name, cin, cout, k, true, conv_rng));
    if (i + 1 < cfg_.refine_convs) {
      refine_norms_.push_back(make_norm_site(params_, name, cfg_.norm, c, schema_, sign_rng));
    }
  }
}

OUCR::Branch OUCR::make_branch(const std::string& name, Rng& conv_rng, Rng& sign_rng) {
  const int c = cfg_.channels, k = cfg_.kernel;
  auto site = [&](const std::string& n) {
    return make_norm_site(params_, name + "." + n, cfg_.norm, c, schema_, sign_rng);
  };
  Branch br;
  br.enc = make_conv(params_, name + ".enc", 1, c, k, true, conv_rng);
  br.enc_norm = site("enc");
  br.cell_x = make_conv(params_, name + ".cell_x", c, c, k, true, conv_rng);
  br.cell_h = make_conv(params_, name + ".cell_h", c, c, k, false, conv_rng);
  br.cell_norm = site("cell");
  br.res1 = make_conv(params_, name + ".res1", c, c, k, true, conv_rng);
  br.res1_norm = site("res1");
  br.res2 = make_conv(params_, name + ".res2", c, c, k, true, conv_rng);
  br.res2_norm = site("res2");
  br.dec1 = make_conv(params_, name + ".dec1", c, c, k, true, conv_rng);
  br.dec1_norm = site("dec1");
  br.dec2 = make_conv(params_, name + ".dec2", c, 1, k, true, conv_rng);
  return br;
}

ag::Var OUCR::run_branch(const Branch& br, const ag::Var& x, ag::Var& hidden, bool over_complete,
                         const side::EncodedSideInfo* side) const {
  ag::Var e = ag::relu(br.enc_norm.apply(ag::conv2d(x, br.enc.weight, br.enc.bias), side));
  e = over_complete ? ag::upsample2(e) : ag::max_pool2(e);

  ag::Var pre = ag::conv2d(e, br.cell_x.weight, br.cell_x.bias);
  if (hidden.defined()) pre = ag::add(pre, ag::conv2d(hidden, br.cell_h.weight, {}));
  hidden = ag::relu(br.cell_norm.apply(pre, side));

  ag::Var r = ag::relu(br.res1_norm.apply(ag::conv2d(hidden, br.res1.weight, br.res1.bias), side));
  r = br.res2_norm.apply(ag::conv2d(r, br.res2.weight, br.res2.bias), side);
  r = ag::relu(ag::add(hidden, r));

  r = over_complete ? ag::max_pool2(r) : ag::upsample2(r);
  r = ag::relu(br.dec1_norm.apply(ag::conv2d(r, br.dec1.weight, br.dec1.bias), side));
  return ag::conv2d(r, br.dec2.weight, br.dec2.bias);
}

std::string OUCR::name() const {
  std::string n = "OUCR";
  if (cfg_.norm == NormKind::kSign) n += "+SIGN";
  if (cfg_.norm == NormKind::kInstance) n += "+IN";
  return n;
}

ag::Var OUCR::forward(const ReconBatch& batch) const {
  batch.validate();
  if (batch.zero_filled.dim(2) % 2 != 0 || batch.zero_filled.dim(3) % 2 != 0) {
    throw ConfigError("OUCR: image height and width must be even");
  }
  const auto enc = encode(batch);
  const side::EncodedSideInfo* side = enc ? &*enc : nullptr;
  ag::Var x = batch.zero_filled;
  ag::Var h_uc, h_oc;
  for (int t = 0; t < cfg_.iterations; ++t) {
    const ag::Var uc = run_branch(uc_, x, h_uc, false, side);
    const ag::Var oc = run_branch(oc_, x, h_oc, true, side);
    const ag::Var terms[] = {x, uc, oc};
    x = ag::data_consistency(ag::add_n(terms), batch.measured, cfg_.dc);
  }
  ag::Var r = x;
  for (std::size_t i = 0; i + 1 < refine_.size(); ++i) {
    r = ag::relu(refine_norms_[i].apply(ag::conv2d(r, refine_[i].weight, refine_[i].bias), side));
  }
  r = ag::conv2d(r, refine_.back().weight, refine_.back().bias);
  return ag::data_consistency(ag::add(x, r), batch.measured, cfg_.dc);
}

std::unique_ptr<ReconModel> make_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.backbone == BackboneKind::kD5C5) {
    return std::make_unique<D5C5>(cfg.d5c5, cfg.schema, seed);
  }
  return std::make_unique<OUCR>(cfg.oucr, cfg.schema, seed);
}

}  // namespace signrecon::nets
