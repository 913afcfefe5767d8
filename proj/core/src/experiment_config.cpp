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

#include "signrecon/experiment_config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "signrecon/errors.hpp"
#include "signrecon/evalkit.hpp"
#include "signrecon/random.hpp"

namespace signrecon {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::string_view section,
                    std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + std::string(section) + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) {
      throw ConfigError("config: unknown key '" + key + "' in '" + std::string(section) + "'");
    }
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

double read_lambda(const json& v) {
  if (v.is_string() && (v == "inf" || v == "infinity")) {
    return std::numeric_limits<double>::infinity();
  }
  if (v.is_number()) return v.get<double>();
  throw ConfigError("config: dc_lambda must be a number or \"inf\"");
}

}  // namespace

ExperimentConfig ExperimentConfig::preset_defaults(std::string_view preset) {
  ExperimentConfig c;
  c.preset = std::string(preset);
  c.model.schema = side::SideInfoSchema::defaults();
  if (preset == "desk") {
    c.data = {40, 8, 64, 0};
    c.model.d5c5.n_cascades = 3;
    c.model.d5c5.convs_per_block = 3;
    c.model.d5c5.channels = 8;
    c.model.oucr.iterations = 3;
    c.model.oucr.channels = 8;
    c.model.oucr.refine_convs = 3;
    c.model.schema.embed_dim = 16;
    c.train.pretrain_epochs = 30;
    c.train.finetune_epochs = 10;
  } else if (preset == "full") {
    c.data = {100, 16, 320, 0};
    c.model.d5c5 = nets::D5C5Config{};
    c.model.oucr = nets::OUCRConfig{};
    c.train.pretrain_epochs = 100;
    c.train.finetune_epochs = 20;
    c.eval.accelerations = {4.0, 8.0};
  } else {
    throw ConfigError("config: unknown preset '" + std::string(preset) + "'");
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  reject_unknown(j, "top level",
                 {"preset", "seed", "data", "mask", "schema", "model", "train", "eval"});
  std::string preset = "desk";
  read(j, "preset", preset);
  auto c = preset_defaults(preset);
  read(j, "seed", c.seed);

  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown(d, "data", {"volumes", "slices_per_volume", "image_size", "seed", "split", "dir"});
    read(d, "volumes", c.data.volumes);
    read(d, "slices_per_volume", c.data.slices_per_volume);
    read(d, "image_size", c.data.image_size);
    read(d, "seed", c.data.seed);
    read(d, "split", c.split);
    if (d.contains("dir") && !d["dir"].is_null()) c.dataset_dir = d["dir"].get<std::string>();
  }
  if (j.contains("mask")) {
    const auto& m = j["mask"];
    reject_unknown(m, "mask", {"acceleration", "center_fraction", "std_fraction"});
    read(m, "acceleration", c.mask.acceleration);
    read(m, "center_fraction", c.mask.center_fraction);
    read(m, "std_fraction", c.mask.std_fraction);
  }
  if (j.contains("schema")) {
    const auto& s = j["schema"];
    reject_unknown(s, "schema", {"embed_dim", "categorical", "continuous"});
    read(s, "embed_dim", c.model.schema.embed_dim);
    if (s.contains("categorical")) {
      c.model.schema.categorical.clear();
      for (const auto& f : s["categorical"]) {
        reject_unknown(f, "schema.categorical", {"name", "vocabulary"});
        side::CategoricalField field;
        read(f, "name", field.name);
        read(f, "vocabulary", field.vocabulary);
        c.model.schema.categorical.push_back(std::move(field));
      }
    }
    read(s, "continuous", c.model.schema.continuous);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, "model", {"backbone", "norm", "channels", "kernel", "dc_lambda", "cascades",
                                "convs_per_block", "iterations", "refine_convs"});
    std::string backbone(nets::to_string(c.model.backbone));
    std::string norm(nets::to_string(c.model.norm()));
    read(m, "backbone", backbone);
    read(m, "norm", norm);
    c.model.backbone = nets::parse_backbone(backbone);
    c.model.d5c5.norm = c.model.oucr.norm = nets::parse_norm_kind(norm);
    int channels = c.model.backbone == nets::BackboneKind::kD5C5 ? c.model.d5c5.channels
                                                                  : c.model.oucr.channels;
    int kernel = c.model.d5c5.kernel;
    read(m, "channels", channels);
    read(m, "kernel", kernel);
    c.model.d5c5.channels = c.model.oucr.channels = channels;
    c.model.d5c5.kernel = c.model.oucr.kernel = kernel;
    if (m.contains("dc_lambda")) {
      c.model.d5c5.dc.lambda = c.model.oucr.dc.lambda = read_lambda(m["dc_lambda"]);
    }
    read(m, "cascades", c.model.d5c5.n_cascades);
    read(m, "convs_per_block", c.model.d5c5.convs_per_block);
    read(m, "iterations", c.model.oucr.iterations);
    read(m, "refine_convs", c.model.oucr.refine_convs);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t, "train", {"pretrain_epochs", "finetune_epochs", "pretrain_lr", "finetune_lr",
                                "weight_decay", "beta1", "beta2", "adam_eps", "batch_size",
                                "grad_clip"});
    read(t, "pretrain_epochs", c.train.pretrain_epochs);
    read(t, "finetune_epochs", c.train.finetune_epochs);
    read(t, "pretrain_lr", c.train.pretrain_lr);
    read(t, "finetune_lr", c.train.finetune_lr);
    read(t, "weight_decay", c.train.weight_decay);
    read(t, "beta1", c.train.beta1);
    read(t, "beta2", c.train.beta2);
    read(t, "adam_eps", c.train.adam_eps);
    read(t, "batch_size", c.train.batch_size);
    if (t.contains("grad_clip") && !t["grad_clip"].is_null()) {
      c.train.grad_clip = t["grad_clip"].get<double>();
    }
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    reject_unknown(e, "eval", {"accelerations", "batch_size", "ablation", "recon_dump"});
    read(e, "accelerations", c.eval.accelerations);
    read(e, "batch_size", c.eval.batch_size);
    read(e, "ablation", c.eval.ablation);
    read(e, "recon_dump", c.eval.recon_dump);
  }
  c.train.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["preset"] = preset;
  j["seed"] = seed;
  j["data"] = {{"volumes", data.volumes},
               {"slices_per_volume", data.slices_per_volume},
               {"image_size", data.image_size},
               {"seed", data.seed},
               {"split", split},
               {"dir", dataset_dir ? json(dataset_dir->string()) : json(nullptr)}};
  j["mask"] = {{"acceleration", mask.acceleration},
               {"center_fraction", mask.center_fraction},
               {"std_fraction", mask.std_fraction}};
  json cats = json::array();
  for (const auto& f : model.schema.categorical) {
    cats.push_back({{"name", f.name}, {"vocabulary", f.vocabulary}});
  }
  j["schema"] = {{"embed_dim", model.schema.embed_dim},
                 {"categorical", cats},
                 {"continuous", model.schema.continuous}};
  const double lambda = model.d5c5.dc.lambda;
  j["model"] = {{"backbone", std::string(nets::to_string(model.backbone))},
                {"norm", std::string(nets::to_string(model.norm()))},
                {"channels", model.backbone == nets::BackboneKind::kD5C5 ? model.d5c5.channels
                                                                         : model.oucr.channels},
                {"kernel", model.d5c5.kernel},
                {"dc_lambda", std::isinf(lambda) ? json("inf") : json(lambda)},
                {"cascades", model.d5c5.n_cascades},
                {"convs_per_block", model.d5c5.convs_per_block},
                {"iterations", model.oucr.iterations},
                {"refine_convs", model.oucr.refine_convs}};
  j["train"] = {{"pretrain_epochs", train.pretrain_epochs},
                {"finetune_epochs", train.finetune_epochs},
                {"pretrain_lr", train.pretrain_lr},
                {"finetune_lr", train.finetune_lr},
                {"weight_decay", train.weight_decay},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"adam_eps", train.adam_eps},
                {"batch_size", train.batch_size},
                {"grad_clip", train.grad_clip ? json(*train.grad_clip) : json(nullptr)}};
  j["eval"] = {{"accelerations", eval.accelerations},
               {"batch_size", eval.batch_size},
               {"ablation", eval.ablation},
               {"recon_dump", eval.recon_dump}};
  return j.dump(2);
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
}

void ExperimentConfig::validate() const {
  if (data.volumes < 3) throw ConfigError("config: need at least 3 volumes");
  if (data.slices_per_volume < 1) throw ConfigError("config: slices_per_volume must be positive");
  if (data.image_size < 32) throw ConfigError("config: image_size must be at least 32");
  for (double r : split)
    if (!(r >= 0.0)) throw ConfigError("config: split ratios must be non-negative");
  if (!(split[0] > 0.0 && split[1] > 0.0 && split[2] > 0.0)) {
    throw ConfigError("config: every split ratio must be positive");
  }
  // Building a mask checks acceleration, centre fraction and the column budget.
  (void)mri::gen_gaussian_mask(data.image_size, mask.acceleration, mask.center_fraction, 0,
                               mask.std_fraction);
  for (double a : eval.accelerations) {
    (void)mri::gen_gaussian_mask(data.image_size, a, mask.center_fraction, 0, mask.std_fraction);
  }
  model.validate();
  train.validate();
  if (train.seed != seed) throw ConfigError("config: train seed out of sync");
  if (eval.batch_size < 1) throw ConfigError("config: eval batch_size must be positive");
  if (eval.recon_dump < 0) throw ConfigError("config: recon_dump must be non-negative");
  for (const auto& cond : eval.ablation) {
    (void)eval::AblationSpec::parse_condition(cond, model.schema);
  }
}

std::uint64_t ExperimentConfig::hash() const {
  auto j = json::parse(to_json_text());
  j.erase("eval");
  return hash_tag(j.dump());
}

std::uint64_t ExperimentConfig::val_mask_seed() const {
  return derive_seed(data.seed, "val-masks");
}

std::uint64_t ExperimentConfig::test_mask_seed() const {
  return derive_seed(data.seed, "test-masks");
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace signrecon
