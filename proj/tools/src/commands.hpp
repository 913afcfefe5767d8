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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace signrecon::cli {

struct GenDataArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

struct TrainArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::string stage = "full";  // or "pretrain-only"
  std::optional<std::filesystem::path> data;
  bool resume = false;
  bool force = false;
};

struct EvalArgs {
  std::vector<std::filesystem::path> configs;
  std::vector<std::filesystem::path> checkpoints;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> data;
  bool oracle = false;
};

struct AblateArgs {
  std::filesystem::path config;
  std::filesystem::path checkpoint;
  std::vector<std::string> conditions;
  std::string suite = "config";  // config, corruption or branches
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> data;
};

struct MaskPreviewArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<double> acceleration;
};

struct ReconDumpArgs {
  std::filesystem::path config;
  std::filesystem::path checkpoint;
  std::filesystem::path baseline_config;
  std::filesystem::path baseline_checkpoint;
  std::filesystem::path out;
  std::optional<int> count;
  std::optional<std::filesystem::path> data;
};

struct SummaryArgs {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenDataArgs& a);
int cmd_train(const TrainArgs& a);
int cmd_eval(const EvalArgs& a);
int cmd_ablate(const AblateArgs& a);
int cmd_mask_preview(const MaskPreviewArgs& a);
int cmd_recon_dump(const ReconDumpArgs& a);
int cmd_summary(const SummaryArgs& a);

}  // namespace signrecon::cli
