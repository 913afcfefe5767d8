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

#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"
#include "signrecon/errors.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;
constexpr int kExitArtifact = 4;

}  // namespace

int main(int argc, char** argv) {
  using namespace signrecon::cli;
  CLI::App app{"Side-information-guided MRI reconstruction experiments.\n"
               "Set SIGNRECON_WORKERS to evaluate batches on several threads."};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render the synthetic styled dataset to disk");
  gen_cmd->add_option("--config", gen.config, "Experiment config (JSON)")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Override data.seed");
  gen_cmd->add_flag("--force", gen.force, "Write into a non-empty directory");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Pretrain, then fine-tune SIGN parameters");
  train_cmd->add_option("--config", tr.config, "Experiment config (JSON)")->required();
  train_cmd->add_option("--out", tr.out, "Run directory")->required();
  train_cmd->add_option("--seed", tr.seed, "Override the training seed");
  train_cmd->add_option("--stage", tr.stage, "full or pretrain-only")
      ->check(CLI::IsMember({"full", "pretrain-only"}));
  train_cmd->add_option("--data", tr.data, "Dataset directory from gen-data");
  train_cmd->add_flag("--resume", tr.resume, "Continue from the last checkpoints in --out");
  train_cmd->add_flag("--force", tr.force, "Overwrite an existing run directory");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints on the test split");
  eval_cmd->add_option("--config", ev.configs, "Config of each model (repeatable)")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoints, "Checkpoint of each model (repeatable)")
      ->required();
  eval_cmd->add_option("--out", ev.out, "Directory for result tables");
  eval_cmd->add_option("--data", ev.data, "Dataset directory from gen-data");
  eval_cmd->add_flag("--oracle", ev.oracle, "Add a ground-truth row");

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Re-evaluate a SIGN model with corrupted side information");
  ablate_cmd->add_option("--config", ab.config, "Experiment config (JSON)")->required();
  ablate_cmd->add_option("--checkpoint", ab.checkpoint, "SIGN checkpoint")->required();
  ablate_cmd->add_option("--condition", ab.conditions,
                         "true, random:<fields>, wrong:<fields>, mask:<fields>, keep:<fields>");
  ablate_cmd->add_option("--suite", ab.suite, "config, corruption (true/random/wrong) or branches (branch subsets)")
      ->check(CLI::IsMember({"config", "corruption", "branches"}));
  ablate_cmd->add_option("--seed", ab.seed, "Corruption seed (default: config seed)");
  ablate_cmd->add_option("--out", ab.out, "Directory for result tables");
  ablate_cmd->add_option("--data", ab.data, "Dataset directory from gen-data");

  MaskPreviewArgs mp;
  auto* mask_cmd = app.add_subcommand("mask-preview", "Write a sampling mask and a zero-filled example");
  mask_cmd->add_option("--config", mp.config, "Experiment config (JSON)")->required();
  mask_cmd->add_option("--out", mp.out, "Output directory")->required();
  mask_cmd->add_option("--seed", mp.seed, "Mask seed (default: config seed)");
  mask_cmd->add_option("--acceleration", mp.acceleration, "Override mask.acceleration");

  ReconDumpArgs rd;
  auto* dump_cmd = app.add_subcommand(
      "recon-dump", "Write image grids: ground truth | zero-filled | baseline | SIGN");
  dump_cmd->add_option("--config", rd.config, "SIGN model config")->required();
  dump_cmd->add_option("--checkpoint", rd.checkpoint, "SIGN model checkpoint")->required();
  dump_cmd->add_option("--baseline-config", rd.baseline_config, "Baseline config")->required();
  dump_cmd->add_option("--baseline-checkpoint", rd.baseline_checkpoint, "Baseline checkpoint")
      ->required();
  dump_cmd->add_option("--out", rd.out, "Output directory")->required();
  dump_cmd->add_option("-n,--count", rd.count, "Number of grids (default: eval.recon_dump)");
  dump_cmd->add_option("--data", rd.data, "Dataset directory from gen-data");

  SummaryArgs sm;
  auto* summary_cmd = app.add_subcommand("summary", "Print the model architecture and parameter counts");
  summary_cmd->add_option("--config", sm.config, "Experiment config (JSON)")->required();
  summary_cmd->add_option("--seed", sm.seed, "Override the seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (ablate_cmd->parsed()) return cmd_ablate(ab);
    if (mask_cmd->parsed()) return cmd_mask_preview(mp);
    if (dump_cmd->parsed()) return cmd_recon_dump(rd);
    if (summary_cmd->parsed()) return cmd_summary(sm);
  } catch (const signrecon::TrainingAbortedError& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return kExitAborted;
  } catch (const signrecon::VersionError& e) {
    std::cerr << "version error: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const signrecon::CorruptFileError& e) {
    std::cerr << "corrupt file: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const signrecon::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const signrecon::InvalidInputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
