// tools/blstmctc.cpp

// Copyright 2026  The blstmctc Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// blstmctc: feature extraction, training, decoding and scoring for
// bidirectional LSTM phone recognisers trained with CTC.
//
// Exit status: 0 success, 1 operational failure, 2 usage error.

#include <CLI11.hpp>

#include <iostream>

#include "blstmctc/app.hpp"

namespace {

using namespace blstmctc;
using namespace blstmctc::app;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Defaults, then --config, then --set overrides, then --seed.
RunConfig effective_config(const std::string &config_path, const std::vector<std::string> &sets,
                           std::optional<std::uint64_t> seed) {
  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_run_config(config_path);
    for (const auto &kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::kParse, "--set expects key=value, got '" + kv + "'");
      apply_setting(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (seed) cfg.training.seed = *seed;
    cfg.validate();
  } catch (const Error &e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw UsageError(e.what());
  }
  return cfg;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App cli{"BLSTM-CTC phone recognition toolkit"};
  cli.require_subcommand(1);
  cli.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  bool verbose = false, print_config = false;
  cli.add_option("--config", config_path, "Run config file (key = value lines)")->check(CLI::ExistingFile);
  cli.add_option("--set", sets, "Override a config key, e.g. --set learning_rate=1e-3");
  cli.add_option("--seed", seed, "Random seed for initialisation, shuffling and noise");
  cli.add_option("--jobs,-j", jobs, "Utterances processed in parallel")->check(CLI::PositiveNumber);
  cli.add_flag("--verbose,-v", verbose, "Print progress to stderr");
  cli.add_flag("--print-config", print_config, "Print the effective config before running");

  auto *features = cli.add_subcommand("features", "Compute MFCC features from audio");
  FeaturesArgs fa;
  features->add_option("--manifest", fa.manifest, "Audio manifest")->required();
  features->add_option("--out-dir", fa.out_dir, "Directory for HTK feature files")->required();
  features->add_option("--out-manifest", fa.out_manifest, "Write a manifest of the feature files");

  auto *train = cli.add_subcommand("train", "Train a network");
  TrainArgs ta;
  std::optional<std::size_t> max_epochs;
  train->add_option("--train", ta.train_manifest, "Training manifest")->required();
  train->add_option("--val", ta.val_manifest, "Validation manifest")->required();
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--max-epochs", max_epochs, "Override max_epochs");
  train->add_flag("--resume", ta.resume, "Continue from an existing checkpoint at --out");

  auto *decode = cli.add_subcommand("decode", "Decode utterances with a trained network");
  DecodeArgs da;
  std::optional<std::string> decoder;
  std::optional<double> threshold;
  decode->add_option("--model", da.model, "Checkpoint or model file")->required();
  decode->add_option("--manifest", da.manifest, "Feature manifest")->required();
  decode->add_option("--out", da.out, "Transcript output ('-' for stdout)")->default_val("-");
  decode->add_option("--decoder", decoder, "prefix or best-path")
      ->check(CLI::IsMember({"prefix", "best-path"}));
  decode->add_option("--threshold", threshold, "Blank threshold for prefix search sections");
  decode->add_option("--dump-posteriors", da.dump_posteriors, "Write per-utterance posteriors here");

  auto *score = cli.add_subcommand("score", "Label error rate of hypotheses against references");
  ScoreArgs sa;
  auto *ref_opt = score->add_option("--ref", sa.ref, "Reference transcripts (id label ...)");
  auto *ref_man = score->add_option("--ref-manifest", sa.ref_manifest,
                                    "Take references from a manifest's transcript column");
  ref_opt->excludes(ref_man);
  score->add_option("--hyp", sa.hyp, "Hypothesis transcripts")->required();
  score->add_option("--fold", sa.fold, "Fold labels before scoring: 'timit' or a table file")
      ->expected(0, 1)
      ->default_str("timit");
  score->add_option("--out", sa.out, "Also write the report here");

  auto *aggregate = cli.add_subcommand("aggregate", "Mean and standard error over runs");
  AggregateArgs aa;
  aggregate->add_option("runs", aa.runs, "File with one LER per line")->required();
  aggregate->add_option("--compare", aa.compare, "Reference value for a one-sample t-test");

  auto *selfcheck = cli.add_subcommand("selfcheck", "Run the built-in oracle checks");
  SelfcheckArgs ca;
  selfcheck->add_option("--check", ca.check, "Also verify a model or checkpoint file");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = cli.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (score->parsed() && sa.ref.empty() && sa.ref_manifest.empty()) {
    std::cerr << "score: one of --ref or --ref-manifest is required\n";
    return kExitUsage;
  }
  if (score->parsed() && score->count("--fold") && sa.fold.empty()) sa.fold = "timit";

  Context ctx{std::cout, std::cerr, jobs, verbose};
  try {
    RunConfig cfg = effective_config(config_path, sets, seed);
    if (print_config) std::cerr << dump_run_config(cfg);
    if (features->parsed()) {
      fa.front_end = cfg.front_end;
      return cmd_features(ctx, fa);
    }
    if (train->parsed()) {
      ta.config = cfg;
      if (max_epochs) ta.config.training.max_epochs = *max_epochs;
      return cmd_train(ctx, ta);
    }
    if (decode->parsed()) {
      da.decoder = decoder.value_or(cfg.decoder);
      da.blank_threshold = threshold.value_or(cfg.blank_threshold);
      da.max_expansions = cfg.max_expansions;
      if (!(da.blank_threshold > 0.0 && da.blank_threshold <= 1.0))
        throw UsageError("--threshold must be in (0, 1]");
      return cmd_decode(ctx, da);
    }
    if (score->parsed()) return cmd_score(ctx, sa);
    if (aggregate->parsed()) return cmd_aggregate(ctx, aa);
    if (selfcheck->parsed()) {
      ca.seed = cfg.training.seed;
      return cmd_selfcheck(ctx, ca);
    }
  } catch (const UsageError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
