// tests/acceptance_test.cpp

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

// Release acceptance suite: one PASS/FAIL line per criterion, nonzero exit
// status if any criterion fails.

#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "blstmctc/eval.hpp"
#include "blstmctc/features.hpp"
#include "blstmctc/selfcheck.hpp"
#include "blstmctc/training.hpp"
#include "cli_util.hpp"

namespace {

using namespace blstmctc;
namespace sc = blstmctc::selfcheck;

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string &title, const std::function<Outcome()> &body) {
  auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception &e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.ok) ++failures;
  std::cout << (o.ok ? "PASS" : "FAIL") << " " << id << " " << title << ": " << o.detail << " ["
            << std::fixed << std::setprecision(2) << secs << "s]" << std::defaultfloat << std::endl;
}

Outcome from(const std::vector<sc::CheckResult> &checks) {
  Outcome o{true, ""};
  for (const auto &c : checks) {
    o.ok = o.ok && c.ok;
    o.detail += (o.detail.empty() ? "" : "; ") + c.name + ": " + c.detail;
  }
  return o;
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

Outcome statistics() {
  RunStats best_path{10, 25.17, 0.20};
  auto a = one_sample_t_test(best_path, 28.57);
  auto b = one_sample_t_test(best_path, 24.4);
  bool a_ok = a.p < 3e-8, b_ok = b.p < 0.004;
  return {a_ok && b_ok, "vs 28.57: t=" + sci(a.t) + " df=" + sci(a.df) + " p=" + sci(a.p) +
                            (a_ok ? " < 3e-8" : " NOT < 3e-8") + "; vs 24.4: t=" + sci(b.t) +
                            " p=" + sci(b.p) + (b_ok ? " < 0.004" : " NOT < 0.004")};
}

Outcome toy_task() {
  const std::size_t seeds = 5;
  std::size_t reached = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    auto train_set = testing::make_toy_corpus(500, 1000 + seed, "t");
    auto val_set = testing::make_toy_corpus(100, 2000 + seed, "v");
    TrainingConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.momentum = 0.9;
    cfg.noise_std = 0.1;
    cfg.max_epochs = 200;
    cfg.patience = 200;
    cfg.seed = seed;
    TrainingHooks hooks;
    hooks.on_epoch_end = [](const TrainingState &st) { return st.record.epochs.back().val_ler > 0.05; };
    auto [best, rec] = train(init_weights(testing::toy_model_config(16), seed), train_set, val_set,
                             cfg, hooks);
    double ler = rec.epochs[*rec.best_epoch - 1].val_ler;
    if (ler <= 0.05) ++reached;
    detail += (detail.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) + " " +
              sci(100.0 * ler) + "% @" + std::to_string(*rec.best_epoch);
  }
  return {reached >= 4, std::to_string(reached) + "/5 seeds at <= 5% LER (" + detail + ")"};
}

Outcome front_end() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<FeatureSequence> corpus;
  for (std::size_t n : {16000u, 12345u, 20000u, 8000u}) {
    Waveform w;
    w.samples.resize(n);
    double phase = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      phase += 0.02 + 0.01 * std::sin(1e-3 * static_cast<double>(i));
      w.samples[i] = 0.5 * std::sin(phase) + u(rng);
    }
    corpus.push_back(compute_mfcc(w));
  }
  const auto &one_second = corpus[0];
  bool shape = one_second.dim() == 39 && one_second.num_frames() == 98;

  testing::TempDir dir;
  write_htk(dir.file("a.htk"), one_second);
  auto first = testing::read_text(dir.file("a.htk"));
  auto back = read_htk(dir.file("a.htk"));
  write_htk(dir.file("b.htk"), back);
  bool roundtrip = first == testing::read_text(dir.file("b.htk"));
  for (std::size_t i = 0; i < back.frames.data().size(); ++i)
    roundtrip = roundtrip && back.frames.data()[i] ==
                                 static_cast<double>(static_cast<float>(one_second.frames.data()[i]));

  auto stats = compute_normalization(corpus);
  double worst_mean = 0.0, worst_std = 0.0;
  for (std::size_t k = 0; k < 39; ++k) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const auto &f : corpus) {
      auto g = normalize(f, stats);
      for (std::size_t t = 0; t < g.num_frames(); ++t) {
        sum += g.frames(t, k);
        n += 1.0;
      }
    }
    double mean = sum / n;
    for (const auto &f : corpus) {
      auto g = normalize(f, stats);
      for (std::size_t t = 0; t < g.num_frames(); ++t) sq += (g.frames(t, k) - mean) * (g.frames(t, k) - mean);
    }
    worst_mean = std::max(worst_mean, std::fabs(mean));
    worst_std = std::max(worst_std, std::fabs(std::sqrt(sq / n) - 1.0));
  }
  bool norm = worst_mean < 1e-10 && worst_std < 1e-10;
  return {shape && roundtrip && norm,
          std::to_string(one_second.num_frames()) + " frames x " + std::to_string(one_second.dim()) +
              ", HTK round trip " + (roundtrip ? "bit-exact" : "differs") +
              ", normalised |mean| " + sci(worst_mean) + ", |std-1| " + sci(worst_std)};
}

Outcome determinism() {
  testing::TempDir dir;
  auto train = testing::write_toy_manifest(dir, testing::make_toy_corpus(40, 5, "tr"), "train.txt");
  auto val = testing::write_toy_manifest(dir, testing::make_toy_corpus(10, 6, "va"), "val.txt");
  auto config = testing::write_toy_config(dir, 8, 3);
  auto run = [&](const std::string &out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"--config", config, "train", "--train", train,
                                  "--val", val, "--out", dir.file(out)};
    args.insert(args.end(), extra.begin(), extra.end());
    auto r = testing::run_cli(dir, args);
    if (r.exit_code != 0) throw std::runtime_error("train failed: " + r.err);
    return testing::read_text(dir.file(out));
  };
  auto a = run("a.ckpt"), b = run("b.ckpt");
  run("r.ckpt", {"--max-epochs", "1"});
  auto resumed = run("r.ckpt", {"--resume"});
  bool same = a == b && !a.empty();
  bool resume = resumed == a;
  return {same && resume, std::string("two runs ") + (same ? "byte-identical" : "differ") +
                              " (" + std::to_string(a.size()) + " bytes), resume after epoch 1 " +
                              (resume ? "matches" : "differs from") + " 3-epoch run"};
}

}  // namespace

int main() {
  report(1, "architecture", [] { return from({sc::check_param_count()}); });
  report(2, "CTC loss vs brute force", [] { return from({sc::check_ctc_brute_force(500, 2)}); });
  report(3, "gradient checks", [] {
    return from({sc::check_ctc_gradient(50, 3), sc::check_network_gradient(50, 4)});
  });
  report(4, "forward-backward identity",
         [] { return from({sc::check_forward_backward_identity(500, 2)}); });
  report(5, "decoder optimality", [] { return from({sc::check_prefix_search(200, 5)}); });
  report(6, "edit distance", [] { return from({sc::check_edit_distance(6, 1000, 6)}); });
  report(7, "folding", [] { return from({sc::check_folding()}); });
  report(8, "t-test inequalities", statistics);
  report(9, "toy task end to end", toy_task);
  report(10, "front end", front_end);
  report(11, "determinism", determinism);
  std::cout << (11 - failures) << " of 11 criteria passed" << std::endl;
  return failures ? 1 : 0;
}
