// tests/training_test.cpp

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

#include "blstmctc/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "toy_task.hpp"

namespace blstmctc {
namespace {

using testing::make_toy_corpus;
using testing::TempDir;

Weights scalar_weights(std::initializer_list<double> v) {
  Weights w(ModelConfig{1, 1, 1, 2});
  w.values.assign(v);
  return w;
}

TEST(InputNoise, ZeroIsIdentity) {
  Rng rng(3);
  Matrix m(4, 3);
  for (std::size_t i = 0; i < m.data().size(); ++i) m.data()[i] = 0.5 * static_cast<double>(i);
  EXPECT_EQ(add_input_noise(m, 0.0, rng), m);
  EXPECT_THROW(add_input_noise(m, -1.0, rng), Error);
}

TEST(InputNoise, SampleStd) {
  Rng rng(11);
  Matrix m(1000, 1000);
  Matrix n = add_input_noise(m, 0.6, rng);
  double sum = 0.0, sq = 0.0;
  for (double v : n.data()) {
    sum += v;
    sq += v * v;
  }
  double count = static_cast<double>(n.data().size());
  double mean = sum / count;
  double sd = std::sqrt(sq / count - mean * mean);
  EXPECT_LT(std::fabs(sd - 0.6) / 0.6, 0.01);
  EXPECT_LT(std::fabs(mean), 5.0 * 0.6 / std::sqrt(count));
}

TEST(InputNoise, SameSeedSameNoise) {
  Matrix m(7, 5);
  Rng a(99), b(99);
  EXPECT_EQ(add_input_noise(m, 0.6, a), add_input_noise(m, 0.6, b));
}

TEST(SgdMomentum, Examples) {
  auto w = scalar_weights({0}), v = scalar_weights({0}), g = scalar_weights({2});
  w.values.resize(1), v.values.resize(1), g.values.resize(1);
  sgd_momentum_step(w, v, g, 1.0, 0.0);
  EXPECT_EQ(w.values[0], -2.0);

  w.values = {0}, v.values = {0}, g.values = {1};
  sgd_momentum_step(w, v, g, 1e-4, 0.9);
  sgd_momentum_step(w, v, g, 1e-4, 0.9);
  EXPECT_NEAR(v.values[0], -1.9e-4, 1e-18);
  EXPECT_NEAR(w.values[0], -2.9e-4, 1e-18);

  w.values = {0.3}, v.values = {0}, g.values = {0};
  sgd_momentum_step(w, v, g, 1e-4, 0.9);
  EXPECT_EQ(w.values[0], 0.3);
  EXPECT_EQ(v.values[0], 0.0);
}

TEST(SgdMomentum, NonFiniteGradientNamesExample) {
  Weights w(ModelConfig{2, 2, 1, 2}), v(w.config), g(w.config);
  g.values[3] = std::nan("");
  try {
    sgd_momentum_step(w, v, g, 1e-4, 0.9, "utt42");
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFiniteGradient);
    EXPECT_NE(std::string(e.what()).find("utt42"), std::string::npos);
  }
  Weights small(ModelConfig{1, 1, 1, 2});
  EXPECT_THROW(sgd_momentum_step(w, v, small, 1e-4, 0.9), Error);
}

TEST(SgdMomentum, VelocityBoundedForClippedGradients) {
  const double lr = 0.01, m = 0.9, clip = 2.0;
  Weights w(ModelConfig{2, 2, 1, 2}), v(w.config), g(w.config);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int step = 0; step < 2000; ++step) {
    // gradient direction alternates between random and a fixed worst case
    double norm = 0.0;
    for (double &x : g.values) {
      x = step % 3 == 0 ? u(rng) : 1.0;
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double &x : g.values) x *= clip / norm;
    sgd_momentum_step(w, v, g, lr, m);
    double vn = 0.0;
    for (double x : v.values) vn += x * x;
    worst = std::max(worst, std::sqrt(vn));
  }
  EXPECT_LE(worst, lr * clip / (1.0 - m) * (1.0 + 1e-12));
  EXPECT_GT(worst, 0.5 * lr * clip / (1.0 - m));
}

TrainingConfig quiet_config() {
  TrainingConfig c;
  c.learning_rate = 1e-3;
  c.noise_std = 0.1;
  c.max_epochs = 3;
  c.seed = 7;
  return c;
}

TEST(TrainEpoch, ZeroLearningRateLeavesWeights) {
  auto corpus = make_toy_corpus(5, 1, "t");
  Weights w = init_weights(testing::toy_model_config(4), 1);
  Weights before = w, vel(w.config);
  auto cfg = quiet_config();
  cfg.learning_rate = 0.0;
  Rng rng(1);
  auto r = train_epoch(w, vel, corpus, cfg, rng);
  EXPECT_EQ(w.values, before.values);
  EXPECT_GT(r.mean_loss, 0.0);
  EXPECT_EQ(r.trained, 5u);
}

TEST(TrainEpoch, SkipsInfeasibleTargets) {
  auto corpus = make_toy_corpus(2, 1, "t");
  corpus.push_back({"short", Matrix(2, 8), {0, 0, 1}});
  Weights w = init_weights(testing::toy_model_config(4), 1), vel(w.config);
  std::vector<std::string> logs;
  Rng rng(1);
  auto r = train_epoch(w, vel, corpus, quiet_config(), rng,
                       [&](std::string_view s) { logs.emplace_back(s); });
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.trained, 2u);
  ASSERT_EQ(logs.size(), 1u);
  EXPECT_NE(logs[0].find("short"), std::string::npos);
  EXPECT_THROW(train_epoch(w, vel, {}, quiet_config(), rng), Error);
}

TEST(TrainEpoch, MemorisesSingleExample) {
  std::vector<Utterance> one{{"u", Matrix(12, 3), {0, 1, 2}}};
  for (std::size_t t = 0; t < 12; ++t) one[0].frames(t, t * 3 / 12) = 1.0;
  Weights w = init_weights(ModelConfig{3, 4, 1, 4}, 2), vel(w.config);
  TrainingConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.noise_std = 0.0;
  double first = 0.0, last = 0.0;
  for (std::size_t e = 1; e <= 200; ++e) {
    Rng rng = epoch_rng(cfg.seed, e);
    last = train_epoch(w, vel, one, cfg, rng).mean_loss;
    if (e == 1) first = last;
  }
  EXPECT_LT(last, 0.01) << "first epoch loss " << first;
}

TEST(TrainEpoch, Deterministic) {
  auto corpus = make_toy_corpus(6, 3, "t");
  auto run = [&] {
    Weights w = init_weights(testing::toy_model_config(4), 8), vel(w.config);
    for (std::size_t e = 1; e <= 2; ++e) {
      Rng rng = epoch_rng(5, e);
      train_epoch(w, vel, corpus, quiet_config(), rng);
    }
    return w.values;
  };
  auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));
}

TEST(Train, StopsOnPatienceAndReturnsBest) {
  auto corpus = make_toy_corpus(3, 2, "t");
  Weights init = init_weights(testing::toy_model_config(4), 3);
  auto cfg = quiet_config();
  cfg.patience = 1;
  cfg.max_epochs = 10;
  std::vector<Weights> seen;
  double ler = 0.1;
  TrainingHooks hooks;
  hooks.validate = [&](const Weights &w) {
    seen.push_back(w);
    ler += 0.1;
    return ler;
  };
  auto [best, rec] = train(init, corpus, corpus, cfg, hooks);
  EXPECT_EQ(rec.epochs_trained(), 2u);
  ASSERT_TRUE(rec.best_epoch);
  EXPECT_EQ(*rec.best_epoch, 1u);
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(best.values, seen[0].values);
  EXPECT_NE(best.values, seen[1].values);
}

TEST(Train, ZeroEpochs) {
  auto corpus = make_toy_corpus(2, 2, "t");
  Weights init = init_weights(testing::toy_model_config(4), 3);
  auto cfg = quiet_config();
  cfg.max_epochs = 0;
  auto [best, rec] = train(init, corpus, corpus, cfg);
  EXPECT_EQ(best.values, init.values);
  EXPECT_EQ(rec.epochs_trained(), 0u);
  EXPECT_FALSE(rec.best_epoch);
  EXPECT_THROW(train(init, {}, corpus, cfg), Error);
  EXPECT_THROW(train(init, corpus, {}, cfg), Error);
}

TEST(Train, ConfigValidation) {
  TrainingConfig c;
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.patience = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.noise_std = -0.1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Train, ZeroLearningRateKeepsValidationLer) {
  auto corpus = make_toy_corpus(4, 6, "t");
  auto val = make_toy_corpus(4, 7, "v");
  Weights init = init_weights(testing::toy_model_config(4), 3);
  auto cfg = quiet_config();
  cfg.learning_rate = 0.0;
  cfg.noise_std = 0.6;
  cfg.max_epochs = 3;
  auto [best, rec] = train(init, corpus, val, cfg);
  ASSERT_EQ(rec.epochs_trained(), 3u);
  // validation inputs are never perturbed: LER matches a direct evaluation
  std::vector<std::pair<Labelling, Labelling>> pairs;
  for (const auto &u : val)
    pairs.emplace_back(u.target, best_path_decode(blstm_forward(init, u.frames).posteriors));
  double direct = corpus_ler(pairs).ler;
  for (const auto &e : rec.epochs) EXPECT_EQ(e.val_ler, direct);
}

TEST(Train, Deterministic) {
  auto corpus = make_toy_corpus(5, 6, "t");
  auto val = make_toy_corpus(3, 7, "v");
  Weights init = init_weights(testing::toy_model_config(4), 3);
  auto a = train(init, corpus, val, quiet_config());
  auto b = train(init, corpus, val, quiet_config());
  EXPECT_EQ(a.first.values, b.first.values);
  EXPECT_TRUE(a.second == b.second);
}

TEST(Checkpoint, RoundTripBitExact) {
  TempDir dir;
  auto corpus = make_toy_corpus(3, 6, "t");
  auto st = TrainingState::start(init_weights(testing::toy_model_config(3), 4));
  auto cfg = quiet_config();
  cfg.max_epochs = 2;
  continue_training(st, corpus, corpus, cfg);
  std::string path = dir.file("run.ckpt");
  save_checkpoint(path, st);
  auto back = load_checkpoint(path);
  EXPECT_EQ(back.model.values, st.model.values);
  EXPECT_EQ(back.velocity.values, st.velocity.values);
  EXPECT_EQ(back.best.values, st.best.values);
  EXPECT_TRUE(back.record == st.record);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(st));
  EXPECT_EQ(load_inference_weights(path).values, st.best.values);
}

TEST(Checkpoint, TruncatedAndCorrupted) {
  auto st = TrainingState::start(init_weights(testing::toy_model_config(3), 4));
  st.record.epochs.push_back({1.5, 0.5, 0});
  st.record.best_epoch = 1;
  auto bytes = encode_checkpoint(st);
  for (std::size_t cut : {bytes.size() - 1, bytes.size() - 9, bytes.size() / 2, std::size_t{40}}) {
    std::vector<unsigned char> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    try {
      decode_checkpoint(part, "x");
      FAIL() << cut;
    } catch (const Error &e) {
      EXPECT_EQ(e.kind(), ErrorKind::kCorruptFile) << cut;
    }
  }
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  try {
    decode_checkpoint(flipped, "x");
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCorruptFile);
  }
}

TEST(Checkpoint, VersionMismatchIsDistinct) {
  auto st = TrainingState::start(init_weights(testing::toy_model_config(3), 4));
  auto bytes = encode_checkpoint(st);
  bytes[8] = 2;  // version field follows the 8-byte magic
  try {
    decode_checkpoint(bytes, "x");
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kVersionMismatch);
  }
}

TEST(Checkpoint, ResumeEqualsUninterrupted) {
  TempDir dir;
  auto corpus = make_toy_corpus(6, 8, "t");
  auto val = make_toy_corpus(3, 9, "v");
  Weights init = init_weights(testing::toy_model_config(4), 5);
  auto cfg = quiet_config();
  cfg.max_epochs = 3;

  auto full = TrainingState::start(init);
  continue_training(full, corpus, val, cfg);

  auto part = TrainingState::start(init);
  auto first = cfg;
  first.max_epochs = 1;
  continue_training(part, corpus, val, first);
  save_checkpoint(dir.file("c"), part);
  auto resumed = load_checkpoint(dir.file("c"));
  continue_training(resumed, corpus, val, cfg);

  EXPECT_EQ(encode_checkpoint(resumed), encode_checkpoint(full));
}

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ull);
  const unsigned char a[] = {'a'};
  EXPECT_EQ(fnv1a64(a), 0xaf63dc4c8601ec8cull);
}

}  // namespace
}  // namespace blstmctc
