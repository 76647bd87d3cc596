// blstmctc/training.hpp

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

// Online CTC training: one momentum step per utterance, Gaussian input noise,
// early stopping on validation LER, and resumable checkpoints.

#pragma once

#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "blstmctc/base.hpp"
#include "blstmctc/ctc.hpp"
#include "blstmctc/eval.hpp"
#include "blstmctc/network.hpp"

namespace blstmctc {

struct TrainingConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double noise_std = 0.6;
  std::size_t max_epochs = 1000;
  std::size_t patience = 20;
  std::uint64_t seed = 1;
  bool shuffle = true;

  void validate() const {
    if (!(learning_rate >= 0.0))
      throw Error(ErrorKind::kInvalidArgument, "learning_rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw Error(ErrorKind::kInvalidArgument, "momentum must be in [0, 1)");
    if (!(noise_std >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "noise_std must be >= 0");
    if (patience < 1) throw Error(ErrorKind::kInvalidArgument, "patience must be >= 1");
  }
};

/// One training or validation example.
struct Utterance {
  std::string id;
  Matrix frames;
  Labelling target;
};

struct EpochRecord {
  double train_loss = 0.0;  // mean over examples actually trained on
  double val_ler = 0.0;
  std::size_t skipped = 0;  // infeasible targets
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;  // 1-based

  std::size_t epochs_trained() const noexcept { return epochs.size(); }
  friend bool operator==(const RunRecord &a, const RunRecord &b) {
    if (a.best_epoch != b.best_epoch || a.epochs.size() != b.epochs.size()) return false;
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
      const auto &x = a.epochs[i], &y = b.epochs[i];
      if (std::bit_cast<std::uint64_t>(x.train_loss) != std::bit_cast<std::uint64_t>(y.train_loss) ||
          std::bit_cast<std::uint64_t>(x.val_ler) != std::bit_cast<std::uint64_t>(y.val_ler) ||
          x.skipped != y.skipped)
        return false;
    }
    return true;
  }
};

using Rng = std::mt19937_64;

/// Generator for one epoch. Every random draw in an epoch (shuffle order and
/// noise) comes from here, so a run resumed at epoch e replays exactly.
inline Rng epoch_rng(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    0x5eedu};
  return Rng(seq);
}

inline Matrix add_input_noise(const Matrix &frames, double noise_std, Rng &rng) {
  if (!(noise_std >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "noise_std must be >= 0");
  Matrix out = frames;
  if (noise_std == 0.0) return out;
  std::normal_distribution<double> dist(0.0, noise_std);
  for (double &v : out.data()) v += dist(rng);
  return out;
}

/// v <- momentum v - lr g ; w <- w + v.
inline void sgd_momentum_step(Weights &weights, Weights &velocity, const Weights &gradient,
                              double lr, double momentum, std::string_view example = {}) {
  if (weights.size() != velocity.size() || weights.size() != gradient.size())
    throw Error(ErrorKind::kDimensionMismatch, "weights, velocity and gradient differ in size");
  for (double g : gradient.values)
    if (!std::isfinite(g))
      throw Error(ErrorKind::kNonFiniteGradient,
                  "non-finite gradient" +
                      (example.empty() ? std::string() : " on example '" + std::string(example) + "'"));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    velocity.values[i] = momentum * velocity.values[i] - lr * gradient.values[i];
    weights.values[i] += velocity.values[i];
  }
}

using LogFn = std::function<void(std::string_view)>;

/// Loss and dL/dw for one utterance; nullopt when the target is infeasible.
inline std::optional<double> utterance_gradient(const Weights &w, const Matrix &frames,
                                                const Labelling &target, Weights &grad) {
  if (!is_feasible(frames.rows(), target) || frames.rows() == 0) return std::nullopt;
  auto trace = blstm_forward(w, frames);
  auto lat = ctc_alpha_beta(trace.posteriors, target);
  Matrix ga = ctc_gradient(trace.posteriors, lat);
  grad.set_zero();
  blstm_backward_into(w, frames, trace, ga, grad);
  return -lat.log_prob;
}

struct EpochResult {
  double mean_loss = 0.0;
  std::size_t trained = 0;
  std::size_t skipped = 0;
};

/// One pass over the corpus with a momentum update after every example.
inline EpochResult train_epoch(Weights &model, Weights &velocity,
                               const std::vector<Utterance> &corpus, const TrainingConfig &cfg,
                               Rng &rng, const LogFn &log = {}) {
  if (corpus.empty()) throw Error(ErrorKind::kInvalidArgument, "empty training corpus");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
  Weights grad(model.config);
  EpochResult r;
  double total = 0.0;
  for (std::size_t idx : order) {
    const Utterance &u = corpus[idx];
    Matrix x = add_input_noise(u.frames, cfg.noise_std, rng);
    auto loss = utterance_gradient(model, x, u.target, grad);
    if (!loss) {
      ++r.skipped;
      if (log)
        log("warning: skipping '" + u.id + "': " + std::to_string(u.target.size()) +
            " labels do not fit in " + std::to_string(u.frames.rows()) + " frames");
      continue;
    }
    sgd_momentum_step(model, velocity, grad, cfg.learning_rate, cfg.momentum, u.id);
    total += *loss;
    ++r.trained;
  }
  r.mean_loss = r.trained ? total / static_cast<double>(r.trained) : 0.0;
  return r;
}

/// Best-path LER of a model on a corpus. Inputs are not perturbed.
inline double validation_ler(const Weights &model, const std::vector<Utterance> &corpus) {
  std::vector<std::pair<Labelling, Labelling>> pairs;
  pairs.reserve(corpus.size());
  for (const auto &u : corpus)
    pairs.emplace_back(u.target, best_path_decode(blstm_forward(model, u.frames).posteriors));
  return corpus_ler(pairs).ler;
}

/// Everything needed to continue a run: current weights, momentum, the best
/// weights so far and the per-epoch record.
struct TrainingState {
  Weights model;
  Weights velocity;
  Weights best;
  RunRecord record;

  static TrainingState start(const Weights &initial) {
    return {initial, Weights(initial.config), initial, {}};
  }
};

struct TrainingHooks {
  LogFn log;
  /// Validation metric; best-path LER on the validation corpus when empty.
  std::function<double(const Weights &)> validate;
  /// Called after each epoch; returning false stops the run.
  std::function<bool(const TrainingState &)> on_epoch_end;
};

inline bool patience_exhausted(const RunRecord &rec, std::size_t patience) {
  return rec.best_epoch && rec.epochs.size() - *rec.best_epoch >= patience;
}

/// Continues training until max_epochs or until patience epochs pass without
/// a strictly lower validation LER.
inline void continue_training(TrainingState &st, const std::vector<Utterance> &train_set,
                              const std::vector<Utterance> &val_set, const TrainingConfig &cfg,
                              const TrainingHooks &hooks = {}) {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw Error(ErrorKind::kInvalidArgument, "training and validation corpora must be non-empty");
  auto validate = hooks.validate ? hooks.validate
                                 : [&val_set](const Weights &w) { return validation_ler(w, val_set); };
  while (st.record.epochs.size() < cfg.max_epochs && !patience_exhausted(st.record, cfg.patience)) {
    std::size_t epoch = st.record.epochs.size() + 1;
    Rng rng = epoch_rng(cfg.seed, epoch);
    auto er = train_epoch(st.model, st.velocity, train_set, cfg, rng, hooks.log);
    EpochRecord rec{er.mean_loss, validate(st.model), er.skipped};
    st.record.epochs.push_back(rec);
    if (!st.record.best_epoch || rec.val_ler < st.record.epochs[*st.record.best_epoch - 1].val_ler) {
      st.record.best_epoch = epoch;
      st.best = st.model;
    }
    if (hooks.log) {
      std::ostringstream line;
      line << "epoch " << epoch << " loss " << std::setprecision(8) << rec.train_loss
           << " val_ler " << rec.val_ler << " skipped " << rec.skipped
           << (st.record.best_epoch == epoch ? " best" : "");
      hooks.log(line.str());
    }
    if (hooks.on_epoch_end && !hooks.on_epoch_end(st)) break;
  }
}

/// Trains from `initial` and returns the best-validation weights with the record.
inline std::pair<Weights, RunRecord> train(const Weights &initial,
                                           const std::vector<Utterance> &train_set,
                                           const std::vector<Utterance> &val_set,
                                           const TrainingConfig &cfg,
                                           const TrainingHooks &hooks = {}) {
  auto st = TrainingState::start(initial);
  continue_training(st, train_set, val_set, cfg, hooks);
  return {st.best, st.record};
}

// ---------------------------------------------------------------------------
// Checkpoints: model-file header (content tag 1), current weights, velocity,
// run record, best weights, then a 64-bit FNV-1a checksum over everything
// before it. Record block (all f64): epoch count, best epoch (0 = none), then
// per epoch (train_loss, val_ler, skipped).

inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::vector<unsigned char> encode_checkpoint(const TrainingState &st) {
  internal::ByteWriter w;
  internal::write_header(w, kContentCheckpoint, st.model.config);
  w.f64s(st.model.values);
  w.f64s(st.velocity.values);
  w.f64(static_cast<double>(st.record.epochs.size()));
  w.f64(static_cast<double>(st.record.best_epoch.value_or(0)));
  for (const auto &e : st.record.epochs) {
    w.f64(e.train_loss);
    w.f64(e.val_ler);
    w.f64(static_cast<double>(e.skipped));
  }
  w.f64s(st.best.values);
  auto &buf = w.buffer();
  w.u64(fnv1a64(buf));
  return std::move(buf);
}

inline TrainingState decode_checkpoint(std::span<const unsigned char> bytes,
                                       const std::string &name) {
  internal::ByteReader head(bytes, name);
  auto [content, cfg] = internal::read_header(head);
  if (bytes.size() < head.pos() + 8)
    throw Error(ErrorKind::kCorruptFile, name + ": checkpoint truncated");
  auto body = bytes.first(bytes.size() - 8);
  internal::ByteReader tail(bytes.subspan(bytes.size() - 8), name);
  if (tail.u64() != fnv1a64(body))
    throw Error(ErrorKind::kCorruptFile, name + ": checksum mismatch");
  if (content != kContentCheckpoint)
    throw Error(ErrorKind::kCorruptFile, name + ": not a training checkpoint");

  internal::ByteReader r(body, name);
  internal::read_header(r);
  TrainingState st{Weights(cfg), Weights(cfg), Weights(cfg), {}};
  r.f64s(st.model.values);
  r.f64s(st.velocity.values);
  auto count = static_cast<std::size_t>(r.f64());
  auto best = static_cast<std::size_t>(r.f64());
  if (best > count) throw Error(ErrorKind::kCorruptFile, name + ": best epoch out of range");
  r.need(count * 24);
  st.record.epochs.resize(count);
  for (auto &e : st.record.epochs) {
    e.train_loss = r.f64();
    e.val_ler = r.f64();
    e.skipped = static_cast<std::size_t>(r.f64());
  }
  if (best > 0) st.record.best_epoch = best;
  r.f64s(st.best.values);
  if (r.remaining() != 0) throw Error(ErrorKind::kCorruptFile, name + ": trailing bytes");
  return st;
}

inline void save_checkpoint(const std::string &path, const TrainingState &st) {
  internal::write_bytes(path, encode_checkpoint(st));
}

inline TrainingState load_checkpoint(const std::string &path) {
  return decode_checkpoint(internal::read_bytes(path), path);
}

/// Weights for inference from either a model file or a training checkpoint
/// (the best-validation weights in the latter case).
inline Weights load_inference_weights(const std::string &path) {
  auto bytes = internal::read_bytes(path);
  internal::ByteReader r(bytes, path);
  auto [content, cfg] = internal::read_header(r);
  if (content == kContentCheckpoint) return decode_checkpoint(bytes, path).best;
  return decode_model(bytes, path);
}

}  // namespace blstmctc
