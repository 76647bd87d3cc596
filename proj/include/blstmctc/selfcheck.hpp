// blstmctc/selfcheck.hpp

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

// Oracle checks run by `blstmctc selfcheck`. Each check is sized by its
// arguments; the command uses small sizes, the acceptance suite larger ones.

#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "blstmctc/ctc.hpp"
#include "blstmctc/eval.hpp"
#include "blstmctc/features.hpp"
#include "blstmctc/network.hpp"
#include "blstmctc/oracles.hpp"
#include "blstmctc/phoneset.hpp"
#include "blstmctc/training.hpp"

namespace blstmctc::selfcheck {

struct CheckResult {
  std::string module;
  std::string name;
  bool ok = false;
  std::string detail;
};

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

inline CheckResult check_param_count() {
  std::size_t n = param_count(ModelConfig{39, 128, 1, 40});
  return {"network", "param_count(39, 128+128, 1, 40)", n == 183080,
          "got " + std::to_string(n) + ", expected 183080"};
}

/// A random CTC instance: posteriors over K labels + blank and a feasible
/// target of length <= max_len.
struct CtcInstance {
  Matrix y;
  Labelling target;
};

template <typename Rng>
CtcInstance random_ctc_instance(Rng &rng, std::size_t max_t, std::size_t max_k,
                                std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> kd(1, max_k), ld(0, max_len);
  std::size_t K = kd(rng);
  Labelling l(ld(rng));
  std::uniform_int_distribution<int> sym(0, static_cast<int>(K) - 1);
  for (int &v : l) v = sym(rng);
  std::size_t need = std::max<std::size_t>(1, min_frames_for(l));
  while (need > max_t) {
    l.pop_back();
    need = std::max<std::size_t>(1, min_frames_for(l));
  }
  std::uniform_int_distribution<std::size_t> td(need, max_t);
  return {oracle::random_posteriors(td(rng), K + 1, rng, 0.05), l};
}

/// ctc_loss against -ln of the brute-force path sum.
inline CheckResult check_ctc_brute_force(std::size_t instances, std::uint64_t seed,
                                         std::size_t max_t = 8, double tol = 1e-10) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    auto inst = random_ctc_instance(rng, max_t, 3, 3);
    double brute = -std::log(oracle::path_sum_probability(inst.y, inst.target));
    double mine = *ctc_loss(inst.y, inst.target);
    worst = std::max(worst, oracle::relative_error(mine, brute, 1e-300));
  }
  return {"ctc", "loss vs brute-force path sum (" + std::to_string(instances) + " instances)",
          worst <= tol, "max relative error " + format_double(worst)};
}

/// sum_s alpha(t,s) beta(t,s) / y_t(l'_s) equals p(l|x) at every t.
inline CheckResult check_forward_backward_identity(std::size_t instances, std::uint64_t seed,
                                                   std::size_t max_t = 8, double tol = 1e-10) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    auto inst = random_ctc_instance(rng, max_t, 3, 3);
    auto lat = ctc_alpha_beta(inst.y, inst.target);
    double p = std::exp(lat.log_prob);
    for (std::size_t t = 0; t < inst.y.rows(); ++t)
      worst = std::max(worst, oracle::relative_error(std::exp(log_occupancy_sum(lat, t)), p, 1e-300));
  }
  return {"ctc", "forward-backward identity at every frame", worst <= tol,
          "max relative error " + format_double(worst)};
}

/// ctc_gradient (w.r.t. unnormalised outputs) against central differences.
inline CheckResult check_ctc_gradient(std::size_t instances, std::uint64_t seed,
                                      double tol = 1e-4, double step = 1e-5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    auto inst = random_ctc_instance(rng, 6, 3, 3);
    const std::size_t T = inst.y.rows(), C = inst.y.cols();
    Matrix a(T, C);
    for (double &v : a.data()) v = g(rng);
    auto softmax = [&](std::span<const double> p) {
      Matrix y(T, C);
      std::copy(p.begin(), p.end(), y.data().begin());
      for (std::size_t t = 0; t < T; ++t) softmax_inplace(y.row(t));
      return y;
    };
    std::vector<double> av(a.data().begin(), a.data().end());
    auto grad = ctc_gradient(softmax(av), inst.target);
    auto loss = [&](std::span<const double> p) { return *ctc_loss(softmax(p), inst.target); };
    for (std::size_t j = 0; j < av.size(); ++j)
      worst = std::max(worst, oracle::relative_error(grad.data()[j],
                                                     oracle::central_difference(loss, av, j, step),
                                                     1e-6));
  }
  return {"ctc", "gradient vs central differences (" + std::to_string(instances) + " instances)",
          worst <= tol, "max relative error " + format_double(worst)};
}

/// End-to-end dL/dw (CTC loss through the BLSTM) against central differences.
inline CheckResult check_network_gradient(std::size_t instances, std::uint64_t seed,
                                          double tol = 1e-4, double step = 1e-5) {
  const ModelConfig cfg{3, 4, 1, 4};
  const std::size_t T = 5;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> sym(0, 2), len(0, 2);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    Weights w = init_weights(cfg, rng(), 0.5);
    Matrix x(T, cfg.input_dim);
    for (double &v : x.data()) v = g(rng);
    Labelling l(static_cast<std::size_t>(len(rng)));
    for (int &v : l) v = sym(rng);
    Weights grad(cfg);
    utterance_gradient(w, x, l, grad);
    auto loss = [&](std::span<const double> p) {
      Weights v = w;
      std::copy(p.begin(), p.end(), v.values.begin());
      return *ctc_loss(blstm_forward(v, x).posteriors, l);
    };
    for (std::size_t j = 0; j < w.size(); ++j)
      worst = std::max(worst,
                       oracle::relative_error(grad.values[j],
                                              oracle::central_difference(loss, w.values, j, step),
                                              1e-6));
  }
  return {"network", "BLSTM gradient vs central differences (" + std::to_string(instances) +
                         " instances)",
          worst <= tol, "max relative error " + format_double(worst)};
}

/// Unsectioned prefix search finds the exhaustive argmax and never loses to
/// best path.
inline CheckResult check_prefix_search(std::size_t instances, std::uint64_t seed,
                                       std::size_t max_t = 6, std::size_t max_k = 2) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> td(1, max_t), kd(1, max_k);
  std::size_t wrong = 0, worse = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    Matrix y = oracle::random_posteriors(td(rng), kd(rng) + 1, rng);
    auto exact = oracle::exhaustive_argmax(y);
    auto found = prefix_search_decode(y, 1.0);
    double pf = labelling_probability(y, found);
    // near ties: either maximiser is acceptable
    bool tie = exact.prob - exact.runner_up <= 1e-12 * exact.prob;
    if (found != exact.labels && !(tie && pf >= exact.prob * (1.0 - 1e-12))) ++wrong;
    if (pf < labelling_probability(y, best_path_decode(y)) * (1.0 - 1e-12)) ++worse;
  }
  return {"ctc", "prefix search vs exhaustive argmax (" + std::to_string(instances) +
                     " instances)",
          wrong == 0 && worse == 0,
          std::to_string(wrong) + " non-optimal, " + std::to_string(worse) + " below best path"};
}

inline void all_sequences(std::size_t max_len, int symbols, std::vector<Labelling> &out) {
  out.assign(1, Labelling{});
  for (std::size_t start = 0; out.size() > start;) {
    std::size_t end = out.size();
    for (std::size_t i = start; i < end; ++i) {
      if (out[i].size() == max_len) continue;
      for (int s = 0; s < symbols; ++s) {
        Labelling next = out[i];
        next.push_back(s);
        out.push_back(std::move(next));
      }
    }
    start = end;
  }
}

/// edit_distance against the recursive oracle on every pair of sequences up
/// to max_len over 3 symbols, plus metric axioms on random triples.
inline CheckResult check_edit_distance(std::size_t max_len, std::size_t triples,
                                       std::uint64_t seed) {
  std::vector<Labelling> seqs;
  all_sequences(max_len, 3, seqs);
  std::size_t mismatches = 0, pairs = 0;
  for (const auto &a : seqs)
    for (const auto &b : seqs) {
      ++pairs;
      auto c = edit_distance(a, b);
      if (c.distance != oracle::recursive_edit_distance(a, b) ||
          c.distance != c.substitutions + c.insertions + c.deletions)
        ++mismatches;
    }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, seqs.size() - 1);
  std::size_t violations = 0;
  for (std::size_t i = 0; i < triples; ++i) {
    const auto &a = seqs[pick(rng)], &b = seqs[pick(rng)], &c = seqs[pick(rng)];
    std::size_t ab = edit_distance(a, b).distance;
    if (ab != edit_distance(b, a).distance || (ab == 0) != (a == b) ||
        edit_distance(a, c).distance > ab + edit_distance(b, c).distance)
      ++violations;
  }
  return {"eval", "edit distance vs recursion (" + std::to_string(pairs) + " pairs, " +
                      std::to_string(triples) + " triples)",
          mismatches == 0 && violations == 0,
          std::to_string(mismatches) + " mismatches, " + std::to_string(violations) +
              " axiom violations"};
}

inline CheckResult check_folding() {
  auto map = build_timit_folding();
  auto folded = fold_names(map, {"pcl", "ax", "q", "ux"});
  bool ok = map.source.size() == 61 && map.target.size() == 39 && map.discard_count() == 1 &&
            !map.lookup("q") && folded == std::vector<std::string>{"sil", "ah", "uw"};
  std::string got;
  for (const auto &s : folded) got += (got.empty() ? "" : " ") + s;
  return {"phoneset", "TIMIT 61 -> 39 folding", ok,
          std::to_string(map.source.size()) + " -> " + std::to_string(map.target.size()) +
              ", (pcl ax q ux) -> (" + got + ")"};
}

inline CheckResult check_front_end() {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(16000);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double &s : w.samples) s = u(rng);
  auto f = compute_mfcc(w);
  // samples are stored as 32-bit floats, so compare at file level
  auto bytes = encode_htk(f);
  bool exact = encode_htk(decode_htk(bytes, "memory")) == bytes;
  return {"features", "MFCC shape and HTK round trip",
          f.frames.rows() == 98 && f.frames.cols() == 39 && exact,
          std::to_string(f.frames.rows()) + " x " + std::to_string(f.frames.cols()) +
              (exact ? ", round trip exact" : ", round trip differs")};
}

/// Verifies a model file or checkpoint: header, version, size and checksum.
inline CheckResult check_file(const std::string &path) {
  try {
    auto bytes = internal::read_bytes(path);
    internal::ByteReader r(bytes, path);
    auto [content, cfg] = internal::read_header(r);
    if (content == kContentCheckpoint) {
      auto st = decode_checkpoint(bytes, path);
      return {"training", "checkpoint " + path, true,
              "checksum ok, " + std::to_string(st.record.epochs_trained()) + " epochs"};
    }
    decode_model(bytes, path);
    return {"network", "model " + path, true, std::to_string(cfg.hidden()) + " hidden units"};
  } catch (const std::exception &e) {
    return {"training", "file " + path, false, e.what()};
  }
}

/// The suite run by `blstmctc selfcheck`, sized to finish in a few seconds.
inline std::vector<CheckResult> run_default_suite(std::uint64_t seed = 1) {
  return {check_param_count(),
          check_ctc_brute_force(100, seed),
          check_forward_backward_identity(100, seed),
          check_ctc_gradient(10, seed),
          check_network_gradient(3, seed),
          check_prefix_search(50, seed),
          check_edit_distance(4, 1000, seed),
          check_folding(),
          check_front_end()};
}

}  // namespace blstmctc::selfcheck
