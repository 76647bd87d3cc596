// blstmctc/ctc.hpp

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

// Connectionist temporal classification: loss, forward-backward, gradient
// with respect to the softmax inputs, and the best-path and prefix-search
// decoders.
//
// Posteriors are T x (K+1) with the blank in the last column. Targets are
// augmented with blanks, l' = (blank, l1, blank, ..., lL, blank), S = 2L+1.
// All alpha/beta arithmetic is in log space.

#pragma once

#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "blstmctc/base.hpp"

namespace blstmctc {

inline int blank_index(const Matrix &y) { return static_cast<int>(y.cols()) - 1; }

inline std::vector<int> augment_with_blanks(const Labelling &l, int blank) {
  std::vector<int> out;
  out.reserve(2 * l.size() + 1);
  out.push_back(blank);
  for (int k : l) {
    if (k == blank)
      throw Error(ErrorKind::kInvalidArgument, "labelling contains the blank index");
    out.push_back(k);
    out.push_back(blank);
  }
  return out;
}

/// Minimum number of frames needed to emit l: one per label plus one blank
/// between each pair of equal neighbours.
inline std::size_t min_frames_for(const Labelling &l) {
  std::size_t n = l.size();
  for (std::size_t i = 1; i < l.size(); ++i)
    if (l[i] == l[i - 1]) ++n;
  return n;
}

inline bool is_feasible(std::size_t frames, const Labelling &l) {
  return frames >= min_frames_for(l);
}

namespace internal {

inline void check_ctc_inputs(const Matrix &y, const Labelling &l) {
  if (y.cols() < 2)
    throw Error(ErrorKind::kInvalidArgument, "posteriors need at least one label and the blank");
  if (y.rows() < 1) throw Error(ErrorKind::kInvalidArgument, "posteriors have no frames");
  int blank = blank_index(y);
  for (std::size_t i = 0; i < l.size(); ++i)
    if (l[i] < 0 || l[i] >= blank)
      throw Error(ErrorKind::kUnknownSymbol, "label " + std::to_string(l[i]) + " at position " +
                                                 std::to_string(i) + " is outside [0, " +
                                                 std::to_string(blank) + ")");
}

}  // namespace internal

/// log alpha and log beta over the blank-augmented target. beta(t,s) includes
/// the factor y_t(l'_s), so alpha * beta / y sums to p(l|x) at every t.
struct CtcLattice {
  std::vector<int> target;
  Matrix log_alpha;
  Matrix log_beta;
  Matrix log_y;
  double log_prob = kLogZero;

  std::size_t frames() const noexcept { return log_alpha.rows(); }
  std::size_t states() const noexcept { return target.size(); }
};

inline CtcLattice ctc_alpha_beta(const Matrix &y, const Labelling &l) {
  internal::check_ctc_inputs(y, l);
  const std::size_t T = y.rows();
  if (!is_feasible(T, l))
    throw Error(ErrorKind::kInfeasibleTarget,
                std::to_string(l.size()) + " labels need " + std::to_string(min_frames_for(l)) +
                    " frames, have " + std::to_string(T));
  const int blank = blank_index(y);
  CtcLattice lat;
  lat.target = augment_with_blanks(l, blank);
  const std::size_t S = lat.target.size();
  const auto &tg = lat.target;
  lat.log_y = Matrix(T, y.cols());
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < y.cols(); ++k) lat.log_y(t, k) = safe_log(y(t, k));
  auto ly = [&](std::size_t t, std::size_t s) { return lat.log_y(t, static_cast<std::size_t>(tg[s])); };
  auto skip_ok = [&](std::size_t s, std::ptrdiff_t other) {
    return tg[s] != blank && other >= 0 && other < static_cast<std::ptrdiff_t>(S) &&
           tg[s] != tg[static_cast<std::size_t>(other)];
  };

  Matrix &a = lat.log_alpha;
  a = Matrix(T, S, kLogZero);
  a(0, 0) = ly(0, 0);
  if (S > 1) a(0, 1) = ly(0, 1);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double v = a(t - 1, s);
      if (s >= 1) v = log_add(v, a(t - 1, s - 1));
      if (s >= 2 && skip_ok(s, static_cast<std::ptrdiff_t>(s) - 2)) v = log_add(v, a(t - 1, s - 2));
      a(t, s) = v == kLogZero ? kLogZero : v + ly(t, s);
    }
  }

  Matrix &b = lat.log_beta;
  b = Matrix(T, S, kLogZero);
  b(T - 1, S - 1) = ly(T - 1, S - 1);
  if (S > 1) b(T - 1, S - 2) = ly(T - 1, S - 2);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double v = b(t + 1, s);
      if (s + 1 < S) v = log_add(v, b(t + 1, s + 1));
      if (s + 2 < S && skip_ok(s, static_cast<std::ptrdiff_t>(s) + 2)) v = log_add(v, b(t + 1, s + 2));
      b(t, s) = v == kLogZero ? kLogZero : v + ly(t, s);
    }
  }

  lat.log_prob = a(T - 1, S - 1);
  if (S > 1) lat.log_prob = log_add(lat.log_prob, a(T - 1, S - 2));
  return lat;
}

/// -ln p(l|x), or nullopt when T is too short for l.
inline std::optional<double> ctc_loss(const Matrix &y, const Labelling &l) {
  internal::check_ctc_inputs(y, l);
  if (!is_feasible(y.rows(), l)) return std::nullopt;
  return -ctc_alpha_beta(y, l).log_prob;
}

inline double labelling_probability(const Matrix &y, const Labelling &l) {
  auto loss = ctc_loss(y, l);
  return loss ? std::exp(-*loss) : 0.0;
}

/// log of sum_s alpha(t,s) beta(t,s) / y_t(l'_s); equals log p(l|x) for every t.
inline double log_occupancy_sum(const CtcLattice &lat, std::size_t t) {
  double acc = kLogZero;
  for (std::size_t s = 0; s < lat.states(); ++s) {
    double lyv = lat.log_y(t, static_cast<std::size_t>(lat.target[s]));
    if (lyv == kLogZero || lat.log_alpha(t, s) == kLogZero || lat.log_beta(t, s) == kLogZero)
      continue;
    acc = log_add(acc, lat.log_alpha(t, s) + lat.log_beta(t, s) - lyv);
  }
  return acc;
}

/// dL/da for a = softmax inputs, from a finished lattice.
inline Matrix ctc_gradient(const Matrix &y, const CtcLattice &lat) {
  const std::size_t T = y.rows(), C = y.cols();
  Matrix grad(T, C);
  std::vector<double> occ(C);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(occ.begin(), occ.end(), kLogZero);
    for (std::size_t s = 0; s < lat.states(); ++s) {
      auto k = static_cast<std::size_t>(lat.target[s]);
      double lyv = lat.log_y(t, k);
      if (lyv == kLogZero || lat.log_alpha(t, s) == kLogZero || lat.log_beta(t, s) == kLogZero)
        continue;
      occ[k] = log_add(occ[k], lat.log_alpha(t, s) + lat.log_beta(t, s) - lyv);
    }
    for (std::size_t k = 0; k < C; ++k)
      grad(t, k) = y(t, k) - (occ[k] == kLogZero ? 0.0 : std::exp(occ[k] - lat.log_prob));
  }
  return grad;
}

inline Matrix ctc_gradient(const Matrix &y, const Labelling &l) {
  return ctc_gradient(y, ctc_alpha_beta(y, l));
}

// ---------------------------------------------------------------------------
// Decoding

/// Per-frame argmax (lowest index wins ties), repeats collapsed, blanks dropped.
inline Labelling best_path_decode(const Matrix &y) {
  Labelling out;
  if (y.cols() == 0) return out;
  const int blank = blank_index(y);
  int prev = -1;
  for (std::size_t t = 0; t < y.rows(); ++t) {
    auto r = y.row(t);
    int k = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    if (k != prev && k != blank) out.push_back(k);
    prev = k;
  }
  return out;
}

struct PrefixSearchOptions {
  /// Frames whose blank probability reaches this value split the sequence
  /// into independently searched sections. 1.0 only splits on certain blanks.
  double blank_threshold = 0.9999;
  /// Cap on prefix expansions per section; when hit, the best complete
  /// labelling found so far is returned.
  std::size_t max_expansions = 1'000'000;
};

namespace internal {

struct Prefix {
  Labelling labels;
  std::vector<double> gamma_n;  // ending in a label
  std::vector<double> gamma_b;  // ending in blank
  double prob = 0.0;            // p(labels | x)
  double extension = 0.0;       // p(labels... | x), proper extensions only
};

// Max-heap order: larger extension probability, then shorter, then
// lexicographically smaller.
struct PrefixOrder {
  bool operator()(const Prefix *a, const Prefix *b) const {
    if (a->extension != b->extension) return a->extension < b->extension;
    if (a->labels.size() != b->labels.size()) return a->labels.size() > b->labels.size();
    return a->labels > b->labels;
  }
};

// Best-first prefix search over frames [begin, end) of y.
inline Labelling prefix_search_section(const Matrix &y, std::size_t begin, std::size_t end,
                                       std::size_t max_expansions) {
  const std::size_t T = end - begin;
  const int blank = blank_index(y);
  const auto K = static_cast<std::size_t>(blank);
  auto yk = [&](std::size_t t, std::size_t k) { return y(begin + t, k); };

  std::vector<std::unique_ptr<Prefix>> pool;
  auto root = std::make_unique<Prefix>();
  root->gamma_n.assign(T, 0.0);
  root->gamma_b.assign(T, 0.0);
  double run = 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    run *= yk(t, K);
    root->gamma_b[t] = run;
  }
  root->prob = root->gamma_b[T - 1];
  root->extension = 1.0 - root->prob;

  const Prefix *best = root.get();
  std::priority_queue<const Prefix *, std::vector<const Prefix *>, PrefixOrder> frontier;
  frontier.push(root.get());
  pool.push_back(std::move(root));

  std::size_t expansions = 0;
  while (!frontier.empty()) {
    const Prefix *cur = frontier.top();
    if (!(cur->extension > best->prob)) break;
    if (expansions++ >= max_expansions) break;
    frontier.pop();
    double remaining = cur->extension;
    for (std::size_t k = 0; k < K; ++k) {
      auto next = std::make_unique<Prefix>();
      next->labels = cur->labels;
      next->labels.push_back(static_cast<int>(k));
      next->gamma_n.assign(T, 0.0);
      next->gamma_b.assign(T, 0.0);
      bool ends_in_k = !cur->labels.empty() && cur->labels.back() == static_cast<int>(k);
      next->gamma_n[0] = cur->labels.empty() ? yk(0, k) : 0.0;
      double prefix_prob = next->gamma_n[0];
      for (std::size_t t = 1; t < T; ++t) {
        double new_label = cur->gamma_b[t - 1] + (ends_in_k ? 0.0 : cur->gamma_n[t - 1]);
        next->gamma_n[t] = yk(t, k) * (new_label + next->gamma_n[t - 1]);
        next->gamma_b[t] = yk(t, K) * (next->gamma_b[t - 1] + next->gamma_n[t - 1]);
        prefix_prob += yk(t, k) * new_label;
      }
      next->prob = next->gamma_n[T - 1] + next->gamma_b[T - 1];
      next->extension = prefix_prob - next->prob;
      remaining -= next->extension;
      if (next->prob > best->prob) best = next.get();
      if (next->extension > best->prob) frontier.push(next.get());
      pool.push_back(std::move(next));
      if (remaining <= best->prob) break;
    }
  }
  return best->labels;
}

}  // namespace internal

/// Prefix search decoding. Frames with y_t(blank) >= threshold are
/// boundaries that belong to no section; each maximal run between them is
/// searched on its own and the results are concatenated.
inline Labelling prefix_search_decode(const Matrix &y, const PrefixSearchOptions &opts = {}) {
  if (!(opts.blank_threshold > 0.0 && opts.blank_threshold <= 1.0))
    throw Error(ErrorKind::kInvalidArgument, "blank threshold must be in (0, 1]");
  if (y.cols() < 2)
    throw Error(ErrorKind::kInvalidArgument, "posteriors need at least one label and the blank");
  const auto blank = static_cast<std::size_t>(blank_index(y));
  Labelling out;
  std::size_t t = 0;
  const std::size_t T = y.rows();
  while (t < T) {
    while (t < T && y(t, blank) >= opts.blank_threshold) ++t;
    std::size_t begin = t;
    while (t < T && y(t, blank) < opts.blank_threshold) ++t;
    if (t > begin) {
      auto part = internal::prefix_search_section(y, begin, t, opts.max_expansions);
      out.insert(out.end(), part.begin(), part.end());
    }
  }
  return out;
}

inline Labelling prefix_search_decode(const Matrix &y, double blank_threshold) {
  PrefixSearchOptions o;
  o.blank_threshold = blank_threshold;
  return prefix_search_decode(y, o);
}

}  // namespace blstmctc
