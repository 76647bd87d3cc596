// blstmctc/oracles.hpp

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

// Slow reference computations used by the test suites and `selfcheck`.
// None of these call into the code they are meant to check.

#pragma once

#include <functional>
#include <map>
#include <random>
#include <vector>

#include "blstmctc/base.hpp"

namespace blstmctc::oracle {

/// Collapses a frame-level path: merge repeats, then drop blanks.
inline Labelling collapse_path(const std::vector<int> &path, int blank) {
  Labelling out;
  int prev = -1;
  for (int k : path) {
    if (k != prev && k != blank) out.push_back(k);
    prev = k;
  }
  return out;
}

/// Calls fn(path, probability) for every one of the C^T frame-level paths.
inline void for_each_path(const Matrix &y,
                          const std::function<void(const std::vector<int> &, double)> &fn) {
  const std::size_t T = y.rows(), C = y.cols();
  std::vector<int> path(T, 0);
  while (true) {
    double p = 1.0;
    for (std::size_t t = 0; t < T; ++t) p *= y(t, static_cast<std::size_t>(path[t]));
    fn(path, p);
    std::size_t t = 0;
    while (t < T && ++path[t] == static_cast<int>(C)) path[t++] = 0;
    if (t == T) break;
  }
}

/// p(l|x) by summing every path that collapses to l.
inline double path_sum_probability(const Matrix &y, const Labelling &l) {
  const int blank = static_cast<int>(y.cols()) - 1;
  double total = 0.0;
  for_each_path(y, [&](const std::vector<int> &path, double p) {
    if (collapse_path(path, blank) == l) total += p;
  });
  return total;
}

/// Probability of every labelling reachable from y.
inline std::map<Labelling, double> all_labelling_probabilities(const Matrix &y) {
  const int blank = static_cast<int>(y.cols()) - 1;
  std::map<Labelling, double> probs;
  for_each_path(y, [&](const std::vector<int> &path, double p) {
    probs[collapse_path(path, blank)] += p;
  });
  return probs;
}

/// Direct-space alpha recursion (no logs), for comparison with log space.
inline double direct_space_probability(const Matrix &y, const Labelling &l) {
  const int blank = static_cast<int>(y.cols()) - 1;
  std::vector<int> ext{blank};
  for (int k : l) {
    ext.push_back(k);
    ext.push_back(blank);
  }
  const std::size_t S = ext.size(), T = y.rows();
  std::vector<double> a(S, 0.0), next(S);
  a[0] = y(0, static_cast<std::size_t>(blank));
  if (S > 1) a[1] = y(0, static_cast<std::size_t>(ext[1]));
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double v = a[s] + (s >= 1 ? a[s - 1] : 0.0);
      if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]) v += a[s - 2];
      next[s] = v * y(t, static_cast<std::size_t>(ext[s]));
    }
    a.swap(next);
  }
  return a[S - 1] + (S > 1 ? a[S - 2] : 0.0);
}

/// The most probable labelling by exhaustive enumeration, with its
/// probability and the runner-up probability (to detect near ties).
struct ArgmaxLabelling {
  Labelling labels;
  double prob = 0.0;
  double runner_up = 0.0;
};

inline ArgmaxLabelling exhaustive_argmax(const Matrix &y) {
  ArgmaxLabelling best;
  for (const auto &[l, p] : all_labelling_probabilities(y)) {
    if (p > best.prob) {
      best.runner_up = best.prob;
      best.prob = p;
      best.labels = l;
    } else if (p > best.runner_up) {
      best.runner_up = p;
    }
  }
  return best;
}

/// Edit distance by the suffix recursion
///   d(i,j) = min(d(i+1,j+1) + [a_i != b_j], d(i+1,j) + 1, d(i,j+1) + 1),
/// memoized.
template <typename Seq>
std::size_t recursive_edit_distance(const Seq &a, const Seq &b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::ptrdiff_t> memo((n + 1) * (m + 1), -1);
  std::function<std::size_t(std::size_t, std::size_t)> rec = [&](std::size_t i,
                                                                 std::size_t j) -> std::size_t {
    if (i == n) return m - j;
    if (j == m) return n - i;
    auto &slot = memo[i * (m + 1) + j];
    if (slot >= 0) return static_cast<std::size_t>(slot);
    std::size_t v = std::min({rec(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1), rec(i + 1, j) + 1,
                              rec(i, j + 1) + 1});
    slot = static_cast<std::ptrdiff_t>(v);
    return v;
  };
  return rec(0, 0);
}

/// Central finite difference of f at x along coordinate i.
inline double central_difference(const std::function<double(std::span<const double>)> &f,
                                 std::vector<double> x, std::size_t i, double step) {
  double orig = x[i];
  x[i] = orig + step;
  double up = f(x);
  x[i] = orig - step;
  double down = f(x);
  return (up - down) / (2.0 * step);
}

/// Relative error with an absolute floor so zero gradients compare sanely.
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

/// Random row-stochastic T x C matrix with entries bounded away from zero.
template <typename Rng>
Matrix random_posteriors(std::size_t T, std::size_t C, Rng &rng, double min_entry = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix y(T, C);
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < C; ++k) {
      y(t, k) = min_entry + u(rng);
      s += y(t, k);
    }
    for (std::size_t k = 0; k < C; ++k) y(t, k) /= s;
  }
  return y;
}

}  // namespace blstmctc::oracle
