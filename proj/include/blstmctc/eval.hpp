// blstmctc/eval.hpp

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

// Label error rate scoring and multi-run significance statistics.

#pragma once

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "blstmctc/base.hpp"

namespace blstmctc {

struct EditCounts {
  std::size_t distance = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
};

/// Unit-cost Levenshtein distance between ref and hyp, with the S/I/D split
/// of one minimal alignment. Backtrace prefers substitution (or match), then
/// insertion, then deletion.
template <typename Seq>
EditCounts edit_distance(const Seq &ref, const Seq &hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t & { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  EditCounts c;
  c.distance = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++c.insertions;
      --j;
    } else {
      ++c.deletions;
      --i;
    }
  }
  return c;
}

struct ScoreReport {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t target_label_count = 0;
  std::size_t utterances = 0;
  double ler = 0.0;

  std::size_t errors() const noexcept { return substitutions + insertions + deletions; }
};

/// Pooled label error rate: total edits over total reference labels.
template <typename Seq>
ScoreReport corpus_ler(const std::vector<std::pair<Seq, Seq>> &pairs) {
  if (pairs.empty()) throw Error(ErrorKind::kInvalidArgument, "no utterances to score");
  ScoreReport r;
  for (const auto &[ref, hyp] : pairs) {
    auto c = edit_distance(ref, hyp);
    r.substitutions += c.substitutions;
    r.insertions += c.insertions;
    r.deletions += c.deletions;
    r.target_label_count += ref.size();
  }
  r.utterances = pairs.size();
  if (r.target_label_count == 0)
    throw Error(ErrorKind::kInvalidArgument, "reference transcripts contain no labels");
  r.ler = static_cast<double>(r.errors()) / static_cast<double>(r.target_label_count);
  return r;
}

/// "LER <value>" line, the S/I/D line, then a key=value block.
inline void write_score_report(std::ostream &os, const ScoreReport &r) {
  std::ostringstream v;
  v << std::setprecision(10) << r.ler;
  os << "LER " << v.str() << "\n";
  os << "S " << r.substitutions << " I " << r.insertions << " D " << r.deletions << " N "
     << r.target_label_count << "\n";
  os << "ler=" << v.str() << "\n"
     << "substitutions=" << r.substitutions << "\n"
     << "insertions=" << r.insertions << "\n"
     << "deletions=" << r.deletions << "\n"
     << "reference_labels=" << r.target_label_count << "\n"
     << "utterances=" << r.utterances << "\n";
}

// ---------------------------------------------------------------------------
// Statistics

struct RunStats {
  std::size_t n = 0;
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Mean and standard error (sample std with n-1, over sqrt(n)).
inline RunStats aggregate_runs(const std::vector<double> &values) {
  if (values.size() < 2)
    throw Error(ErrorKind::kInvalidArgument,
                "standard error needs at least two runs, got " + std::to_string(values.size()));
  RunStats s;
  s.n = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.standard_error = std::sqrt(ss / static_cast<double>(s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  return s;
}

namespace internal {

// Modified Lentz continued fraction for the incomplete beta function.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace internal

/// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0) || x < 0.0 || x > 1.0)
    throw Error(ErrorKind::kInvalidArgument, "incomplete beta arguments out of range");
  if (x == 0.0 || x == 1.0) return x;
  double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                     b * std::log1p(-x);
  double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * internal::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * internal::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(|T| >= |t|) for Student's t with df degrees of freedom (df may be fractional).
inline double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorKind::kInvalidArgument, "degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// t = (mean - reference) / s.e. on n-1 degrees of freedom.
inline TTestResult one_sample_t_test(const RunStats &s, double reference) {
  if (s.n < 2) throw Error(ErrorKind::kInvalidArgument, "t-test needs at least two runs");
  if (!(s.standard_error > 0.0))
    throw Error(ErrorKind::kInvalidArgument, "t-test with zero standard error");
  TTestResult r;
  r.t = (s.mean - reference) / s.standard_error;
  r.df = static_cast<double>(s.n - 1);
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

/// Welch's unequal-variance test with Welch-Satterthwaite degrees of freedom.
inline TTestResult two_sample_t_test(const RunStats &a, const RunStats &b) {
  if (a.n < 2 || b.n < 2) throw Error(ErrorKind::kInvalidArgument, "t-test needs at least two runs per group");
  double va = a.standard_error * a.standard_error;
  double vb = b.standard_error * b.standard_error;
  if (!(va + vb > 0.0))
    throw Error(ErrorKind::kInvalidArgument, "t-test with zero standard errors");
  TTestResult r;
  r.t = (a.mean - b.mean) / std::sqrt(va + vb);
  double denom = 0.0;
  if (va > 0.0) denom += va * va / static_cast<double>(a.n - 1);
  if (vb > 0.0) denom += vb * vb / static_cast<double>(b.n - 1);
  r.df = (va + vb) * (va + vb) / denom;
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

}  // namespace blstmctc
