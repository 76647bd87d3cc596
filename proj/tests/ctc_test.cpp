// tests/ctc_test.cpp

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

#include "blstmctc/ctc.hpp"

#include <gtest/gtest.h>

#include <random>

#include "blstmctc/oracles.hpp"

namespace blstmctc {
namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m;
  for (auto row : r) m.append_row(std::vector<double>(row));
  return m;
}

/// Posteriors whose per-frame argmax follows `path` (blank = C-1).
Matrix peaked(const std::vector<int> &path, std::size_t C) {
  Matrix y(path.size(), C, 0.1 / static_cast<double>(C - 1));
  for (std::size_t t = 0; t < path.size(); ++t) y(t, static_cast<std::size_t>(path[t])) = 0.9;
  return y;
}

Labelling random_labelling(std::mt19937_64 &rng, std::size_t max_len, int K) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> lab(0, K - 1);
  Labelling l(len(rng));
  for (int &v : l) v = lab(rng);
  return l;
}

TEST(Augment, Examples) {
  const int blank = 9;
  EXPECT_EQ(augment_with_blanks({0, 1}, blank), (std::vector<int>{9, 0, 9, 1, 9}));
  EXPECT_EQ(augment_with_blanks({}, blank), (std::vector<int>{9}));
  EXPECT_EQ(augment_with_blanks({3, 3}, blank), (std::vector<int>{9, 3, 9, 3, 9}));
  EXPECT_THROW(augment_with_blanks({1, 9}, blank), Error);
}

TEST(CtcLoss, SingleFrame) {
  auto y = rows({{0.8, 0.2}});
  EXPECT_NEAR(*ctc_loss(y, {0}), -std::log(0.8), 1e-15);
}

TEST(CtcLoss, TwoFramesUniform) {
  auto y = rows({{0.5, 0.5}, {0.5, 0.5}});
  // paths (a,a), (blank,a), (a,blank)
  EXPECT_NEAR(*ctc_loss(y, {0}), -std::log(0.75), 1e-15);
  EXPECT_NEAR(oracle::path_sum_probability(y, {0}), 0.75, 1e-15);
}

TEST(CtcLoss, InfeasibleIsDistinct) {
  auto y = rows({{0.3, 0.3, 0.4}});
  EXPECT_FALSE(ctc_loss(y, {0, 1}).has_value());
  EXPECT_EQ(labelling_probability(y, {0, 1}), 0.0);
  try {
    ctc_alpha_beta(y, {0, 1});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasibleTarget);
  }
  // repeated labels need a blank in between: (a,a) needs 3 frames
  auto y2 = rows({{0.5, 0.5}, {0.5, 0.5}});
  EXPECT_FALSE(ctc_loss(y2, {0, 0}).has_value());
  auto y3 = rows({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
  EXPECT_NEAR(*ctc_loss(y3, {0, 0}), -std::log(0.125), 1e-14);
}

TEST(CtcLoss, RejectsBadLabels) {
  auto y = rows({{0.5, 0.5}});
  EXPECT_THROW(ctc_loss(y, {1}), Error);
  EXPECT_THROW(ctc_loss(y, {-1}), Error);
}

TEST(CtcLoss, MatchesPathEnumeration) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> tlen(1, 6), kk(1, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t T = tlen(rng), K = kk(rng);
    auto y = oracle::random_posteriors(T, K + 1, rng);
    auto l = random_labelling(rng, 3, static_cast<int>(K));
    double brute = oracle::path_sum_probability(y, l);
    auto loss = ctc_loss(y, l);
    if (!is_feasible(T, l)) {
      EXPECT_FALSE(loss);
      EXPECT_EQ(brute, 0.0);
      continue;
    }
    ASSERT_TRUE(loss);
    EXPECT_LT(oracle::relative_error(*loss, -std::log(brute), 0.0), 1e-10);
  }
}

TEST(CtcAlphaBeta, OccupancyIdentityAtEveryFrame) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> tlen(1, 8), kk(1, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t T = tlen(rng), K = kk(rng);
    auto y = oracle::random_posteriors(T, K + 1, rng);
    auto l = random_labelling(rng, 3, static_cast<int>(K));
    if (!is_feasible(T, l)) continue;
    auto lat = ctc_alpha_beta(y, l);
    for (std::size_t t = 0; t < T; ++t)
      ASSERT_LT(std::fabs(std::expm1(log_occupancy_sum(lat, t) - lat.log_prob)), 1e-10);
    double p = std::exp(lat.log_prob);
    double direct = std::exp(lat.log_alpha(T - 1, lat.states() - 1));
    if (lat.states() > 1) direct += std::exp(lat.log_alpha(T - 1, lat.states() - 2));
    EXPECT_NEAR(direct, p, 1e-15);
    EXPECT_NEAR(p, std::exp(-*ctc_loss(y, l)), 1e-15);
  }
}

TEST(CtcAlphaBeta, SingleFrameIdentity) {
  auto y = rows({{0.7, 0.3}});
  auto lat = ctc_alpha_beta(y, {0});
  double v = std::exp(lat.log_alpha(0, 1) + lat.log_beta(0, 1)) / 0.7;
  EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(CtcAlphaBeta, LogSpaceAgreesWithDirectSpace) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto y = oracle::random_posteriors(12, 4, rng, 0.01);
    auto l = random_labelling(rng, 5, 3);
    double direct = oracle::direct_space_probability(y, l);
    EXPECT_LT(oracle::relative_error(labelling_probability(y, l), direct, 0.0), 1e-10);
  }
}

TEST(CtcAlphaBeta, LongSequencesDoNotUnderflow) {
  std::mt19937_64 rng(8);
  auto y = oracle::random_posteriors(700, 40, rng);
  Labelling l;
  for (int i = 0; i < 80; ++i) l.push_back(i % 39);
  auto loss = ctc_loss(y, l);
  ASSERT_TRUE(loss);
  EXPECT_TRUE(std::isfinite(*loss));
  EXPECT_GT(*loss, 700.0);  // direct space would be far below 1e-308
}

TEST(CtcLoss, InvariantUnderPermutingOtherColumns) {
  std::mt19937_64 rng(17);
  auto y = oracle::random_posteriors(6, 5, rng);
  Labelling l{1, 3};
  Matrix z = y;
  for (std::size_t t = 0; t < 6; ++t) std::swap(z(t, 0), z(t, 2));
  EXPECT_DOUBLE_EQ(*ctc_loss(y, l), *ctc_loss(z, l));
}

TEST(CtcGradient, RowsSumToZero) {
  std::mt19937_64 rng(4);
  auto y = oracle::random_posteriors(7, 4, rng);
  auto g = ctc_gradient(y, Labelling{0, 2, 2});
  for (std::size_t t = 0; t < 7; ++t) {
    double s = 0.0;
    for (double v : g.row(t)) s += v;
    EXPECT_NEAR(s, 0.0, 1e-10);
  }
}

TEST(CtcGradient, SingleFrameIsSoftmaxMinusOneHot) {
  auto y = rows({{0.6, 0.1, 0.3}});
  auto g = ctc_gradient(y, Labelling{1});
  EXPECT_NEAR(g(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(g(0, 1), 0.1 - 1.0, 1e-15);
  EXPECT_NEAR(g(0, 2), 0.3, 1e-15);
}

TEST(CtcGradient, MatchesFiniteDifferencesThroughSoftmax) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a(6, 4);
    for (double &v : a.data()) v = g(rng);
    Labelling l = {static_cast<int>(rng() % 3), static_cast<int>(rng() % 3)};
    auto loss = [&](std::span<const double> p) {
      Matrix y(6, 4);
      std::copy(p.begin(), p.end(), y.data().begin());
      for (std::size_t t = 0; t < 6; ++t) softmax_inplace(y.row(t));
      return *ctc_loss(y, l);
    };
    Matrix y = a;
    for (std::size_t t = 0; t < 6; ++t) softmax_inplace(y.row(t));
    auto grad = ctc_gradient(y, l);
    std::vector<double> av(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < av.size(); ++i) {
      double fd = oracle::central_difference(loss, av, i, 1e-5);
      ASSERT_LT(oracle::relative_error(grad.data()[i], fd, 1e-4), 1e-6) << "trial " << trial << " i " << i;
    }
  }
}

TEST(BestPath, Examples) {
  // C = 3: labels a=0, b=1, blank=2
  EXPECT_EQ(best_path_decode(peaked({2, 0, 0, 2, 1}, 3)), (Labelling{0, 1}));
  EXPECT_EQ(best_path_decode(peaked({0, 2, 0}, 3)), (Labelling{0, 0}));
  EXPECT_EQ(best_path_decode(peaked({0, 0}, 3)), (Labelling{0}));
  EXPECT_TRUE(best_path_decode(peaked({2, 2}, 3)).empty());
  EXPECT_TRUE(best_path_decode(Matrix(0, 3)).empty());
}

TEST(PrefixSearch, Examples) {
  EXPECT_EQ(prefix_search_decode(rows({{0.7, 0.3}}), 1.0), (Labelling{0}));
  auto y = rows({{0.4, 0.6}, {0.4, 0.6}});
  // best path reads blank,blank -> empty (p = 0.36) but p(a) = 0.64
  EXPECT_TRUE(best_path_decode(y).empty());
  EXPECT_EQ(prefix_search_decode(y, 1.0), (Labelling{0}));
  EXPECT_NEAR(labelling_probability(y, {}), 0.36, 1e-15);
  EXPECT_NEAR(labelling_probability(y, {0}), 0.64, 1e-15);
}

TEST(PrefixSearch, ThresholdValidation) {
  auto y = rows({{0.7, 0.3}});
  EXPECT_THROW(prefix_search_decode(y, 0.0), Error);
  EXPECT_THROW(prefix_search_decode(y, 1.5), Error);
}

TEST(PrefixSearch, UnsectionedFindsExactArgmax) {
  std::mt19937_64 rng(123);
  std::uniform_int_distribution<std::size_t> tlen(1, 6), kk(1, 2);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t T = tlen(rng), K = kk(rng);
    auto y = oracle::random_posteriors(T, K + 1, rng);
    auto best = oracle::exhaustive_argmax(y);
    if (best.prob - best.runner_up < 1e-12) continue;  // exact tie, either answer is right
    auto got = prefix_search_decode(y, 1.0);
    ASSERT_EQ(got, best.labels) << "trial " << trial;
    EXPECT_GE(labelling_probability(y, got), labelling_probability(y, best_path_decode(y)));
    ++checked;
  }
  EXPECT_GT(checked, 280);
}

TEST(PrefixSearch, SectionsSplitAtConfidentBlanks) {
  // Frames 0-1 favour label 0, frame 2 is a near-certain blank, frames 3-4
  // favour label 1. Each section is searched on its own.
  auto y = rows({{0.6, 0.1, 0.3},
                 {0.5, 0.1, 0.4},
                 {0.00001, 0.00001, 0.99998},
                 {0.1, 0.7, 0.2},
                 {0.2, 0.5, 0.3}});
  auto full = prefix_search_decode(y, 0.9999);
  auto left = prefix_search_decode(rows({{0.6, 0.1, 0.3}, {0.5, 0.1, 0.4}}), 1.0);
  auto right = prefix_search_decode(rows({{0.1, 0.7, 0.2}, {0.2, 0.5, 0.3}}), 1.0);
  Labelling joined = left;
  joined.insert(joined.end(), right.begin(), right.end());
  EXPECT_EQ(full, joined);
  EXPECT_EQ(full, (Labelling{0, 1}));
}

TEST(PrefixSearch, SameLabelAcrossBoundaryIsKept) {
  auto y = rows({{0.9, 0.1}, {0.0, 1.0}, {0.9, 0.1}});
  EXPECT_EQ(prefix_search_decode(y, 0.9999), (Labelling{0, 0}));
}

TEST(PrefixSearch, AllBlankSectionsGiveEmptyLabelling) {
  auto y = rows({{0.0, 1.0}, {0.0, 1.0}});
  EXPECT_TRUE(prefix_search_decode(y, 0.9999).empty());
  EXPECT_TRUE(prefix_search_decode(Matrix(0, 2), 0.9999).empty());
}

TEST(LabellingProbability, PathPartitionIsComplete) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t T = 1 + rng() % 5, K = 1 + rng() % 2;
    auto y = oracle::random_posteriors(T, K + 1, rng);
    double total = 0.0;
    for (const auto &[l, p] : oracle::all_labelling_probabilities(y)) {
      double mine = labelling_probability(y, l);
      EXPECT_GE(mine, 0.0);
      EXPECT_LE(mine, 1.0);
      EXPECT_NEAR(mine, p, 1e-14);
      total += mine;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

}  // namespace
}  // namespace blstmctc
