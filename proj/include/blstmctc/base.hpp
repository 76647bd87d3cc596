// blstmctc/base.hpp

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

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace blstmctc {

/// Error categories. Callers that need to tell failures apart (corrupt file vs
/// truncated file, infeasible target vs bad input) switch on this.
enum class ErrorKind {
  kInvalidArgument,
  kDimensionMismatch,
  kUnknownSymbol,
  kInfeasibleTarget,
  kNonFiniteGradient,
  kIo,
  kTruncatedFile,
  kBadSampleSize,
  kSizeMismatch,
  kUnknownContainer,
  kCompressedAudio,
  kUnsupportedSampleFormat,
  kVersionMismatch,
  kCorruptFile,
  kParse,
};

inline const char *error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kDimensionMismatch: return "dimension mismatch";
    case ErrorKind::kUnknownSymbol: return "unknown symbol";
    case ErrorKind::kInfeasibleTarget: return "infeasible target";
    case ErrorKind::kNonFiniteGradient: return "non-finite gradient";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kTruncatedFile: return "truncated file";
    case ErrorKind::kBadSampleSize: return "bad sample size";
    case ErrorKind::kSizeMismatch: return "size mismatch";
    case ErrorKind::kUnknownContainer: return "unknown container";
    case ErrorKind::kCompressedAudio: return "compressed audio";
    case ErrorKind::kUnsupportedSampleFormat: return "unsupported sample format";
    case ErrorKind::kVersionMismatch: return "version mismatch";
    case ErrorKind::kCorruptFile: return "corrupt file";
    case ErrorKind::kParse: return "parse error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what),
        kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Dense row-major matrix of doubles. Rows are frames (time) throughout.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double &operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_)
      throw Error(ErrorKind::kDimensionMismatch,
                  "row has " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(cols_));
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  friend bool operator==(const Matrix &, const Matrix &) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Label indices over a K-symbol alphabet.
using Labelling = std::vector<int>;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline double safe_log(double x) { return x > 0.0 ? std::log(x) : kLogZero; }

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Softmax with max subtraction, in place.
inline void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double &x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double &x : v) x /= sum;
}

}  // namespace blstmctc
