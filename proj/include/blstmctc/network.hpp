// blstmctc/network.hpp

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

// Bidirectional LSTM with peephole memory blocks and a softmax output layer.
//
// One direction, presentation step tau, z = [x_t ; h_prev]:
//
//   i = sigma(W_i z + b_i + p_i c_prev)
//   f = sigma(W_f z + b_f + p_f c_prev)
//   g = tanh (W_g z + b_g)
//   c = f c_prev + i g
//   o = sigma(W_o z + b_o + p_o c)
//   h = o tanh(c)
//
// Both directions feed a = W_out [h_fwd ; h_bwd] + b_out, y = softmax(a).
//
// Parameter layout (canonical order, also the on-disk order). With
// Z = input_dim + H and H = blocks, each direction holds
//
//   W     4H x Z   row (4 b + gate), gate = input, forget, output, cell
//   bias  4H       (4 b + gate)
//   peep  3H       (3 b + gate), gate = input, forget, output
//
// forward direction first, then backward, then W_out (O x 2H row-major) and
// b_out (O).

#pragma once

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "blstmctc/base.hpp"

namespace blstmctc {

struct ModelConfig {
  std::size_t input_dim = 39;
  std::size_t blocks_per_direction = 128;
  std::size_t cells_per_block = 1;
  std::size_t output_dim = 40;

  std::size_t hidden() const noexcept { return blocks_per_direction * cells_per_block; }

  void validate() const {
    if (input_dim < 1 || blocks_per_direction < 1 || cells_per_block < 1)
      throw Error(ErrorKind::kInvalidArgument, "model sizes must be at least 1");
    if (output_dim < 2)
      throw Error(ErrorKind::kInvalidArgument, "output layer needs a label and the blank");
    if (cells_per_block != 1)
      throw Error(ErrorKind::kInvalidArgument, "only one cell per memory block is supported");
  }

  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

enum class Gate : std::size_t { kInput = 0, kForget = 1, kOutput = 2, kCell = 3 };

inline constexpr std::size_t kGateRows = 4;
inline constexpr std::size_t kPeepholes = 3;

inline std::size_t direction_param_count(const ModelConfig &cfg) {
  std::size_t h = cfg.hidden(), z = cfg.input_dim + h;
  return cfg.blocks_per_direction * (3 * (z + 1 + 1) + (z + 1));
}

inline std::size_t param_count(const ModelConfig &cfg) {
  return 2 * direction_param_count(cfg) + cfg.output_dim * (2 * cfg.hidden() + 1);
}

/// Read-only view of one direction's parameters.
struct LstmLayerView {
  std::span<const double> params;
  std::size_t input_dim;
  std::size_t hidden;

  std::size_t z_dim() const noexcept { return input_dim + hidden; }
  std::span<const double> row(std::size_t b, Gate g) const {
    return params.subspan((kGateRows * b + static_cast<std::size_t>(g)) * z_dim(), z_dim());
  }
  double bias(std::size_t b, Gate g) const {
    return params[kGateRows * hidden * z_dim() + kGateRows * b + static_cast<std::size_t>(g)];
  }
  double peephole(std::size_t b, Gate g) const {
    assert(g != Gate::kCell);
    return params[kGateRows * hidden * (z_dim() + 1) + kPeepholes * b +
                  static_cast<std::size_t>(g)];
  }
};

/// Configuration plus every trainable scalar in canonical order. Gradients
/// and momentum buffers use the same type.
struct Weights {
  ModelConfig config;
  std::vector<double> values;

  Weights() = default;
  explicit Weights(const ModelConfig &cfg) : config(cfg), values(param_count(cfg), 0.0) {
    cfg.validate();
  }

  std::size_t size() const noexcept { return values.size(); }

  std::size_t direction_offset(int dir) const { return dir == 0 ? 0 : direction_param_count(config); }
  std::size_t output_offset() const { return 2 * direction_param_count(config); }
  std::size_t output_bias_offset() const {
    return output_offset() + config.output_dim * 2 * config.hidden();
  }

  LstmLayerView direction(int dir) const {
    return {std::span<const double>(values).subspan(direction_offset(dir),
                                                    direction_param_count(config)),
            config.input_dim, config.hidden()};
  }
  std::span<double> direction_mut(int dir) {
    return std::span<double>(values).subspan(direction_offset(dir), direction_param_count(config));
  }

  double &out_weight(std::size_t o, std::size_t j) {
    return values[output_offset() + o * 2 * config.hidden() + j];
  }
  double out_weight(std::size_t o, std::size_t j) const {
    return values[output_offset() + o * 2 * config.hidden() + j];
  }
  double &out_bias(std::size_t o) { return values[output_bias_offset() + o]; }
  double out_bias(std::size_t o) const { return values[output_bias_offset() + o]; }

  void set_zero() { std::fill(values.begin(), values.end(), 0.0); }

  friend bool operator==(const Weights &, const Weights &) = default;
};

/// i.i.d. uniform on [-0.1, 0.1] from a seeded mt19937_64.
inline Weights init_weights(const ModelConfig &cfg, std::uint64_t seed,
                            double range = 0.1) {
  Weights w(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-range, range);
  for (double &v : w.values) v = dist(rng);
  return w;
}

/// Per-step activations of one direction, indexed by original time.
struct DirectionTrace {
  bool reversed = false;
  Matrix input_gate, forget_gate, output_gate, cell_input, cell, output;
};

struct ForwardTrace {
  DirectionTrace fwd, bwd;
  Matrix activations;  // pre-softmax a_t
  Matrix posteriors;   // y_t
};

inline DirectionTrace direction_forward(const LstmLayerView &w, const Matrix &frames,
                                        bool reversed) {
  if (frames.cols() != w.input_dim)
    throw Error(ErrorKind::kDimensionMismatch,
                "frames have dim " + std::to_string(frames.cols()) + ", layer expects " +
                    std::to_string(w.input_dim));
  const std::size_t T = frames.rows(), H = w.hidden, D = w.input_dim, Z = w.z_dim();
  DirectionTrace tr;
  tr.reversed = reversed;
  for (Matrix *m : {&tr.input_gate, &tr.forget_gate, &tr.output_gate, &tr.cell_input,
                    &tr.cell, &tr.output})
    *m = Matrix(T, H);
  std::vector<double> z(Z, 0.0);
  std::vector<double> c_prev(H, 0.0);
  for (std::size_t tau = 0; tau < T; ++tau) {
    std::size_t t = reversed ? T - 1 - tau : tau;
    auto x = frames.row(t);
    std::copy(x.begin(), x.end(), z.begin());
    if (tau == 0) {
      std::fill(z.begin() + static_cast<std::ptrdiff_t>(D), z.end(), 0.0);
    } else {
      std::size_t tp = reversed ? t + 1 : t - 1;
      auto hp = tr.output.row(tp);
      std::copy(hp.begin(), hp.end(), z.begin() + static_cast<std::ptrdiff_t>(D));
    }
    for (std::size_t b = 0; b < H; ++b) {
      double pre[kGateRows];
      for (std::size_t g = 0; g < kGateRows; ++g) {
        auto r = w.row(b, static_cast<Gate>(g));
        double s = w.bias(b, static_cast<Gate>(g));
        for (std::size_t k = 0; k < Z; ++k) s += r[k] * z[k];
        pre[g] = s;
      }
      double cp = c_prev[b];
      double ig = logistic(pre[0] + w.peephole(b, Gate::kInput) * cp);
      double fg = logistic(pre[1] + w.peephole(b, Gate::kForget) * cp);
      double gi = std::tanh(pre[3]);
      double c = fg * cp + ig * gi;
      double og = logistic(pre[2] + w.peephole(b, Gate::kOutput) * c);
      tr.input_gate(t, b) = ig;
      tr.forget_gate(t, b) = fg;
      tr.output_gate(t, b) = og;
      tr.cell_input(t, b) = gi;
      tr.cell(t, b) = c;
      tr.output(t, b) = og * std::tanh(c);
    }
    auto cr = tr.cell.row(t);
    std::copy(cr.begin(), cr.end(), c_prev.begin());
  }
  return tr;
}

inline void check_frames(const Weights &w, const Matrix &frames) {
  if (frames.cols() != w.config.input_dim)
    throw Error(ErrorKind::kDimensionMismatch,
                "expected feature dim " + std::to_string(w.config.input_dim) + ", found " +
                    std::to_string(frames.cols()));
}

inline ForwardTrace blstm_forward(const Weights &w, const Matrix &frames) {
  check_frames(w, frames);
  ForwardTrace tr;
  tr.fwd = direction_forward(w.direction(0), frames, false);
  tr.bwd = direction_forward(w.direction(1), frames, true);
  const std::size_t T = frames.rows(), H = w.config.hidden(), O = w.config.output_dim;
  tr.activations = Matrix(T, O);
  tr.posteriors = Matrix(T, O);
  for (std::size_t t = 0; t < T; ++t) {
    auto hf = tr.fwd.output.row(t);
    auto hb = tr.bwd.output.row(t);
    for (std::size_t o = 0; o < O; ++o) {
      const double *wo = &w.values[w.output_offset() + o * 2 * H];
      double s = w.out_bias(o);
      for (std::size_t j = 0; j < H; ++j) s += wo[j] * hf[j];
      for (std::size_t j = 0; j < H; ++j) s += wo[H + j] * hb[j];
      tr.activations(t, o) = s;
    }
    auto yr = tr.posteriors.row(t);
    auto ar = tr.activations.row(t);
    std::copy(ar.begin(), ar.end(), yr.begin());
    softmax_inplace(yr);
  }
  return tr;
}

/// Converts dL/dy into dL/da through the softmax Jacobian.
inline Matrix softmax_backward(const Matrix &y, const Matrix &grad_y) {
  if (y.rows() != grad_y.rows() || y.cols() != grad_y.cols())
    throw Error(ErrorKind::kDimensionMismatch, "posterior and gradient shapes differ");
  Matrix ga(y.rows(), y.cols());
  for (std::size_t t = 0; t < y.rows(); ++t) {
    double dot = 0.0;
    for (std::size_t k = 0; k < y.cols(); ++k) dot += y(t, k) * grad_y(t, k);
    for (std::size_t k = 0; k < y.cols(); ++k) ga(t, k) = y(t, k) * (grad_y(t, k) - dot);
  }
  return ga;
}

namespace internal {

// Backpropagation through time for one direction. grad_h holds dL/dh_t from
// the output layer (original time order); gradients accumulate into grad.
inline void direction_backward(const LstmLayerView &w, const Matrix &frames,
                               const DirectionTrace &tr, const Matrix &grad_h,
                               std::span<double> grad) {
  const std::size_t T = frames.rows(), H = w.hidden, D = w.input_dim, Z = w.z_dim();
  const std::size_t bias_off = kGateRows * H * Z;
  const std::size_t peep_off = bias_off + kGateRows * H;
  std::vector<double> dh_rec(H, 0.0), dc_carry(H, 0.0), da(kGateRows * H, 0.0);
  std::vector<double> z(Z);
  for (std::size_t step = T; step-- > 0;) {
    std::size_t t = tr.reversed ? T - 1 - step : step;
    bool has_prev = step > 0;
    std::size_t tp = tr.reversed ? t + 1 : t - 1;  // only valid when has_prev
    auto x = frames.row(t);
    std::copy(x.begin(), x.end(), z.begin());
    for (std::size_t j = 0; j < H; ++j) z[D + j] = has_prev ? tr.output(tp, j) : 0.0;

    for (std::size_t b = 0; b < H; ++b) {
      double c = tr.cell(t, b);
      double c_prev = has_prev ? tr.cell(tp, b) : 0.0;
      double ig = tr.input_gate(t, b), fg = tr.forget_gate(t, b);
      double og = tr.output_gate(t, b), gi = tr.cell_input(t, b);
      double tc = std::tanh(c);
      double dh = grad_h(t, b) + dh_rec[b];
      double da_o = dh * tc * og * (1.0 - og);
      double dc = dh * og * (1.0 - tc * tc) + da_o * w.peephole(b, Gate::kOutput) + dc_carry[b];
      double da_i = dc * gi * ig * (1.0 - ig);
      double da_f = dc * c_prev * fg * (1.0 - fg);
      double da_g = dc * ig * (1.0 - gi * gi);
      da[kGateRows * b + 0] = da_i;
      da[kGateRows * b + 1] = da_f;
      da[kGateRows * b + 2] = da_o;
      da[kGateRows * b + 3] = da_g;
      grad[peep_off + kPeepholes * b + 0] += da_i * c_prev;
      grad[peep_off + kPeepholes * b + 1] += da_f * c_prev;
      grad[peep_off + kPeepholes * b + 2] += da_o * c;
      dc_carry[b] = dc * fg + da_i * w.peephole(b, Gate::kInput) +
                    da_f * w.peephole(b, Gate::kForget);
    }
    std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
    for (std::size_t r = 0; r < kGateRows * H; ++r) {
      double d = da[r];
      if (d == 0.0) continue;
      double *gr = &grad[r * Z];
      for (std::size_t k = 0; k < Z; ++k) gr[k] += d * z[k];
      grad[bias_off + r] += d;
      if (has_prev) {
        const double *wr = &w.params[r * Z + D];
        for (std::size_t j = 0; j < H; ++j) dh_rec[j] += d * wr[j];
      }
    }
  }
}

}  // namespace internal

/// Accumulates dL/dw into grad given dL/da (pre-softmax activations).
inline void blstm_backward_into(const Weights &w, const Matrix &frames, const ForwardTrace &tr,
                                const Matrix &grad_act, Weights &grad) {
  check_frames(w, frames);
  const std::size_t T = frames.rows(), H = w.config.hidden(), O = w.config.output_dim;
  if (tr.fwd.output.rows() != T || tr.bwd.output.rows() != T || tr.posteriors.rows() != T)
    throw Error(ErrorKind::kDimensionMismatch, "forward trace does not match the frames");
  if (grad_act.rows() != T || grad_act.cols() != O)
    throw Error(ErrorKind::kDimensionMismatch, "output gradient must be T x output_dim");
  if (grad.config != w.config || grad.size() != w.size())
    throw Error(ErrorKind::kDimensionMismatch, "gradient buffer has the wrong layout");

  Matrix gh_f(T, H), gh_b(T, H);
  const std::size_t oo = w.output_offset(), ob = w.output_bias_offset();
  for (std::size_t t = 0; t < T; ++t) {
    auto hf = tr.fwd.output.row(t);
    auto hb = tr.bwd.output.row(t);
    for (std::size_t o = 0; o < O; ++o) {
      double d = grad_act(t, o);
      if (d == 0.0) continue;
      double *gw = &grad.values[oo + o * 2 * H];
      const double *wo = &w.values[oo + o * 2 * H];
      for (std::size_t j = 0; j < H; ++j) {
        gw[j] += d * hf[j];
        gw[H + j] += d * hb[j];
        gh_f(t, j) += d * wo[j];
        gh_b(t, j) += d * wo[H + j];
      }
      grad.values[ob + o] += d;
    }
  }
  internal::direction_backward(w.direction(0), frames, tr.fwd, gh_f, grad.direction_mut(0));
  internal::direction_backward(w.direction(1), frames, tr.bwd, gh_b, grad.direction_mut(1));
}

inline Weights blstm_backward(const Weights &w, const Matrix &frames, const ForwardTrace &tr,
                              const Matrix &grad_act) {
  Weights g(w.config);
  blstm_backward_into(w, frames, tr, grad_act, g);
  return g;
}

// ---------------------------------------------------------------------------
// Binary serialization. Little-endian throughout.

namespace internal {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  std::vector<unsigned char> &buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const unsigned char> b, std::string name)
      : b_(b), name_(std::move(name)) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size())
      throw Error(ErrorKind::kCorruptFile, name_ + ": unexpected end of file");
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void f64s(std::span<double> out) {
    need(8 * out.size());
    for (double &x : out) x = f64();
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return b_.size() - pos_; }
  const std::string &name() const noexcept { return name_; }

 private:
  std::span<const unsigned char> b_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline void write_bytes(const std::string &path, const std::vector<unsigned char> &b) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path);
  os.write(reinterpret_cast<const char *>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!os) throw Error(ErrorKind::kIo, "write failed for " + path);
}

inline std::vector<unsigned char> read_bytes(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace internal

inline constexpr std::string_view kFileMagic = "BLSTMCTC";
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kContentModel = 0;
inline constexpr std::uint32_t kContentCheckpoint = 1;

namespace internal {

inline void write_header(ByteWriter &w, std::uint32_t content, const ModelConfig &cfg) {
  w.bytes(kFileMagic);
  w.u32(kFormatVersion);
  w.u32(content);
  w.u64(cfg.input_dim);
  w.u64(cfg.blocks_per_direction);
  w.u64(cfg.cells_per_block);
  w.u64(cfg.output_dim);
}

inline std::pair<std::uint32_t, ModelConfig> read_header(ByteReader &r) {
  if (r.remaining() < kFileMagic.size() || r.bytes(kFileMagic.size()) != kFileMagic)
    throw Error(ErrorKind::kCorruptFile, r.name() + ": bad magic");
  std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw Error(ErrorKind::kVersionMismatch, r.name() + ": format version " +
                                                 std::to_string(version) + ", expected " +
                                                 std::to_string(kFormatVersion));
  std::uint32_t content = r.u32();
  ModelConfig cfg;
  cfg.input_dim = r.u64();
  cfg.blocks_per_direction = r.u64();
  cfg.cells_per_block = r.u64();
  cfg.output_dim = r.u64();
  try {
    cfg.validate();
  } catch (const Error &e) {
    throw Error(ErrorKind::kCorruptFile, r.name() + ": " + e.what());
  }
  return {content, cfg};
}

}  // namespace internal

/// Model file: magic, version, content tag (0), four config fields as u64,
/// then every weight as f64 in canonical order.
inline std::vector<unsigned char> encode_model(const Weights &w) {
  internal::ByteWriter out;
  internal::write_header(out, kContentModel, w.config);
  out.f64s(w.values);
  return std::move(out.buffer());
}

inline Weights decode_model(std::span<const unsigned char> bytes, const std::string &name) {
  internal::ByteReader r(bytes, name);
  auto [content, cfg] = internal::read_header(r);
  if (content != kContentModel)
    throw Error(ErrorKind::kCorruptFile, name + ": not a model file");
  Weights w(cfg);
  r.f64s(w.values);
  if (r.remaining() != 0)
    throw Error(ErrorKind::kCorruptFile, name + ": trailing bytes after weights");
  return w;
}

inline void save_model(const std::string &path, const Weights &w) {
  internal::write_bytes(path, encode_model(w));
}

inline Weights load_model(const std::string &path) {
  return decode_model(internal::read_bytes(path), path);
}

}  // namespace blstmctc
