// blstmctc/features.hpp

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

// MFCC front-end and feature/audio file formats.
//
// Pipeline: pre-emphasis on the whole waveform, Hamming-windowed frames,
// magnitude spectrum through a mel filterbank, natural-log energies, DCT
// (c1..cN then c0), then delta and acceleration regression over Theta = 2.
// No liftering and no energy replacement of c0.

#pragma once

#include <bit>
#include <complex>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "blstmctc/base.hpp"

namespace blstmctc {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
};

/// T x D frames plus the frame period in seconds. htk_parm_kind travels with
/// the data so HTK files round-trip; 9 is HTK's USER kind.
struct FeatureSequence {
  Matrix frames;
  double frame_period = 0.01;
  std::uint16_t htk_parm_kind = 9;

  std::size_t num_frames() const noexcept { return frames.rows(); }
  std::size_t dim() const noexcept { return frames.cols(); }
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> scale;
};

inline constexpr std::uint16_t kHtkMfcc = 6;
inline constexpr std::uint16_t kHtkUser = 9;
inline constexpr std::uint16_t kHtkQualE = 0000100;
inline constexpr std::uint16_t kHtkQualD = 0000400;
inline constexpr std::uint16_t kHtkQualA = 0001000;
inline constexpr std::uint16_t kHtkQualC = 0002000;
inline constexpr std::uint16_t kHtkQualK = 0010000;
inline constexpr std::uint16_t kHtkQual0 = 0020000;
inline constexpr std::uint16_t kHtkMfcc0DA = kHtkMfcc | kHtkQual0 | kHtkQualD | kHtkQualA;

inline double mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * std::expm1(m / 1127.0); }

// ---------------------------------------------------------------------------
// Signal processing

inline Waveform pre_emphasize(const Waveform &w, double k) {
  if (w.samples.empty())
    throw Error(ErrorKind::kInvalidArgument, "pre-emphasis of an empty waveform");
  if (!(k >= 0.0 && k < 1.0))
    throw Error(ErrorKind::kInvalidArgument, "pre-emphasis coefficient must be in [0,1)");
  Waveform out{std::vector<double>(w.samples.size()), w.sample_rate};
  out.samples[0] = (1.0 - k) * w.samples[0];
  for (std::size_t n = 1; n < w.samples.size(); ++n)
    out.samples[n] = w.samples[n] - k * w.samples[n - 1];
  return out;
}

inline std::vector<double> hamming_window(std::size_t n) {
  std::vector<double> h(n, 1.0);
  if (n < 2) return h;
  for (std::size_t i = 0; i < n; ++i)
    h[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  return h;
}

/// Window and step converted to sample counts (rounded).
inline std::pair<std::size_t, std::size_t> frame_lengths(int rate, double window,
                                                         double step) {
  if (rate <= 0) throw Error(ErrorKind::kInvalidArgument, "sample rate must be positive");
  double nw = std::round(window * rate), ns = std::round(step * rate);
  if (nw < 1.0 || ns < 1.0)
    throw Error(ErrorKind::kInvalidArgument,
                "window and step must cover at least one sample");
  return {static_cast<std::size_t>(nw), static_cast<std::size_t>(ns)};
}

inline std::size_t frame_count(std::size_t n, std::size_t nwin, std::size_t nstep) {
  return n < nwin ? 0 : (n - nwin) / nstep + 1;
}

/// Hamming-windowed frames, one per row.
inline Matrix frame_signal(const Waveform &w, double window, double step) {
  auto [nwin, nstep] = frame_lengths(w.sample_rate, window, step);
  std::size_t n = w.samples.size();
  if (n < nwin)
    throw Error(ErrorKind::kInvalidArgument,
                "signal of " + std::to_string(n) + " samples is shorter than one " +
                    std::to_string(nwin) + "-sample window");
  std::size_t count = frame_count(n, nwin, nstep);
  auto h = hamming_window(nwin);
  Matrix frames(count, nwin);
  for (std::size_t f = 0; f < count; ++f)
    for (std::size_t i = 0; i < nwin; ++i)
      frames(f, i) = w.samples[f * nstep + i] * h[i];
  return frames;
}

/// In-place iterative radix-2 FFT. Size must be a power of two.
inline void fft(std::vector<std::complex<double>> &a) {
  std::size_t n = a.size();
  assert(std::has_single_bit(n));
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        auto u = a[i + j], v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

/// |X_k| for k = 0..N/2 after zero padding to the next power of two N.
inline std::vector<double> magnitude_spectrum(std::span<const double> frame) {
  std::size_t n = std::bit_ceil(std::max<std::size_t>(frame.size(), 2));
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = frame[i];
  fft(buf);
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(buf[k]);
  return mag;
}

inline constexpr double kLogEnergyFloor = 1e-10;

/// Center frequencies (Hz) of `channels` triangular filters equally spaced on
/// the mel scale strictly inside (lo, hi).
inline std::vector<double> mel_centers(std::size_t channels, double lo, double hi) {
  double mlo = mel(lo), mhi = mel(hi);
  double spacing = (mhi - mlo) / static_cast<double>(channels + 1);
  std::vector<double> c(channels);
  for (std::size_t j = 0; j < channels; ++j)
    c[j] = mel_to_hz(mlo + spacing * static_cast<double>(j + 1));
  return c;
}

/// Log filterbank outputs of one windowed frame. Filter j spans mel edges
/// j-1..j+1 on a grid of channels+2 points from mel(lo) to mel(hi); weights
/// apply to the magnitude spectrum. Outputs below 1e-10 are clamped first.
inline std::vector<double> mel_filterbank_energies(std::span<const double> frame,
                                                   std::size_t channels, double lo,
                                                   double hi, int rate) {
  if (channels < 1) throw Error(ErrorKind::kInvalidArgument, "need at least one channel");
  if (rate <= 0 || !(lo >= 0.0 && lo < hi && hi <= rate / 2.0))
    throw Error(ErrorKind::kInvalidArgument,
                "band edges must satisfy 0 <= lo < hi <= rate/2");
  auto mag = magnitude_spectrum(frame);
  std::size_t nfft = (mag.size() - 1) * 2;
  double mlo = mel(lo), mhi = mel(hi);
  double spacing = (mhi - mlo) / static_cast<double>(channels + 1);
  std::vector<double> energy(channels, 0.0);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    double f = static_cast<double>(k) * rate / static_cast<double>(nfft);
    if (f < lo || f > hi) continue;
    double pos = (mel(f) - mlo) / spacing;  // 0 .. channels+1
    auto left = static_cast<std::ptrdiff_t>(std::floor(pos));  // filter whose center is left
    double frac = pos - static_cast<double>(left);
    // Bin contributes to the rising edge of filter left+1 and the falling edge of filter left.
    if (left >= 1 && left <= static_cast<std::ptrdiff_t>(channels))
      energy[static_cast<std::size_t>(left - 1)] += (1.0 - frac) * mag[k];
    if (left + 1 >= 1 && left + 1 <= static_cast<std::ptrdiff_t>(channels))
      energy[static_cast<std::size_t>(left)] += frac * mag[k];
  }
  for (double &e : energy) e = std::log(std::max(e, kLogEnergyFloor));
  return energy;
}

/// c_1..c_n followed by c_0 when include_c0.
inline std::vector<double> dct_cepstra(std::span<const double> log_energy,
                                       std::size_t n_cepstra, bool include_c0) {
  std::size_t m = log_energy.size();
  if (n_cepstra > m)
    throw Error(ErrorKind::kInvalidArgument,
                std::to_string(n_cepstra) + " cepstra requested from " +
                    std::to_string(m) + " channels");
  double norm = std::sqrt(2.0 / static_cast<double>(m));
  auto coef = [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 1; j <= m; ++j)
      s += log_energy[j - 1] * std::cos(static_cast<double>(i) * std::numbers::pi *
                                        (static_cast<double>(j) - 0.5) /
                                        static_cast<double>(m));
    return norm * s;
  };
  std::vector<double> c;
  c.reserve(n_cepstra + 1);
  for (std::size_t i = 1; i <= n_cepstra; ++i) c.push_back(coef(i));
  if (include_c0) c.push_back(coef(0));
  return c;
}

inline constexpr int kDeltaWindow = 2;

/// Regression deltas over +-kDeltaWindow frames with edge replication.
inline Matrix regression_deltas(const Matrix &c) {
  std::size_t T = c.rows(), D = c.cols();
  Matrix d(T, D);
  double denom = 0.0;
  for (int th = 1; th <= kDeltaWindow; ++th) denom += 2.0 * th * th;
  auto clampt = [T](std::ptrdiff_t t) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t, 0, static_cast<std::ptrdiff_t>(T) - 1));
  };
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < D; ++k) {
      double s = 0.0;
      for (int th = 1; th <= kDeltaWindow; ++th) {
        auto tt = static_cast<std::ptrdiff_t>(t);
        s += th * (c(clampt(tt + th), k) - c(clampt(tt - th), k));
      }
      d(t, k) = s / denom;
    }
  return d;
}

/// [static | delta | acceleration], dim 3D.
inline FeatureSequence append_deltas(const FeatureSequence &f) {
  if (f.num_frames() < 1)
    throw Error(ErrorKind::kInvalidArgument, "delta computation needs at least one frame");
  Matrix d = regression_deltas(f.frames);
  Matrix a = regression_deltas(d);
  std::size_t T = f.num_frames(), D = f.dim();
  FeatureSequence out{Matrix(T, 3 * D), f.frame_period, f.htk_parm_kind};
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < D; ++k) {
      out.frames(t, k) = f.frames(t, k);
      out.frames(t, D + k) = d(t, k);
      out.frames(t, 2 * D + k) = a(t, k);
    }
  if (f.htk_parm_kind != kHtkUser) out.htk_parm_kind |= kHtkQualD | kHtkQualA;
  return out;
}

/// Front-end parameters; defaults give the 39-dimensional MFCC_0_D_A setup.
struct FrontEndConfig {
  double pre_emphasis = 0.97;
  double window = 0.025;
  double step = 0.010;
  std::size_t channels = 40;
  double low_freq = 64.0;
  double high_freq = 8000.0;
  std::size_t n_cepstra = 12;
  bool include_c0 = true;
  bool deltas = true;
};

inline FeatureSequence compute_mfcc(const Waveform &w, const FrontEndConfig &cfg = {}) {
  Waveform emph = pre_emphasize(w, cfg.pre_emphasis);
  Matrix frames = frame_signal(emph, cfg.window, cfg.step);
  FeatureSequence f;
  f.frame_period = cfg.step;
  f.htk_parm_kind = static_cast<std::uint16_t>(kHtkMfcc | (cfg.include_c0 ? kHtkQual0 : 0));
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    auto le = mel_filterbank_energies(frames.row(t), cfg.channels, cfg.low_freq,
                                      cfg.high_freq, w.sample_rate);
    f.frames.append_row(dct_cepstra(le, cfg.n_cepstra, cfg.include_c0));
  }
  return cfg.deltas ? append_deltas(f) : f;
}

// ---------------------------------------------------------------------------
// Normalization

inline constexpr double kScaleFloor = 1e-8;

/// Pooled mean and population standard deviation over every frame of the corpus.
inline NormalizationStats compute_normalization(const std::vector<FeatureSequence> &corpus) {
  if (corpus.empty())
    throw Error(ErrorKind::kInvalidArgument, "normalization over an empty corpus");
  std::size_t D = corpus.front().dim();
  std::vector<double> sum(D, 0.0);
  std::size_t n = 0;
  for (const auto &f : corpus) {
    if (f.dim() != D)
      throw Error(ErrorKind::kDimensionMismatch, "corpus sequences disagree on dimension");
    for (std::size_t t = 0; t < f.num_frames(); ++t)
      for (std::size_t k = 0; k < D; ++k) sum[k] += f.frames(t, k);
    n += f.num_frames();
  }
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "corpus has no frames");
  NormalizationStats s{std::vector<double>(D), std::vector<double>(D, 0.0)};
  for (std::size_t k = 0; k < D; ++k) s.mean[k] = sum[k] / static_cast<double>(n);
  // Second pass on centered values keeps the variance accurate.
  for (const auto &f : corpus)
    for (std::size_t t = 0; t < f.num_frames(); ++t)
      for (std::size_t k = 0; k < D; ++k) {
        double d = f.frames(t, k) - s.mean[k];
        s.scale[k] += d * d;
      }
  for (std::size_t k = 0; k < D; ++k)
    s.scale[k] = std::max(std::sqrt(s.scale[k] / static_cast<double>(n)), kScaleFloor);
  return s;
}

inline FeatureSequence normalize(const FeatureSequence &f, const NormalizationStats &s) {
  if (f.dim() != s.mean.size() || f.dim() != s.scale.size())
    throw Error(ErrorKind::kDimensionMismatch,
                "features have dim " + std::to_string(f.dim()) + ", stats have dim " +
                    std::to_string(s.mean.size()));
  FeatureSequence out = f;
  for (std::size_t t = 0; t < f.num_frames(); ++t)
    for (std::size_t k = 0; k < f.dim(); ++k)
      out.frames(t, k) = (f.frames(t, k) - s.mean[k]) / s.scale[k];
  return out;
}

inline FeatureSequence denormalize(const FeatureSequence &f, const NormalizationStats &s) {
  if (f.dim() != s.mean.size() || f.dim() != s.scale.size())
    throw Error(ErrorKind::kDimensionMismatch, "features and stats disagree on dimension");
  FeatureSequence out = f;
  for (std::size_t t = 0; t < f.num_frames(); ++t)
    for (std::size_t k = 0; k < f.dim(); ++k)
      out.frames(t, k) = f.frames(t, k) * s.scale[k] + s.mean[k];
  return out;
}

/// Stats file: "dim D" then one "mean scale" pair per line, full precision.
inline void write_normalization(const std::string &path, const NormalizationStats &s) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path);
  os << "dim " << s.mean.size() << "\n" << std::setprecision(17);
  for (std::size_t k = 0; k < s.mean.size(); ++k) os << s.mean[k] << " " << s.scale[k] << "\n";
}

inline NormalizationStats read_normalization(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot read " + path);
  std::string tag;
  std::size_t d = 0;
  if (!(is >> tag >> d) || tag != "dim")
    throw Error(ErrorKind::kParse, path + ": expected 'dim D' header");
  NormalizationStats s{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t k = 0; k < d; ++k)
    if (!(is >> s.mean[k] >> s.scale[k]) || !(s.scale[k] > 0.0))
      throw Error(ErrorKind::kParse, path + ": bad entry for dimension " + std::to_string(k));
  return s;
}

// ---------------------------------------------------------------------------
// Byte helpers

namespace internal {

inline std::vector<unsigned char> read_file_bytes(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string &path, const std::vector<unsigned char> &b) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path);
  os.write(reinterpret_cast<const char *>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!os) throw Error(ErrorKind::kIo, "write failed for " + path);
}

inline std::uint32_t get_be32(const unsigned char *p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}
inline std::uint16_t get_be16(const unsigned char *p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}
inline std::uint32_t get_le32(const unsigned char *p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}
inline std::uint16_t get_le16(const unsigned char *p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_be32(std::vector<unsigned char> &b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}
inline void put_be16(std::vector<unsigned char> &b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v >> 8));
  b.push_back(static_cast<unsigned char>(v));
}
inline void put_le32(std::vector<unsigned char> &b, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) b.push_back(static_cast<unsigned char>(v >> s));
}
inline void put_le16(std::vector<unsigned char> &b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace internal

// ---------------------------------------------------------------------------
// HTK parameter files: 12-byte big-endian header (nSamples, sampPeriod in
// 100 ns units, sampSize in bytes, parmKind) then big-endian float32 frames.

inline std::vector<unsigned char> encode_htk(const FeatureSequence &f) {
  std::size_t D = f.dim();
  if (D * 4 > 0xFFFF)
    throw Error(ErrorKind::kInvalidArgument, "frame too wide for an HTK header");
  std::vector<unsigned char> b;
  b.reserve(12 + f.num_frames() * D * 4);
  internal::put_be32(b, static_cast<std::uint32_t>(f.num_frames()));
  internal::put_be32(b, static_cast<std::uint32_t>(std::llround(f.frame_period * 1e7)));
  internal::put_be16(b, static_cast<std::uint16_t>(D * 4));
  internal::put_be16(b, f.htk_parm_kind);
  for (double v : f.frames.data()) {
    float x = static_cast<float>(v);
    internal::put_be32(b, std::bit_cast<std::uint32_t>(x));
  }
  return b;
}

inline FeatureSequence decode_htk(const std::vector<unsigned char> &b,
                                  const std::string &name = "<memory>") {
  if (b.size() < 12)
    throw Error(ErrorKind::kTruncatedFile, name + ": HTK header needs 12 bytes");
  std::uint32_t n = internal::get_be32(&b[0]);
  std::uint32_t period = internal::get_be32(&b[4]);
  std::uint16_t size = internal::get_be16(&b[8]);
  std::uint16_t kind = internal::get_be16(&b[10]);
  if (size == 0 || size % 4 != 0)
    throw Error(ErrorKind::kBadSampleSize,
                name + ": sampSize " + std::to_string(size) + " is not a multiple of 4");
  if (kind & (kHtkQualC | kHtkQualK))
    throw Error(ErrorKind::kUnsupportedSampleFormat,
                name + ": compressed or checksummed HTK files are not supported");
  std::size_t expect = std::size_t{n} * size;
  std::size_t payload = b.size() - 12;
  if (payload < expect)
    throw Error(ErrorKind::kTruncatedFile, name + ": payload has " + std::to_string(payload) +
                                              " bytes, header promises " + std::to_string(expect));
  if (payload > expect)
    throw Error(ErrorKind::kSizeMismatch, name + ": payload has " + std::to_string(payload) +
                                              " bytes, nSamples*sampSize = " +
                                              std::to_string(expect));
  std::size_t D = size / 4;
  FeatureSequence f{Matrix(n, D), period * 1e-7, kind};
  auto data = f.frames.data();
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<double>(std::bit_cast<float>(internal::get_be32(&b[12 + 4 * i])));
  return f;
}

inline void write_htk(const std::string &path, const FeatureSequence &f) {
  internal::write_file_bytes(path, encode_htk(f));
}

inline FeatureSequence read_htk(const std::string &path) {
  return decode_htk(internal::read_file_bytes(path), path);
}

// ---------------------------------------------------------------------------
// Plain-text features: "#dim D #period S" then one frame per line.

inline void write_feature_text(std::ostream &os, const FeatureSequence &f) {
  os << "#dim " << f.dim() << " #period " << std::setprecision(17) << f.frame_period << "\n";
  for (std::size_t t = 0; t < f.num_frames(); ++t) {
    for (std::size_t k = 0; k < f.dim(); ++k) os << (k ? " " : "") << f.frames(t, k);
    os << "\n";
  }
}

inline FeatureSequence read_feature_text(std::istream &is) {
  std::string line;
  if (!std::getline(is, line))
    throw Error(ErrorKind::kParse, "missing '#dim D #period S' header");
  std::istringstream hs(line);
  std::string a, b;
  std::size_t dim = 0;
  FeatureSequence f;
  if (!(hs >> a >> dim >> b >> f.frame_period) || a != "#dim" || b != "#period")
    throw Error(ErrorKind::kParse, "bad header '" + line + "'");
  f.frames = Matrix(0, dim);
  std::vector<double> row;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    row.clear();
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof())
      throw Error(ErrorKind::kParse, "line " + std::to_string(lineno) + ": not a number");
    if (row.empty()) continue;
    if (row.size() != dim)
      throw Error(ErrorKind::kDimensionMismatch, "line " + std::to_string(lineno) + ": " +
                                                     std::to_string(row.size()) +
                                                     " values, header says " + std::to_string(dim));
    f.frames.append_row(row);
  }
  return f;
}

/// Reads HTK unless the file starts with the text header.
inline FeatureSequence read_features(const std::string &path) {
  auto bytes = internal::read_file_bytes(path);
  static constexpr std::string_view kTextTag = "#dim";
  if (bytes.size() >= kTextTag.size() &&
      std::equal(kTextTag.begin(), kTextTag.end(), bytes.begin())) {
    std::istringstream is(std::string(bytes.begin(), bytes.end()));
    return read_feature_text(is);
  }
  return decode_htk(bytes, path);
}

// ---------------------------------------------------------------------------
// Audio: 16-bit PCM in RIFF/WAVE or uncompressed NIST SPHERE. Multi-channel
// input keeps channel 0. Samples are scaled by 1/32768.

inline Waveform decode_wav(const std::vector<unsigned char> &b, const std::string &name) {
  if (b.size() < 12)
    throw Error(ErrorKind::kTruncatedFile, name + ": RIFF header truncated");
  std::size_t pos = 12;
  int channels = 0, rate = 0, bits = 0;
  bool have_fmt = false;
  while (pos + 8 <= b.size()) {
    std::string id(b.begin() + static_cast<std::ptrdiff_t>(pos),
                   b.begin() + static_cast<std::ptrdiff_t>(pos + 4));
    std::size_t len = internal::get_le32(&b[pos + 4]);
    std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (len < 16 || body + 16 > b.size())
        throw Error(ErrorKind::kTruncatedFile, name + ": fmt chunk truncated");
      std::uint16_t format = internal::get_le16(&b[body]);
      channels = internal::get_le16(&b[body + 2]);
      rate = static_cast<int>(internal::get_le32(&b[body + 4]));
      bits = internal::get_le16(&b[body + 14]);
      if (format == 0xFFFE && len >= 26 && body + 26 <= b.size())
        format = internal::get_le16(&b[body + 24]);
      if (format != 1)
        throw Error(ErrorKind::kCompressedAudio,
                    name + ": WAVE format tag " + std::to_string(format) + " is not PCM");
      if (bits != 16)
        throw Error(ErrorKind::kUnsupportedSampleFormat,
                    name + ": " + std::to_string(bits) + "-bit samples, need 16");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorKind::kParse, name + ": data chunk before fmt chunk");
      if (channels < 1 || rate <= 0)
        throw Error(ErrorKind::kParse, name + ": bad channel count or sample rate");
      std::size_t avail = std::min(len, b.size() - body);
      std::size_t frame_bytes = 2 * static_cast<std::size_t>(channels);
      Waveform w{std::vector<double>(avail / frame_bytes), rate};
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<std::int16_t>(internal::get_le16(&b[body + i * frame_bytes])) /
                       32768.0;
      return w;
    }
    pos = body + len + (len & 1);
  }
  throw Error(ErrorKind::kParse, name + ": no data chunk");
}

inline Waveform decode_sphere(const std::vector<unsigned char> &b, const std::string &name) {
  if (b.size() < 16) throw Error(ErrorKind::kTruncatedFile, name + ": SPHERE header truncated");
  std::string head(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(b.size(), 1024)));
  std::istringstream hs(head);
  std::string magic;
  std::size_t header_size = 0;
  hs >> magic >> header_size;
  if (header_size < 16 || header_size > b.size())
    throw Error(ErrorKind::kTruncatedFile, name + ": SPHERE header size out of range");
  head.assign(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(header_size));
  hs = std::istringstream(head);
  std::getline(hs, magic);
  std::getline(hs, magic);
  int rate = 0, nbytes = 2, channels = 1;
  std::string byte_format = "01", coding = "pcm";
  std::string line;
  while (std::getline(hs, line)) {
    std::istringstream ls(line);
    std::string key, type, value;
    ls >> key;
    if (key == "end_head") break;
    ls >> type;
    std::getline(ls >> std::ws, value);
    if (key == "sample_rate") rate = std::stoi(value);
    else if (key == "sample_n_bytes") nbytes = std::stoi(value);
    else if (key == "channel_count") channels = std::stoi(value);
    else if (key == "sample_byte_format") byte_format = value;
    else if (key == "sample_coding") coding = value;
  }
  if (coding.find("shorten") != std::string::npos || coding.find("wavpack") != std::string::npos ||
      coding.find("shortpack") != std::string::npos || coding.rfind("pcm", 0) != 0 ||
      coding.find(',') != std::string::npos)
    throw Error(ErrorKind::kCompressedAudio, name + ": sample_coding '" + coding + "'");
  if (nbytes != 2)
    throw Error(ErrorKind::kUnsupportedSampleFormat,
                name + ": " + std::to_string(8 * nbytes) + "-bit samples, need 16");
  if (rate <= 0 || channels < 1)
    throw Error(ErrorKind::kParse, name + ": missing sample_rate or channel_count");
  bool big = byte_format == "10";
  std::size_t frame_bytes = 2 * static_cast<std::size_t>(channels);
  Waveform w{std::vector<double>((b.size() - header_size) / frame_bytes), rate};
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const unsigned char *p = &b[header_size + i * frame_bytes];
    std::uint16_t raw = big ? internal::get_be16(p) : internal::get_le16(p);
    w.samples[i] = static_cast<std::int16_t>(raw) / 32768.0;
  }
  return w;
}

inline Waveform read_audio(const std::string &path) {
  auto b = internal::read_file_bytes(path);
  if (b.size() >= 12 && std::memcmp(b.data(), "RIFF", 4) == 0 &&
      std::memcmp(b.data() + 8, "WAVE", 4) == 0)
    return decode_wav(b, path);
  if (b.size() >= 7 && std::memcmp(b.data(), "NIST_1A", 7) == 0) return decode_sphere(b, path);
  throw Error(ErrorKind::kUnknownContainer, path + ": neither RIFF/WAVE nor NIST SPHERE");
}

inline std::int16_t to_pcm16(double x) {
  return static_cast<std::int16_t>(std::clamp(std::lround(x * 32768.0), -32768L, 32767L));
}

inline void write_wav(const std::string &path, const Waveform &w) {
  std::vector<unsigned char> b;
  auto put = [&](std::string_view s) { b.insert(b.end(), s.begin(), s.end()); };
  auto data_bytes = static_cast<std::uint32_t>(2 * w.samples.size());
  put("RIFF");
  internal::put_le32(b, 36 + data_bytes);
  put("WAVEfmt ");
  internal::put_le32(b, 16);
  internal::put_le16(b, 1);
  internal::put_le16(b, 1);
  internal::put_le32(b, static_cast<std::uint32_t>(w.sample_rate));
  internal::put_le32(b, static_cast<std::uint32_t>(w.sample_rate) * 2);
  internal::put_le16(b, 2);
  internal::put_le16(b, 16);
  put("data");
  internal::put_le32(b, data_bytes);
  for (double x : w.samples) internal::put_le16(b, static_cast<std::uint16_t>(to_pcm16(x)));
  internal::write_file_bytes(path, b);
}

/// Uncompressed little-endian SPHERE with a 1024-byte header.
inline void write_sphere(const std::string &path, const Waveform &w) {
  std::ostringstream h;
  h << "NIST_1A\n   1024\n"
    << "sample_count -i " << w.samples.size() << "\n"
    << "sample_rate -i " << w.sample_rate << "\n"
    << "channel_count -i 1\n"
    << "sample_n_bytes -i 2\n"
    << "sample_byte_format -s2 01\n"
    << "sample_coding -s3 pcm\n"
    << "end_head\n";
  std::string head = h.str();
  head.resize(1024, ' ');
  std::vector<unsigned char> b(head.begin(), head.end());
  for (double x : w.samples) internal::put_le16(b, static_cast<std::uint16_t>(to_pcm16(x)));
  internal::write_file_bytes(path, b);
}

}  // namespace blstmctc
