// blstmctc/app.hpp

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

// Subcommand implementations behind the `blstmctc` tool: manifests,
// transcripts, run configs and the features/train/decode/score/aggregate/
// selfcheck commands. Argument parsing lives in tools/blstmctc.cpp.

#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "blstmctc/ctc.hpp"
#include "blstmctc/eval.hpp"
#include "blstmctc/features.hpp"
#include "blstmctc/network.hpp"
#include "blstmctc/phoneset.hpp"
#include "blstmctc/selfcheck.hpp"
#include "blstmctc/training.hpp"

namespace blstmctc::app {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Where a command writes its report and diagnostics.
struct Context {
  std::ostream &out = std::cout;
  std::ostream &err = std::cerr;
  std::size_t jobs = 1;
  bool verbose = false;
};

// ---------------------------------------------------------------------------
// Parallel map over utterances. Results land at their own index, so output
// order never depends on scheduling.

template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F &&f) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto &t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Per-item outcome for commands that keep going past failures.
template <typename T>
struct ItemResult {
  std::optional<T> value;
  std::string error;
};

template <typename T, typename F>
std::vector<ItemResult<T>> map_items(std::size_t n, std::size_t jobs, F &&f) {
  std::vector<ItemResult<T>> out(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    try {
      out[i].value = f(i);
    } catch (const std::exception &e) {
      out[i].error = e.what();
    }
  });
  return out;
}

inline std::string timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Writes through a temporary file and a rename so readers never see a
/// half-written file.
inline void write_file_atomic(const std::string &path, const std::vector<unsigned char> &bytes) {
  std::string tmp = path + ".tmp";
  internal::write_bytes(tmp, bytes);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot rename " + tmp + " to " + path + ": " + ec.message());
}

inline void write_text_file(const std::string &path, const std::string &text) {
  write_file_atomic(path, std::vector<unsigned char>(text.begin(), text.end()));
}

// ---------------------------------------------------------------------------
// Manifests: `id <TAB> path [<TAB> transcript [<TAB> split]]` per line. Blank
// lines and lines starting with '#' are skipped. Relative paths are taken
// relative to the manifest's directory.

struct ManifestEntry {
  std::string id;
  std::string path;
  std::string transcript;  // empty when absent
  std::string split;       // empty when absent
};

struct Manifest {
  std::string name;
  std::vector<ManifestEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }

  /// Entries tagged with `split`.
  Manifest only(const std::string &split) const {
    Manifest m{name + "[" + split + "]", {}};
    for (const auto &e : entries)
      if (e.split == split) m.entries.push_back(e);
    return m;
  }
};

inline std::vector<std::string> split_tabs(const std::string &line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    out.push_back(trim(std::string_view(line).substr(start, tab - start)));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

inline std::string resolve_path(const fs::path &base, const std::string &p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_absolute()) return path.lexically_normal().string();
  return (base / path).lexically_normal().string();
}

inline Manifest parse_manifest(std::istream &is, const fs::path &base, const std::string &name) {
  Manifest m{name, {}};
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto f = split_tabs(line);
    auto where = name + ":" + std::to_string(lineno) + ": ";
    if (f.size() < 2 || f.size() > 4)
      throw Error(ErrorKind::kParse, where + "expected 2 to 4 tab-separated fields, found " +
                                         std::to_string(f.size()));
    if (f[0].empty() || f[1].empty())
      throw Error(ErrorKind::kParse, where + "empty id or path");
    if (!seen.insert(f[0]).second)
      throw Error(ErrorKind::kParse, where + "duplicate id '" + f[0] + "'");
    ManifestEntry e{f[0], resolve_path(base, f[1]), f.size() > 2 ? resolve_path(base, f[2]) : "",
                    f.size() > 3 ? f[3] : ""};
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest load_manifest(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open manifest " + path);
  return parse_manifest(is, fs::path(path).parent_path(), path);
}

inline void write_manifest(std::ostream &os, const Manifest &m) {
  for (const auto &e : m.entries) {
    os << e.id << '\t' << e.path;
    if (!e.transcript.empty() || !e.split.empty()) os << '\t' << e.transcript;
    if (!e.split.empty()) os << '\t' << e.split;
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Transcripts.

inline bool is_integer(const std::string &s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

/// Labels of one utterance. TIMIT .phn files (`start end phone` per line) give
/// their third column; anything else is read as whitespace-separated labels.
/// A file whose every line has that three-column shape is read as .phn too.
inline std::vector<std::string> read_label_file(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open transcript " + path);
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<std::string> toks;
    for (std::string tok; ls >> tok;) toks.push_back(tok);
    if (!toks.empty()) lines.push_back(std::move(toks));
  }
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  bool phn_shape = !lines.empty() && std::all_of(lines.begin(), lines.end(), [](const auto &l) {
    return l.size() == 3 && is_integer(l[0]) && is_integer(l[1]);
  });
  std::vector<std::string> labels;
  if (ext == ".phn" || phn_shape) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].size() != 3)
        throw Error(ErrorKind::kParse, path + ": line " + std::to_string(i + 1) +
                                           ": expected 'start end phone'");
      labels.push_back(lines[i][2]);
    }
  } else {
    for (auto &l : lines)
      for (auto &tok : l) labels.push_back(std::move(tok));
  }
  return labels;
}

/// Ordered `id label label ...` records.
using Transcripts = std::vector<std::pair<std::string, std::vector<std::string>>>;

inline Transcripts parse_transcripts(std::istream &is, const std::string &name) {
  Transcripts out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string id;
    if (!(ls >> id)) continue;
    if (!id.empty() && id.back() == ':') id.pop_back();
    if (id.empty())
      throw Error(ErrorKind::kParse, name + ":" + std::to_string(lineno) + ": empty id");
    if (!seen.insert(id).second)
      throw Error(ErrorKind::kParse,
                  name + ":" + std::to_string(lineno) + ": duplicate id '" + id + "'");
    std::vector<std::string> labels;
    for (std::string tok; ls >> tok;) labels.push_back(tok);
    out.emplace_back(id, std::move(labels));
  }
  return out;
}

inline Transcripts read_transcripts(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open transcripts " + path);
  return parse_transcripts(is, path);
}

/// Transcripts from a manifest's transcript column.
inline Transcripts transcripts_from_manifest(const Manifest &m) {
  Transcripts out;
  for (const auto &e : m.entries) {
    if (e.transcript.empty())
      throw Error(ErrorKind::kParse, m.name + ": utterance '" + e.id + "' has no transcript");
    out.emplace_back(e.id, read_label_file(e.transcript));
  }
  return out;
}

inline void write_transcript_line(std::ostream &os, const std::string &id,
                                  const std::vector<std::string> &labels) {
  os << id;
  for (const auto &l : labels) os << ' ' << l;
  os << '\n';
}

// ---------------------------------------------------------------------------
// Run configuration: flat `key = value` lines, '#' comments. Defaults are the
// full-scale setup (lr 1e-4, momentum 0.9, noise 0.6, 128 blocks, threshold
// 0.9999). The output layer size is not a key: it is the label-set size + 1.

struct RunConfig {
  TrainingConfig training;
  ModelConfig model;
  double init_range = 0.1;
  std::string label_set = "timit39";  // timit39 | timit61 | path to phone list or folding table
  bool normalize = true;
  std::string decoder = "prefix";     // prefix | best-path
  double blank_threshold = 0.9999;
  std::size_t max_expansions = PrefixSearchOptions{}.max_expansions;
  FrontEndConfig front_end;

  void validate() const {
    training.validate();
    if (model.input_dim < 1 || model.blocks_per_direction < 1)
      throw Error(ErrorKind::kInvalidArgument, "input_dim and blocks_per_direction must be >= 1");
    if (model.cells_per_block != 1)
      throw Error(ErrorKind::kInvalidArgument, "cells_per_block must be 1");
    if (!(init_range > 0.0)) throw Error(ErrorKind::kInvalidArgument, "init_range must be > 0");
    if (decoder != "prefix" && decoder != "best-path")
      throw Error(ErrorKind::kInvalidArgument, "decoder must be 'prefix' or 'best-path'");
    if (!(blank_threshold > 0.0 && blank_threshold <= 1.0))
      throw Error(ErrorKind::kInvalidArgument, "blank_threshold must be in (0, 1]");
    if (max_expansions < 1) throw Error(ErrorKind::kInvalidArgument, "max_expansions must be >= 1");
  }
};

namespace detail {

template <typename T>
T parse_number(const std::string &key, const std::string &v) {
  std::istringstream is(v);
  T out{};
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.empty() && v[0] == '-')
      throw Error(ErrorKind::kParse, key + ": expected a non-negative integer, got '" + v + "'");
  }
  is >> out;
  if (!is || !(is >> std::ws).eof())
    throw Error(ErrorKind::kParse, key + ": cannot parse '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string &key, std::string v) {
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::kParse, key + ": expected true or false, got '" + v + "'");
}

}  // namespace detail

/// Sets one key. Unknown keys are errors.
inline void apply_setting(RunConfig &c, const std::string &key, const std::string &value) {
  using detail::parse_bool;
  using detail::parse_number;
  auto &t = c.training;
  auto &m = c.model;
  auto &f = c.front_end;
  if (key == "learning_rate") t.learning_rate = parse_number<double>(key, value);
  else if (key == "momentum") t.momentum = parse_number<double>(key, value);
  else if (key == "noise_std") t.noise_std = parse_number<double>(key, value);
  else if (key == "max_epochs") t.max_epochs = parse_number<std::size_t>(key, value);
  else if (key == "patience") t.patience = parse_number<std::size_t>(key, value);
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "shuffle") t.shuffle = parse_bool(key, value);
  else if (key == "input_dim") m.input_dim = parse_number<std::size_t>(key, value);
  else if (key == "blocks_per_direction") m.blocks_per_direction = parse_number<std::size_t>(key, value);
  else if (key == "cells_per_block") m.cells_per_block = parse_number<std::size_t>(key, value);
  else if (key == "init_range") c.init_range = parse_number<double>(key, value);
  else if (key == "label_set") c.label_set = value;
  else if (key == "normalize") c.normalize = parse_bool(key, value);
  else if (key == "decoder") c.decoder = value;
  else if (key == "blank_threshold") c.blank_threshold = parse_number<double>(key, value);
  else if (key == "max_expansions") c.max_expansions = parse_number<std::size_t>(key, value);
  else if (key == "pre_emphasis") f.pre_emphasis = parse_number<double>(key, value);
  else if (key == "window") f.window = parse_number<double>(key, value);
  else if (key == "step") f.step = parse_number<double>(key, value);
  else if (key == "channels") f.channels = parse_number<std::size_t>(key, value);
  else if (key == "low_freq") f.low_freq = parse_number<double>(key, value);
  else if (key == "high_freq") f.high_freq = parse_number<double>(key, value);
  else if (key == "n_cepstra") f.n_cepstra = parse_number<std::size_t>(key, value);
  else if (key == "include_c0") f.include_c0 = parse_bool(key, value);
  else if (key == "deltas") f.deltas = parse_bool(key, value);
  else throw Error(ErrorKind::kParse, "unknown key '" + key + "'");
}

/// Applies `key = value` lines on top of `base`. Relative label_set paths are
/// resolved against `dir`.
inline RunConfig parse_run_config(std::istream &is, const std::string &name,
                                  const fs::path &dir = {}, RunConfig base = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string body = trim(line);
    if (body.empty()) continue;
    auto where = name + ":" + std::to_string(lineno) + ": ";
    auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::kParse, where + "expected 'key = value'");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) throw Error(ErrorKind::kParse, where + "expected 'key = value'");
    try {
      if (key == "label_set" && value != "timit39" && value != "timit61")
        value = resolve_path(dir, value);
      apply_setting(base, key, value);
    } catch (const Error &e) {
      throw Error(ErrorKind::kParse, where + e.what());
    }
  }
  return base;
}

inline RunConfig load_run_config(const std::string &path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open config " + path);
  return parse_run_config(is, path, fs::path(path).parent_path(), std::move(base));
}

/// Shortest decimal form that reads back as the same double.
inline std::string exact_decimal(double v) {
  for (int prec = 6; prec < 17; ++prec) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    if (std::stod(os.str()) == v) return os.str();
  }
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// Every key with its effective value; parse_run_config reads it back exactly.
inline std::string dump_run_config(const RunConfig &c) {
  std::ostringstream os;
  os << std::boolalpha;
  const auto &t = c.training;
  const auto &m = c.model;
  const auto &f = c.front_end;
  os << "learning_rate = " << exact_decimal(t.learning_rate) << "\n"
     << "momentum = " << exact_decimal(t.momentum) << "\n"
     << "noise_std = " << exact_decimal(t.noise_std) << "\n"
     << "max_epochs = " << t.max_epochs << "\n"
     << "patience = " << t.patience << "\n"
     << "seed = " << t.seed << "\n"
     << "shuffle = " << t.shuffle << "\n"
     << "input_dim = " << m.input_dim << "\n"
     << "blocks_per_direction = " << m.blocks_per_direction << "\n"
     << "cells_per_block = " << m.cells_per_block << "\n"
     << "init_range = " << exact_decimal(c.init_range) << "\n"
     << "label_set = " << c.label_set << "\n"
     << "normalize = " << c.normalize << "\n"
     << "decoder = " << c.decoder << "\n"
     << "blank_threshold = " << exact_decimal(c.blank_threshold) << "\n"
     << "max_expansions = " << c.max_expansions << "\n"
     << "pre_emphasis = " << exact_decimal(f.pre_emphasis) << "\n"
     << "window = " << exact_decimal(f.window) << "\n"
     << "step = " << exact_decimal(f.step) << "\n"
     << "channels = " << f.channels << "\n"
     << "low_freq = " << exact_decimal(f.low_freq) << "\n"
     << "high_freq = " << exact_decimal(f.high_freq) << "\n"
     << "n_cepstra = " << f.n_cepstra << "\n"
     << "include_c0 = " << f.include_c0 << "\n"
     << "deltas = " << f.deltas << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Label sets.

/// Output inventory plus the folding applied to transcripts before training.
struct LabelSet {
  PhoneInventory inventory;
  std::optional<FoldingMap> folding;

  Labelling encode(const std::vector<std::string> &names) const {
    if (folding) return labels_to_indices(inventory, fold_names(*folding, names));
    return labels_to_indices(inventory, names);
  }
};

/// timit39: 61-phone transcripts folded onto 39 categories. timit61: the raw
/// 61 phones. Otherwise a file: a folding table when any line has a ':',
/// else a whitespace-separated phone list.
inline LabelSet resolve_label_set(const std::string &source) {
  if (source == "timit39") {
    auto map = build_timit_folding();
    return {map.target, map};
  }
  if (source == "timit61") return {PhoneInventory(timit_phones()), std::nullopt};
  std::ifstream is(source);
  if (!is) throw Error(ErrorKind::kIo, "cannot open label set " + source);
  std::stringstream ss;
  ss << is.rdbuf();
  std::string text = ss.str();
  if (text.find(':') != std::string::npos) {
    auto map = parse_folding_table(text);
    return {map.target, map};
  }
  PhoneInventory inv;
  std::istringstream ts(text);
  for (std::string tok; ts >> tok;) inv.add(tok);
  if (inv.size() == 0) throw Error(ErrorKind::kParse, source + ": empty label set");
  return {inv, std::nullopt};
}

inline void write_phone_list(const std::string &path, const PhoneInventory &inv) {
  std::string text;
  for (const auto &n : inv.names()) text += n + "\n";
  write_text_file(path, text);
}

inline PhoneInventory read_phone_list(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open phone list " + path);
  PhoneInventory inv;
  for (std::string tok; is >> tok;) inv.add(tok);
  return inv;
}

/// Sidecar files written next to a checkpoint.
inline std::string phones_path(const std::string &model) { return model + ".phones"; }
inline std::string norm_path(const std::string &model) { return model + ".norm"; }
inline std::string log_path(const std::string &model) { return model + ".log"; }

inline FeatureSequence load_features_checked(const std::string &path, std::size_t dim) {
  auto f = read_features(path);
  if (f.dim() != dim)
    throw Error(ErrorKind::kDimensionMismatch, path + ": expected feature dim " +
                                                   std::to_string(dim) + ", found " +
                                                   std::to_string(f.dim()));
  return f;
}

inline int report_failures(Context &ctx, const std::vector<std::pair<std::string, std::string>> &fails,
                           const std::string &what) {
  if (fails.empty()) return kExitOk;
  ctx.err << "error: " << fails.size() << " " << what << " failed:\n";
  for (const auto &[id, msg] : fails) ctx.err << "  " << id << ": " << msg << "\n";
  return kExitFailure;
}

// ---------------------------------------------------------------------------
// features

struct FeaturesArgs {
  std::string manifest;
  std::string out_dir;
  std::string out_manifest;  // optional
  FrontEndConfig front_end;
};

inline int cmd_features(Context &ctx, const FeaturesArgs &a) {
  auto m = load_manifest(a.manifest);
  if (m.empty()) ctx.err << "warning: manifest " << a.manifest << " is empty\n";
  fs::create_directories(a.out_dir);
  auto results = map_items<std::size_t>(m.size(), ctx.jobs, [&](std::size_t i) {
    const auto &e = m.entries[i];
    if (e.id.find('/') != std::string::npos || e.id == "." || e.id == "..")
      throw Error(ErrorKind::kInvalidArgument, "id is not usable as a file name");
    auto f = compute_mfcc(read_audio(e.path), a.front_end);
    write_htk((fs::path(a.out_dir) / (e.id + ".htk")).string(), f);
    return f.num_frames();
  });
  Manifest out{a.out_manifest, {}};
  std::vector<std::pair<std::string, std::string>> fails;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto &e = m.entries[i];
    if (!results[i].value) {
      fails.emplace_back(e.id, results[i].error);
      continue;
    }
    ctx.out << e.id << ' ' << *results[i].value << '\n';
    auto path = fs::absolute(fs::path(a.out_dir) / (e.id + ".htk")).lexically_normal();
    out.entries.push_back({e.id, path.string(), e.transcript, e.split});
  }
  ctx.err << (m.size() - fails.size()) << " of " << m.size() << " files written\n";
  if (!a.out_manifest.empty()) {
    std::ostringstream os;
    write_manifest(os, out);
    write_text_file(a.out_manifest, os.str());
  }
  return report_failures(ctx, fails, "files");
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  RunConfig config;
  std::string train_manifest;
  std::string val_manifest;
  std::string out;  // checkpoint path; sidecars are derived from it
  bool resume = false;
};

struct LoadedCorpus {
  std::vector<std::string> ids;
  std::vector<FeatureSequence> features;
  std::vector<Labelling> targets;
};

/// Features and encoded targets for every entry; any failure aborts with
/// the full list.
inline LoadedCorpus load_corpus(Context &ctx, const Manifest &m, const LabelSet &labels,
                                std::size_t dim) {
  struct Item {
    FeatureSequence f;
    Labelling l;
  };
  auto results = map_items<Item>(m.size(), ctx.jobs, [&](std::size_t i) {
    const auto &e = m.entries[i];
    if (e.transcript.empty()) throw Error(ErrorKind::kParse, "no transcript in manifest");
    return Item{load_features_checked(e.path, dim), labels.encode(read_label_file(e.transcript))};
  });
  LoadedCorpus c;
  std::vector<std::pair<std::string, std::string>> fails;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!results[i].value) {
      fails.emplace_back(m.entries[i].id, results[i].error);
      continue;
    }
    c.ids.push_back(m.entries[i].id);
    c.features.push_back(std::move(results[i].value->f));
    c.targets.push_back(std::move(results[i].value->l));
  }
  if (report_failures(ctx, fails, "utterances in " + m.name) != kExitOk)
    throw Error(ErrorKind::kIo, "cannot load " + m.name);
  return c;
}

inline std::vector<Utterance> to_utterances(const LoadedCorpus &c,
                                            const std::optional<NormalizationStats> &norm) {
  std::vector<Utterance> out;
  out.reserve(c.ids.size());
  for (std::size_t i = 0; i < c.ids.size(); ++i)
    out.push_back({c.ids[i], norm ? normalize(c.features[i], *norm).frames : c.features[i].frames,
                   c.targets[i]});
  return out;
}

/// Best-path LER with decoding fanned out over utterances.
inline double parallel_validation_ler(const Weights &w, const std::vector<Utterance> &corpus,
                                      std::size_t jobs) {
  std::vector<std::pair<Labelling, Labelling>> pairs(corpus.size());
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    pairs[i] = {corpus[i].target, best_path_decode(blstm_forward(w, corpus[i].frames).posteriors)};
  });
  return corpus_ler(pairs).ler;
}

inline int cmd_train(Context &ctx, const TrainArgs &a) {
  const RunConfig &cfg = a.config;
  cfg.validate();
  auto labels = resolve_label_set(cfg.label_set);
  ModelConfig model = cfg.model;
  model.output_dim = labels.inventory.size() + 1;

  auto train_m = load_manifest(a.train_manifest);
  auto val_m = load_manifest(a.val_manifest);
  if (train_m.empty() || val_m.empty()) {
    ctx.err << "error: training and validation manifests must be non-empty\n";
    return kExitFailure;
  }
  auto train_c = load_corpus(ctx, train_m, labels, model.input_dim);
  auto val_c = load_corpus(ctx, val_m, labels, model.input_dim);

  std::optional<NormalizationStats> norm;
  if (cfg.normalize) {
    norm = compute_normalization(train_c.features);
    write_normalization(norm_path(a.out), *norm);
  } else {
    fs::remove(norm_path(a.out));
  }
  write_phone_list(phones_path(a.out), labels.inventory);
  auto train_set = to_utterances(train_c, norm);
  auto val_set = to_utterances(val_c, norm);

  TrainingState st = TrainingState::start(init_weights(model, cfg.training.seed, cfg.init_range));
  if (a.resume && fs::exists(a.out)) {
    st = load_checkpoint(a.out);
    if (st.model.config != model)
      throw Error(ErrorKind::kDimensionMismatch,
                  a.out + ": checkpoint model shape differs from the configured one");
  }

  std::ofstream log(log_path(a.out), a.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw Error(ErrorKind::kIo, "cannot write " + log_path(a.out));
  log << "# started " << timestamp() << "\n";
  {
    std::istringstream dump(dump_run_config(cfg));
    for (std::string line; std::getline(dump, line);) log << "config " << line << "\n";
  }
  log << "train_utterances " << train_set.size() << "\n"
      << "val_utterances " << val_set.size() << "\n"
      << "parameters " << param_count(model) << "\n";
  if (ctx.verbose)
    ctx.err << "training " << param_count(model) << " parameters on " << train_set.size()
            << " utterances, validating on " << val_set.size() << "\n";

  std::set<std::string> warned;
  TrainingHooks hooks;
  hooks.log = [&](std::string_view msg) {
    bool warning = msg.rfind("warning", 0) == 0;
    if (warning && !warned.insert(std::string(msg)).second) return;
    log << msg << "\n";
    log.flush();
    if (warning || ctx.verbose) ctx.err << msg << "\n";
  };
  hooks.validate = [&](const Weights &w) { return parallel_validation_ler(w, val_set, ctx.jobs); };
  hooks.on_epoch_end = [&](const TrainingState &s) {
    write_file_atomic(a.out, encode_checkpoint(s));
    return true;
  };
  continue_training(st, train_set, val_set, cfg.training, hooks);
  write_file_atomic(a.out, encode_checkpoint(st));

  const auto &rec = st.record;
  log << "epochs " << rec.epochs_trained() << "\n";
  if (rec.best_epoch) {
    double ler = rec.epochs[*rec.best_epoch - 1].val_ler;
    log << "best_epoch " << *rec.best_epoch << " val_ler " << std::setprecision(8) << ler << "\n";
    ctx.out << "best epoch " << *rec.best_epoch << " of " << rec.epochs_trained()
            << ", validation LER " << std::setprecision(6) << ler << "\n";
  } else {
    ctx.out << "no epochs trained; initial model written\n";
  }
  log << "# finished " << timestamp() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// decode

struct DecodeArgs {
  std::string model;
  std::string manifest;
  std::string out;                  // "-" for standard output
  std::string decoder = "prefix";
  double blank_threshold = 0.9999;
  std::size_t max_expansions = PrefixSearchOptions{}.max_expansions;
  std::string dump_posteriors;      // directory, optional
};

inline int cmd_decode(Context &ctx, const DecodeArgs &a) {
  if (a.decoder != "prefix" && a.decoder != "best-path")
    throw Error(ErrorKind::kInvalidArgument, "decoder must be 'prefix' or 'best-path'");
  Weights w = load_inference_weights(a.model);
  auto inv = read_phone_list(phones_path(a.model));
  if (inv.size() + 1 != w.config.output_dim)
    throw Error(ErrorKind::kDimensionMismatch,
                phones_path(a.model) + ": " + std::to_string(inv.size()) +
                    " labels do not match a model with " + std::to_string(w.config.output_dim) +
                    " outputs");
  std::optional<NormalizationStats> norm;
  if (fs::exists(norm_path(a.model))) norm = read_normalization(norm_path(a.model));
  auto m = load_manifest(a.manifest);
  if (!a.dump_posteriors.empty()) fs::create_directories(a.dump_posteriors);
  PrefixSearchOptions opts;
  opts.blank_threshold = a.blank_threshold;
  opts.max_expansions = a.max_expansions;

  auto results = map_items<std::vector<std::string>>(m.size(), ctx.jobs, [&](std::size_t i) {
    const auto &e = m.entries[i];
    auto f = load_features_checked(e.path, w.config.input_dim);
    if (norm) f = normalize(f, *norm);
    Matrix y = blstm_forward(w, f.frames).posteriors;
    if (!a.dump_posteriors.empty()) {
      std::ofstream os(fs::path(a.dump_posteriors) / (e.id + ".post"));
      write_feature_text(os, FeatureSequence{y, f.frame_period, kHtkUser});
      if (!os) throw Error(ErrorKind::kIo, "cannot write posteriors for " + e.id);
    }
    Labelling l = a.decoder == "prefix" ? prefix_search_decode(y, opts) : best_path_decode(y);
    return indices_to_labels(inv, l);
  });

  std::ostringstream text;
  std::vector<std::pair<std::string, std::string>> fails;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (results[i].value) write_transcript_line(text, m.entries[i].id, *results[i].value);
    else fails.emplace_back(m.entries[i].id, results[i].error);
  }
  if (a.out == "-") ctx.out << text.str();
  else write_text_file(a.out, text.str());
  if (ctx.verbose) ctx.err << (m.size() - fails.size()) << " utterances decoded\n";
  return report_failures(ctx, fails, "utterances");
}

// ---------------------------------------------------------------------------
// score

struct ScoreArgs {
  std::string ref;           // transcripts file
  std::string ref_manifest;  // or the transcript column of a manifest
  std::string hyp;
  std::string fold;          // empty, "timit", or a folding table path
  std::string out;           // optional report file
};

/// Folds labels that are sources of the map; labels that are already target
/// categories pass through, so folded hypotheses can be scored as is.
inline std::vector<std::string> fold_for_scoring(const FoldingMap &map,
                                                 const std::vector<std::string> &seq) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (map.source.contains(seq[i])) {
      if (auto t = map.lookup(seq[i])) out.push_back(*t);
    } else if (map.target.contains(seq[i])) {
      out.push_back(normalize_phone(seq[i]));
    } else {
      throw Error(ErrorKind::kUnknownSymbol, "label '" + seq[i] + "' at position " +
                                                 std::to_string(i) + " is not in the folding table");
    }
  }
  return out;
}

inline int cmd_score(Context &ctx, const ScoreArgs &a) {
  Transcripts ref = a.ref_manifest.empty() ? read_transcripts(a.ref)
                                           : transcripts_from_manifest(load_manifest(a.ref_manifest));
  Transcripts hyp = read_transcripts(a.hyp);
  std::map<std::string, const std::vector<std::string> *> hyp_by_id;
  for (const auto &[id, labels] : hyp) hyp_by_id[id] = &labels;

  std::vector<std::string> only_ref, only_hyp;
  std::set<std::string> ref_ids;
  for (const auto &[id, labels] : ref) {
    ref_ids.insert(id);
    if (!hyp_by_id.count(id)) only_ref.push_back(id);
  }
  for (const auto &[id, labels] : hyp)
    if (!ref_ids.count(id)) only_hyp.push_back(id);
  if (!only_ref.empty() || !only_hyp.empty()) {
    ctx.err << "error: reference and hypothesis ids differ\n";
    for (const auto &id : only_ref) ctx.err << "  only in reference: " << id << "\n";
    for (const auto &id : only_hyp) ctx.err << "  only in hypothesis: " << id << "\n";
    return kExitFailure;
  }

  std::optional<FoldingMap> fold;
  if (a.fold == "timit") fold = build_timit_folding();
  else if (!a.fold.empty()) fold = resolve_label_set(a.fold).folding;
  if (!a.fold.empty() && !fold)
    throw Error(ErrorKind::kInvalidArgument, a.fold + " is not a folding table");

  std::unordered_map<std::string, int> symbols;
  auto encode = [&](const std::vector<std::string> &names) {
    Labelling out;
    for (const auto &n : names)
      out.push_back(symbols.try_emplace(normalize_phone(n), static_cast<int>(symbols.size()))
                        .first->second);
    return out;
  };
  std::vector<std::pair<Labelling, Labelling>> pairs;
  std::vector<std::pair<std::string, std::string>> fails;
  for (const auto &[id, labels] : ref) {
    try {
      const auto &h = *hyp_by_id.at(id);
      pairs.emplace_back(encode(fold ? fold_for_scoring(*fold, labels) : labels),
                         encode(fold ? fold_for_scoring(*fold, h) : h));
    } catch (const std::exception &e) {
      fails.emplace_back(id, e.what());
    }
  }
  if (report_failures(ctx, fails, "utterances") != kExitOk) return kExitFailure;
  auto report = corpus_ler(pairs);
  write_score_report(ctx.out, report);
  if (!a.out.empty()) {
    std::ostringstream os;
    write_score_report(os, report);
    write_text_file(a.out, os.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// aggregate: one LER per line from independent runs.

struct AggregateArgs {
  std::string runs;
  std::vector<double> compare;  // reference values for one-sample t-tests
};

inline std::vector<double> read_values(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::vector<double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      out.push_back(detail::parse_number<double>("value", t));
    } catch (const Error &e) {
      throw Error(ErrorKind::kParse, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline int cmd_aggregate(Context &ctx, const AggregateArgs &a) {
  auto s = aggregate_runs(read_values(a.runs));
  ctx.out << std::setprecision(10) << "n " << s.n << " mean " << s.mean << " stderr "
          << s.standard_error << "\n";
  for (double ref : a.compare) {
    auto t = one_sample_t_test(s, ref);
    ctx.out << "vs " << ref << " t " << t.t << " df " << t.df << " p " << t.p << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// selfcheck

struct SelfcheckArgs {
  std::vector<std::string> check;  // model or checkpoint files to verify
  std::uint64_t seed = 1;
};

inline int cmd_selfcheck(Context &ctx, const SelfcheckArgs &a) {
  auto results = selfcheck::run_default_suite(a.seed);
  for (const auto &p : a.check) results.push_back(selfcheck::check_file(p));
  std::size_t failed = 0;
  for (const auto &r : results) {
    ctx.out << (r.ok ? "PASS " : "FAIL ") << r.module << ": " << r.name << " (" << r.detail
            << ")\n";
    failed += r.ok ? 0 : 1;
  }
  ctx.out << (results.size() - failed) << " of " << results.size() << " checks passed\n";
  return failed ? kExitFailure : kExitOk;
}

}  // namespace blstmctc::app
