// blstmctc/phoneset.hpp

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

#include <array>
#include <cctype>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "blstmctc/base.hpp"

namespace blstmctc {

/// Lowercases and trims surrounding whitespace. Every phone name that enters
/// the system goes through here, so comparison afterwards is plain equality.
inline std::string normalize_phone(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  for (char &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Ordered set of distinct phone names. Indices are positions in the list.
class PhoneInventory {
 public:
  PhoneInventory() = default;

  explicit PhoneInventory(const std::vector<std::string> &names) {
    for (const auto &n : names) add(n);
  }

  /// Appends a phone and returns its index. Duplicates and names that are
  /// empty or non-ASCII after normalization are rejected.
  int add(std::string_view raw) {
    std::string name = normalize_phone(raw);
    if (name.empty())
      throw Error(ErrorKind::kInvalidArgument, "empty phone name");
    for (char c : name) {
      if (static_cast<unsigned char>(c) > 127 ||
          std::isspace(static_cast<unsigned char>(c)))
        throw Error(ErrorKind::kInvalidArgument,
                    "phone name '" + name + "' is not a plain ASCII token");
    }
    if (index_.count(name))
      throw Error(ErrorKind::kInvalidArgument, "duplicate phone '" + name + "'");
    int idx = static_cast<int>(names_.size());
    index_.emplace(name, idx);
    names_.push_back(std::move(name));
    return idx;
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string> &names() const noexcept { return names_; }
  const std::string &name(int i) const { return names_.at(static_cast<std::size_t>(i)); }

  std::optional<int> index_of(std::string_view raw) const {
    auto it = index_.find(normalize_phone(raw));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view raw) const { return index_of(raw).has_value(); }

  friend bool operator==(const PhoneInventory &a, const PhoneInventory &b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

/// Total map from a source inventory to target categories or discard.
struct FoldingMap {
  static constexpr int kDiscard = -1;

  PhoneInventory source;
  PhoneInventory target;
  std::vector<int> mapping;  // source index -> target index or kDiscard

  /// Target index for a source phone name; kDiscard for dropped phones.
  int lookup_index(std::string_view phone) const {
    auto idx = source.index_of(phone);
    if (!idx)
      throw Error(ErrorKind::kUnknownSymbol,
                  "phone '" + normalize_phone(phone) + "' not in source inventory");
    return mapping[static_cast<std::size_t>(*idx)];
  }

  /// Target name, or nullopt when the phone is discarded.
  std::optional<std::string> lookup(std::string_view phone) const {
    int t = lookup_index(phone);
    if (t == kDiscard) return std::nullopt;
    return target.name(t);
  }

  std::size_t discard_count() const {
    return static_cast<std::size_t>(std::count(mapping.begin(), mapping.end(), kDiscard));
  }
};

/// The 61 TIMIT phones in corpus-documentation order: stops, affricates,
/// fricatives, nasals, semivowels and glides, vowels, others, closures.
inline const std::vector<std::string> &timit_phones() {
  static const std::vector<std::string> phones = {
      "b",  "d",   "g",    "p",   "t",   "k",  "dx",  "q",
      "jh", "ch",
      "s",  "sh",  "z",    "zh",  "f",   "th", "v",   "dh",
      "m",  "n",   "ng",   "em",  "en",  "eng", "nx",
      "l",  "r",   "w",    "y",   "hh",  "hv", "el",
      "iy", "ih",  "eh",   "ey",  "ae",  "aa", "aw",  "ay",  "ah", "ao",
      "oy", "ow",  "uh",   "uw",  "ux",  "er", "ax",  "ix",  "axr", "ax-h",
      "pau", "epi", "h#",
      "bcl", "dcl", "gcl", "pcl", "tcl", "kcl"};
  return phones;
}

namespace internal {

struct FoldGroup {
  std::string_view target;
  std::vector<std::string_view> sources;
};

inline const std::vector<FoldGroup> &timit_fold_groups() {
  static const std::vector<FoldGroup> groups = {
      {"aa", {"aa", "ao"}},
      {"ah", {"ah", "ax", "ax-h"}},
      {"er", {"er", "axr"}},
      {"hh", {"hh", "hv"}},
      {"ih", {"ih", "ix"}},
      {"l", {"l", "el"}},
      {"m", {"m", "em"}},
      {"n", {"n", "en", "nx"}},
      {"ng", {"ng", "eng"}},
      {"sh", {"sh", "zh"}},
      {"sil", {"pcl", "tcl", "kcl", "bcl", "dcl", "gcl", "h#", "pau", "epi"}},
      {"uw", {"uw", "ux"}},
  };
  return groups;
}

// Builds the map from (source phone -> target name or empty for discard)
// assignments. Target order is order of first appearance while scanning the
// source inventory.
inline FoldingMap assemble_folding(
    const PhoneInventory &source,
    const std::unordered_map<std::string, std::string> &assign) {
  FoldingMap m;
  m.source = source;
  m.mapping.assign(source.size(), FoldingMap::kDiscard);
  for (std::size_t i = 0; i < source.size(); ++i) {
    auto it = assign.find(source.names()[i]);
    if (it == assign.end())
      throw Error(ErrorKind::kInvalidArgument,
                  "folding does not cover phone '" + source.names()[i] + "'");
    if (it->second.empty()) continue;
    auto t = m.target.index_of(it->second);
    m.mapping[i] = t ? *t : m.target.add(it->second);
  }
  return m;
}

}  // namespace internal

/// The 61 -> 39 folding: twelve multi-phone groups, "q" discarded, every other
/// phone mapped to itself.
inline FoldingMap build_timit_folding() {
  std::unordered_map<std::string, std::string> assign;
  for (const auto &p : timit_phones()) assign[p] = p;
  for (const auto &g : internal::timit_fold_groups())
    for (auto s : g.sources) assign[std::string(s)] = std::string(g.target);
  assign["q"] = "";
  return internal::assemble_folding(PhoneInventory(timit_phones()), assign);
}

/// Folds a labelling over map.source onto map.target, dropping discarded
/// labels and keeping the order of the rest.
inline Labelling fold_labelling(const FoldingMap &map, const Labelling &seq) {
  Labelling out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    int l = seq[i];
    if (l < 0 || static_cast<std::size_t>(l) >= map.mapping.size())
      throw Error(ErrorKind::kUnknownSymbol,
                  "label " + std::to_string(l) + " at position " +
                      std::to_string(i) + " is outside the source inventory");
    int t = map.mapping[static_cast<std::size_t>(l)];
    if (t != FoldingMap::kDiscard) out.push_back(t);
  }
  return out;
}

/// Name-level folding; unknown names are reported with their position.
inline std::vector<std::string> fold_names(const FoldingMap &map,
                                           const std::vector<std::string> &seq) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto idx = map.source.index_of(seq[i]);
    if (!idx)
      throw Error(ErrorKind::kUnknownSymbol,
                  "phone '" + normalize_phone(seq[i]) + "' at position " +
                      std::to_string(i) + " is not in the source inventory");
    int t = map.mapping[static_cast<std::size_t>(*idx)];
    if (t != FoldingMap::kDiscard) out.push_back(map.target.name(t));
  }
  return out;
}

inline Labelling labels_to_indices(const PhoneInventory &inv,
                                   const std::vector<std::string> &names) {
  Labelling out;
  out.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto idx = inv.index_of(names[i]);
    if (!idx)
      throw Error(ErrorKind::kUnknownSymbol,
                  "phone '" + normalize_phone(names[i]) + "' at position " +
                      std::to_string(i) + " is not in the inventory");
    out.push_back(*idx);
  }
  return out;
}

inline std::vector<std::string> indices_to_labels(const PhoneInventory &inv,
                                                  const Labelling &seq) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] < 0 || static_cast<std::size_t>(seq[i]) >= inv.size())
      throw Error(ErrorKind::kUnknownSymbol,
                  "label " + std::to_string(seq[i]) + " at position " +
                      std::to_string(i) + " is outside the inventory");
    out.push_back(inv.name(seq[i]));
  }
  return out;
}

/// Parses a folding table. One group per line:
///
///   target: source1 source2 ...
///   -: q              (discard)
///   iy                (bare name, maps to itself)
///
/// A '#' starts a comment when it opens a line or follows whitespace, so phone
/// names such as "h#" survive. Source order is order of appearance.
inline FoldingMap parse_folding_table(std::istream &is) {
  PhoneInventory source;
  std::unordered_map<std::string, std::string> assign;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '#' &&
          (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1])))) {
        line.resize(i);
        break;
      }
    }
    std::string body = normalize_phone(line);
    if (body.empty()) continue;
    std::string target;
    std::string rest;
    auto colon = body.find(':');
    if (colon == std::string::npos) {
      target = body;
      rest = body;
    } else {
      target = normalize_phone(std::string_view(body).substr(0, colon));
      rest = body.substr(colon + 1);
      if (target.empty())
        throw Error(ErrorKind::kParse,
                    "line " + std::to_string(lineno) + ": missing target");
    }
    if (target == "-") target.clear();
    std::istringstream ss(rest);
    std::string src;
    bool any = false;
    while (ss >> src) {
      any = true;
      if (source.contains(src))
        throw Error(ErrorKind::kParse, "line " + std::to_string(lineno) +
                                           ": phone '" + src + "' listed twice");
      source.add(src);
      assign[normalize_phone(src)] = target;
    }
    if (!any)
      throw Error(ErrorKind::kParse,
                  "line " + std::to_string(lineno) + ": no source phones");
  }
  return internal::assemble_folding(source, assign);
}

inline FoldingMap parse_folding_table(std::string_view text) {
  std::istringstream is{std::string(text)};
  return parse_folding_table(is);
}

/// Identity folding over an inventory.
inline FoldingMap identity_folding(const PhoneInventory &inv) {
  FoldingMap m;
  m.source = inv;
  m.target = inv;
  m.mapping.resize(inv.size());
  for (std::size_t i = 0; i < inv.size(); ++i) m.mapping[i] = static_cast<int>(i);
  return m;
}

}  // namespace blstmctc
