// tests/toy_task.hpp

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

// Synthetic sequence-labelling task for end-to-end training checks.
//
// Alphabet of 5 symbols. Frames are 8-dimensional: dims 0-4 one-hot for the
// symbol, dim 5 marks the single gap frame between consecutive symbols (so
// repeated symbols stay separable), dims 6-7 carry noise only. Each symbol
// is stretched over 3-8 frames; sequences are redrawn until they are 20-60
// frames long. Gaussian noise is added to every element.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "blstmctc/training.hpp"

namespace blstmctc::testing {

struct ToyTaskOptions {
  std::size_t symbols = 5;
  std::size_t dim = 8;
  std::size_t min_stretch = 3, max_stretch = 8;
  std::size_t min_frames = 20, max_frames = 60;
  std::size_t min_labels = 3, max_labels = 10;
  double noise = 0.2;
};

inline Utterance make_toy_utterance(std::mt19937_64 &rng, const std::string &id,
                                    const ToyTaskOptions &o = {}) {
  std::uniform_int_distribution<std::size_t> len(o.min_labels, o.max_labels);
  std::uniform_int_distribution<int> sym(0, static_cast<int>(o.symbols) - 1);
  std::uniform_int_distribution<std::size_t> stretch(o.min_stretch, o.max_stretch);
  std::normal_distribution<double> noise(0.0, o.noise);
  while (true) {
    Labelling labels(len(rng));
    std::vector<std::size_t> spans(labels.size());
    std::size_t frames = labels.empty() ? 0 : labels.size() - 1;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = sym(rng);
      spans[i] = stretch(rng);
      frames += spans[i];
    }
    if (frames < o.min_frames || frames > o.max_frames) continue;
    Utterance u{id, Matrix(frames, o.dim), labels};
    std::size_t t = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i > 0) u.frames(t++, o.symbols) = 1.0;
      for (std::size_t s = 0; s < spans[i]; ++s) u.frames(t++, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    for (double &v : u.frames.data()) v += noise(rng);
    return u;
  }
}

inline std::vector<Utterance> make_toy_corpus(std::size_t n, std::uint64_t seed,
                                              const std::string &prefix,
                                              const ToyTaskOptions &o = {}) {
  std::mt19937_64 rng(seed);
  std::vector<Utterance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(make_toy_utterance(rng, prefix + std::to_string(i), o));
  return out;
}

inline ModelConfig toy_model_config(std::size_t blocks = 16) {
  return ModelConfig{8, blocks, 1, 6};
}

}  // namespace blstmctc::testing
