// Copyright 2026 The zstag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Planted-structure data for desk-scale experiments.
//
// Seen labels get Gaussian prototypes in the semantic space; each unseen
// prototype is a random convex combination of two or three seen ones. An
// instance's latent vector is the sum of its labels' unit-normalized
// prototypes, and every frame of its feature matrix is a fixed random linear
// map of that latent vector plus Gaussian noise. Label popularity is skewed
// so that some seen labels are rare, and an unseen label often co-occurs with
// the seen label that dominates its mixture, the way a sub-genre tag travels
// with its parent genre.

#ifndef ZSTAG_SYNTHETIC_H_
#define ZSTAG_SYNTHETIC_H_

#include <cstddef>
#include <cstdint>
#include <string>

#include "zstag/audio.h"
#include "zstag/dataset.h"
#include "zstag/side_info.h"
#include "zstag/split.h"

namespace zstag {

struct SyntheticSpec {
  std::size_t n_labels = 30;
  std::size_t n_unseen = 6;
  std::size_t n_instances = 1000;
  std::size_t feature_dim = 16;
  std::size_t semantic_dim = 8;
  std::size_t frames = 64;  // per track
  double cardinality = 2.0;
  double noise = 1.0;            // per-frame noise std
  double popularity_skew = 1.0;  // label weight ~ 1 / (rank + 1)^skew
  // Chance that an unseen label brings along its dominant seen component.
  double parent_rate = 0.5;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

struct SyntheticData {
  Catalog catalog;
  SemanticTable table;  // unstandardized prototypes, keyed by catalog ids
  FeatureStore features;
  LabelSplit planted;   // X = labels drawn as seen, Y = convex mixtures
};

// Deterministic in spec.seed. Resamples label assignments until groups A, B
// and C under the planted split are all non-empty; throws DataError when
// that fails repeatedly.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Writes catalog.jsonl, side_info.json/.f32, planted_split.json and
// features/<id>.zstf under `dir`.
void write_synthetic(const SyntheticData& data, const std::string& dir);

// Reads the planted split written by write_synthetic.
LabelSplit load_planted_split(const std::string& path);

}  // namespace zstag

#endif  // ZSTAG_SYNTHETIC_H_
