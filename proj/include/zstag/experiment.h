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

// Config-driven experiments: data preparation, the full train/test grid,
// the embedding-vs-classifier baseline and the qualitative demos.
//
// Config files are TOML:
//
//   seed = 0                       # default for every seed below
//   [data]       catalog, allowlist (optional)
//   [side_info]  kind = attribute | word | table | synthetic, path,
//                standardize
//   [split]      unseen_fraction, seed, labels (optional {"X", "Y"} file)
//   [features]   source = audio | precomputed | synthetic, audio_root, dir,
//                standardize
//   [synthetic]  SyntheticSpec fields
//   [model]      profile = tiny | paper
//   [train]      TrainConfig fields
//   [eval]       ks = [1, 5, 10]
//   [output]     dir
//
// Relative paths resolve against the config file's directory.

#ifndef ZSTAG_EXPERIMENT_H_
#define ZSTAG_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "zstag/audio.h"
#include "zstag/dataset.h"
#include "zstag/evaluation.h"
#include "zstag/model.h"
#include "zstag/side_info.h"
#include "zstag/split.h"
#include "zstag/synthetic.h"
#include "zstag/trainer.h"

namespace zstag {

enum class SideInfoSource { kAttribute, kWord, kTable, kSynthetic };
enum class FeatureSource { kAudio, kPrecomputed, kSynthetic };

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string catalog;
  std::string allowlist;  // empty: keep every label

  SideInfoSource side_info = SideInfoSource::kWord;
  std::string side_info_path;
  bool standardize_side_info = false;  // word vectors only

  double unseen_fraction = 0.2;
  std::uint64_t split_seed = 0;
  std::string split_labels;  // fixed label split; overrides unseen_fraction

  FeatureSource features = FeatureSource::kPrecomputed;
  std::string audio_root;
  std::string feature_dir;
  bool standardize_features = true;
  SyntheticSpec synthetic;

  std::string profile = "tiny";
  TrainConfig train;
  std::vector<std::size_t> ks = {1, 5, 10};
  std::string output_dir = "zstag-out";

  // Throws ConfigError on bad values, missing paths or a side-info source
  // that does not fit the feature source.
  void validate() const;

  // Sets the global seed and every derived seed.
  void set_seed(std::uint64_t value);
};

// Throws ConfigError on syntax errors, unknown keys or wrong types.
ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);
// Every field, with absolute-as-given paths. Parsing the result yields the
// same config.
std::string experiment_config_toml(const ExperimentConfig& config);

struct Experiment {
  ExperimentConfig config;
  Catalog catalog;
  SemanticTable table;
  SplitManifest manifest;
  FeatureStore features;  // standardized when configured
  std::optional<Standardizer> standardizer;
  EncoderConfig encoder;
};

// Loads or generates every input. Failures keep their error kind and are
// prefixed with the stage name, e.g. "[catalog] ...". Without
// `with_features` only the catalog, table and split are prepared.
Experiment prepare_experiment(const ExperimentConfig& config,
                              bool with_features = true);

enum class ModelKind { kEmbedding, kClassifier };

// Trains on `train_setup`, or loads the checkpoint cached under
// <out>/checkpoints by content key. Training logs go to <out>/logs.
ModelParams train_or_load(const Experiment& experiment, ModelKind kind,
                          const SetupView& train_setup,
                          const std::string& out_dir);

// Content key of a (data, split, features, model, train config, setup)
// combination.
std::string checkpoint_key(const Experiment& experiment, ModelKind kind,
                           const SetupView& train_setup);

// <out>/checkpoints/<kind>_<setup>-<key>.zstc
std::string checkpoint_path(const Experiment& experiment, ModelKind kind,
                            const SetupView& train_setup,
                            const std::string& out_dir);

inline const std::vector<std::string>& grid_train_setups() {
  static const std::vector<std::string> kSetups = {"A-X", "B-X", "(A+B)-X"};
  return kSetups;
}
inline const std::vector<std::string>& grid_annotation_setups() {
  static const std::vector<std::string> kSetups = {
      "B-Y", "C-Y", "(B+C)-Y", "B-(X+Y)", "C-(X+Y)", "(B+C)-(X+Y)"};
  return kSetups;
}
inline const std::vector<std::string>& grid_retrieval_setups() {
  static const std::vector<std::string> kSetups = {"(B+C)-Y", "(A+B+C)-Y"};
  return kSetups;
}

struct GridResult {
  std::vector<EvalReport> annotation;  // train-major, test order as listed
  std::vector<EvalReport> retrieval;
};

// Writes annotation.csv, retrieval.csv, reports.json, manifest.json,
// config.resolved.toml, run.json, checkpoints/ and logs/ under `out_dir`.
GridResult run_grid(const Experiment& experiment, const std::string& out_dir);

struct BaselineResult {
  EvalReport embedding;
  EvalReport classifier;
};

// Both models trained on A-X, retrieval on B-X. Writes baseline.csv.
BaselineResult run_baseline(const Experiment& experiment,
                            const std::string& out_dir);

// model,train_setup,test_setup,AUC-l,MAP-l
std::string baseline_csv(const BaselineResult& result);

struct RankedLabel {
  LabelId label;
  std::string name;
  double score;
  bool unseen;
};

// Top-k labels of `label_group` for one track, descending score with ties
// by name. k larger than the group returns the whole group.
std::vector<RankedLabel> annotate(const ModelParams& params,
                                  const SemanticTable& table,
                                  const SplitManifest& manifest,
                                  const FeatureMatrix& track,
                                  LabelGroup label_group, std::size_t k);

struct RankedTrack {
  std::string id;
  double score;
};

// Query vector for a label name, or for any word of `vocabulary`. Word
// vectors go through the table's standardization when it has one. Throws
// DataError naming the closest known names when the query is unknown.
std::vector<double> resolve_query(const SemanticTable& table,
                                  const std::string& query,
                                  const WordVectors* vocabulary = nullptr);

// Top-k tracks by relevance to the query, ties by id.
std::vector<RankedTrack> retrieve(const ModelParams& params,
                                  const TrackEmbeddings& tracks,
                                  std::span<const double> query,
                                  std::size_t k);

struct NeighborLists {
  std::vector<ScoredLabel> semantic;   // cosine of raw side-info vectors
  std::vector<ScoredLabel> embedding;  // cosine after the semantic branch
};

NeighborLists neighbors(const ModelParams& params, const SemanticTable& table,
                        std::span<const double> query, std::size_t k);

// Mel features of every catalog instance from <audio_root>/<instance audio>.
// With a cache directory, results are stored under a key of the extraction
// settings and the audio bytes, and reused when present.
FeatureStore extract_catalog_features(const Catalog& catalog,
                                      const std::string& audio_root,
                                      const std::string& cache_dir = "",
                                      const MelConfig& mel = {});

// Per-bin standardizer fitted on every frame of the A and B instances.
Standardizer fit_train_standardizer(const FeatureStore& features,
                                    const SplitManifest& manifest);

// Levenshtein distance over bytes.
std::size_t edit_distance(const std::string& a, const std::string& b);

std::string side_info_source_name(SideInfoSource source);
std::string feature_source_name(FeatureSource source);

}  // namespace zstag

#endif  // ZSTAG_EXPERIMENT_H_
