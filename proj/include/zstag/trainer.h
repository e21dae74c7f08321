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

// Minibatch SGD with Nesterov momentum for the embedding model and the
// classifier baseline, plus track-level inference and checkpoint files.
//
// Update rule, per minibatch with mean gradient g and update counter t:
//   lr_t = lr_0 / (1 + decay * t)
//   v    = momentum * v - lr_t * g
//   p   += momentum * v - lr_t * g

#ifndef ZSTAG_TRAINER_H_
#define ZSTAG_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zstag/audio.h"
#include "zstag/model.h"
#include "zstag/side_info.h"
#include "zstag/split.h"

namespace zstag {

struct TrainConfig {
  double margin = 0.2;
  double learning_rate = 0.001;
  double momentum = 0.9;
  double lr_decay = 1e-6;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  // 0 disables the holdout; selection then uses the training loss.
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;  // rate used by the epoch's last update
};

struct TrainResult {
  ModelParams params;  // best epoch, rounded to checkpoint precision
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_loss = 0.0;
  std::size_t n_train = 0;
  std::size_t n_valid = 0;
  std::size_t skipped = 0;  // train instances without a usable label pair
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Hinge-loss training of the joint embedding on a train setup (A-X, B-X or
// (A+B)-X). One random chunk and one (w+, w-) pair per instance per epoch.
TrainResult train_embedding(const SetupView& view, const SemanticTable& table,
                            const FeatureStore& features,
                            const EncoderConfig& encoder,
                            const TrainConfig& config,
                            const EpochCallback& on_epoch = {});

// Sigmoid / cross-entropy baseline with one output per view label.
TrainResult train_classifier(const SetupView& view,
                             const FeatureStore& features,
                             const EncoderConfig& encoder,
                             const TrainConfig& config,
                             const EpochCallback& on_epoch = {});

// Mean chunk embedding over the whole track.
std::vector<double> track_embedding(const ModelParams& params,
                                    const FeatureMatrix& features);

// Semantic-branch output for each label of `ids`.
std::map<LabelId, std::vector<double>> project_labels(
    const ModelParams& params, const SemanticTable& table,
    const std::vector<LabelId>& ids);

// Relevance of each candidate, in candidate order.
std::vector<double> score_labels(const ModelParams& params,
                                 std::span<const double> track,
                                 const SemanticTable& table,
                                 const std::vector<LabelId>& candidates);

// Sigmoid output per classifier label (params.class_labels order).
std::vector<double> classifier_scores(const ModelParams& params,
                                      std::span<const double> track);

struct CheckpointInfo {
  std::size_t epoch = 0;
  std::map<std::string, double> metrics;
  std::optional<Standardizer> standardizer;
};

// "ZSTC", u32 header length, JSON header, then every tensor as
// little-endian f32 in layout order.
std::string encode_checkpoint(const ModelParams& params,
                              const CheckpointInfo& info);
ModelParams decode_checkpoint(const std::string& bytes,
                              CheckpointInfo* info = nullptr);
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointInfo& info);
ModelParams load_checkpoint(const std::string& path,
                            CheckpointInfo* info = nullptr);

std::string encoder_config_json(const EncoderConfig& config);
EncoderConfig parse_encoder_config(const std::string& text);
std::string train_config_json(const TrainConfig& config);

// One JSON object per epoch: {epoch, train_loss, valid_loss, lr}.
std::string training_log_jsonl(const std::vector<EpochLog>& log);

}  // namespace zstag

#endif  // ZSTAG_TRAINER_H_
