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

#include "zstag/trainer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "zstag/common.h"

namespace zstag {

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kValidStream = 3;
constexpr std::uint64_t kEpochStreamBase = 100;
// Fixed (chunk, target) draws per validation instance.
constexpr int kValidDraws = 8;

struct Example {
  FeatureMatrix chunk;
  std::vector<double> first;   // w+ or classifier targets
  std::vector<double> second;  // w-
};

using Sampler = std::function<std::optional<Example>(std::size_t, Rng&)>;
using LossFn = std::function<double(const ModelParams&, const Example&,
                                    Gradients*, double)>;

void check_finite(double value, const char* what, std::size_t epoch) {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string("non-finite ") + what + " in epoch " +
                         std::to_string(epoch));
  }
}

double mean_loss(const ModelParams& params, const std::vector<Example>& batch,
                 const LossFn& loss) {
  double total = 0.0;
  for (const auto& ex : batch) total += loss(params, ex, nullptr, 1.0);
  return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
}

TrainResult run_sgd(ModelParams params, const std::vector<std::size_t>& train,
                    const std::vector<std::size_t>& valid,
                    const Sampler& sampler, const LossFn& loss,
                    const TrainConfig& config, const EpochCallback& on_epoch) {
  TrainResult result;
  result.n_train = train.size();

  std::vector<Example> valid_examples;
  Rng valid_rng(derive_seed(config.seed, kValidStream));
  for (std::size_t row : valid) {
    for (int draw = 0; draw < kValidDraws; ++draw) {
      if (auto ex = sampler(row, valid_rng)) valid_examples.push_back(*ex);
    }
  }
  result.n_valid = valid.size();

  std::vector<double> velocity(params.count(), 0.0);
  std::vector<double> best = params.values;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, kEpochStreamBase + epoch));
    std::vector<std::size_t> order = train;
    rng.shuffle(order);

    std::vector<Example> examples;
    examples.reserve(order.size());
    std::size_t skipped = 0;
    for (std::size_t row : order) {
      if (auto ex = sampler(row, rng)) {
        examples.push_back(std::move(*ex));
      } else {
        ++skipped;
      }
    }
    if (epoch == 1) {
      result.skipped = skipped;
      if (skipped > 0) {
        spdlog::info("{} train instances have no usable label pair", skipped);
      }
    }
    if (examples.empty()) throw DataError("empty train set");

    EpochLog entry;
    entry.epoch = epoch;
    double epoch_loss = 0.0;
    Gradients grads(params.count());
    for (std::size_t begin = 0; begin < examples.size();
         begin += config.batch_size) {
      const std::size_t end =
          std::min(begin + config.batch_size, examples.size());
      const double scale = 1.0 / static_cast<double>(end - begin);
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t i = begin; i < end; ++i) {
        const double l = loss(params, examples[i], &grads, scale);
        check_finite(l, "training loss", epoch);
        epoch_loss += l;
      }
      const double lr =
          config.learning_rate /
          (1.0 + config.lr_decay * static_cast<double>(step));
      for (std::size_t k = 0; k < params.count(); ++k) {
        const double g = grads[k];
        velocity[k] = config.momentum * velocity[k] - lr * g;
        params.values[k] += config.momentum * velocity[k] - lr * g;
      }
      ++step;
      entry.lr = lr;
    }
    entry.train_loss = epoch_loss / static_cast<double>(examples.size());
    entry.valid_loss = valid_examples.empty()
                           ? entry.train_loss
                           : mean_loss(params, valid_examples, loss);
    check_finite(entry.valid_loss, "validation loss", epoch);
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    spdlog::debug("epoch {} train {:.6f} valid {:.6f} lr {:.3g}", epoch,
                  entry.train_loss, entry.valid_loss, entry.lr);

    if (entry.valid_loss < best_loss) {
      best_loss = entry.valid_loss;
      best = params.values;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      spdlog::info("early stop after epoch {} (best epoch {})", epoch,
                   result.best_epoch);
      break;
    }
  }
  params.values = std::move(best);
  params.round_to_float();
  result.best_loss = best_loss;
  result.params = std::move(params);
  return result;
}

const FeatureMatrix& features_for(const FeatureStore& features,
                                  const std::string& id) {
  const auto it = features.find(id);
  if (it == features.end()) {
    throw DataError("no features for instance " + id);
  }
  return it->second;
}

Holdout split_train(const SetupView& view, const TrainConfig& config) {
  if (config.validation_fraction == 0.0) {
    return {view.instance_ids, {}};
  }
  return holdout_validation(view, config.validation_fraction, config.seed);
}

std::vector<std::size_t> rows_of(const SetupView& view,
                                 const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < view.instance_ids.size(); ++i) {
    index.emplace(view.instance_ids[i], i);
  }
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) rows.push_back(index.at(id));
  return rows;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("margin must be positive");
  if (!(learning_rate >= 0.0)) {
    throw ConfigError("learning_rate must be non-negative");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("momentum must be in [0, 1)");
  }
  if (lr_decay < 0.0) throw ConfigError("lr_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
    throw ConfigError("validation_fraction must be in [0, 1)");
  }
}

TrainResult train_embedding(const SetupView& view, const SemanticTable& table,
                            const FeatureStore& features,
                            const EncoderConfig& encoder,
                            const TrainConfig& config,
                            const EpochCallback& on_epoch) {
  config.validate();
  require_role(view, SetupRole::kTrain);
  if (view.instance_ids.empty()) throw DataError("empty train set");
  for (LabelId id : view.label_ids) {
    if (!table.contains(id)) {
      throw DataError("semantic table has no vector for seen label " +
                      std::to_string(id));
    }
  }
  EncoderConfig shaped = encoder;
  shaped.semantic_input_dim = table.dim();
  shaped.n_classes = 0;
  ModelParams params = init_params(shaped, config.seed);

  const std::set<LabelId> seen(view.label_ids.begin(), view.label_ids.end());
  const Holdout holdout = split_train(view, config);
  const Sampler sampler = [&](std::size_t row,
                              Rng& rng) -> std::optional<Example> {
    const auto pair = sample_pair(view.positives[row], seen, rng);
    if (!pair) return std::nullopt;
    Example ex;
    ex.chunk = sample_chunk(features_for(features, view.instance_ids[row]),
                            shaped.input_frames, rng);
    const auto pos = table.vector_for(pair->positive);
    const auto neg = table.vector_for(pair->negative);
    ex.first.assign(pos.begin(), pos.end());
    ex.second.assign(neg.begin(), neg.end());
    return ex;
  };
  const LossFn loss = [&](const ModelParams& p, const Example& ex,
                          Gradients* grads, double scale) {
    return embedding_loss(p, ex.chunk, ex.first, ex.second, config.margin,
                          grads, scale);
  };
  return run_sgd(std::move(params), rows_of(view, holdout.train_ids),
                 rows_of(view, holdout.valid_ids), sampler, loss, config,
                 on_epoch);
}

TrainResult train_classifier(const SetupView& view,
                             const FeatureStore& features,
                             const EncoderConfig& encoder,
                             const TrainConfig& config,
                             const EpochCallback& on_epoch) {
  config.validate();
  require_role(view, SetupRole::kTrain);
  if (view.instance_ids.empty()) throw DataError("empty train set");
  if (view.label_ids.empty()) throw DataError("train view has no labels");
  EncoderConfig shaped = encoder;
  shaped.semantic_input_dim = 0;
  shaped.n_classes = view.label_ids.size();
  ModelParams params = init_params(shaped, config.seed);
  params.class_labels = view.label_ids;

  std::map<LabelId, std::size_t> column;
  for (std::size_t j = 0; j < view.label_ids.size(); ++j) {
    column.emplace(view.label_ids[j], j);
  }
  const Holdout holdout = split_train(view, config);
  const Sampler sampler = [&](std::size_t row,
                              Rng& rng) -> std::optional<Example> {
    if (view.positives[row].empty()) return std::nullopt;
    Example ex;
    ex.chunk = sample_chunk(features_for(features, view.instance_ids[row]),
                            shaped.input_frames, rng);
    ex.first.assign(shaped.n_classes, 0.0);
    for (LabelId id : view.positives[row]) ex.first[column.at(id)] = 1.0;
    return ex;
  };
  const LossFn loss = [](const ModelParams& p, const Example& ex,
                         Gradients* grads, double scale) {
    return classifier_loss(p, ex.chunk, ex.first, grads, scale);
  };
  return run_sgd(std::move(params), rows_of(view, holdout.train_ids),
                 rows_of(view, holdout.valid_ids), sampler, loss, config,
                 on_epoch);
}

std::vector<double> track_embedding(const ModelParams& params,
                                    const FeatureMatrix& features) {
  const auto chunks = chunk_track(features, params.config.input_frames);
  std::vector<double> mean(params.config.embedding_dim, 0.0);
  for (const auto& chunk : chunks) {
    const auto out = audio_forward(params, chunk);
    for (std::size_t e = 0; e < mean.size(); ++e) mean[e] += out.embedding[e];
  }
  for (double& v : mean) v /= static_cast<double>(chunks.size());
  return mean;
}

std::map<LabelId, std::vector<double>> project_labels(
    const ModelParams& params, const SemanticTable& table,
    const std::vector<LabelId>& ids) {
  std::map<LabelId, std::vector<double>> out;
  for (LabelId id : ids) {
    if (!table.contains(id)) {
      throw DataError("semantic table has no vector for label " +
                      std::to_string(id));
    }
    out.emplace(id, semantic_forward(params, table.vector_for(id)).output);
  }
  return out;
}

std::vector<double> score_labels(const ModelParams& params,
                                 std::span<const double> track,
                                 const SemanticTable& table,
                                 const std::vector<LabelId>& candidates) {
  const auto projected = project_labels(params, table, candidates);
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (LabelId id : candidates) {
    scores.push_back(relevance(track, projected.at(id)));
  }
  return scores;
}

std::vector<double> classifier_scores(const ModelParams& params,
                                      std::span<const double> track) {
  auto logits = classifier_logits(params, track);
  for (double& z : logits) {
    z = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                 : std::exp(z) / (1.0 + std::exp(z));
  }
  return logits;
}

namespace {

json encoder_to_json(const EncoderConfig& config) {
  json layers = json::array();
  for (const auto& l : config.conv_stack) {
    layers.push_back({{"channels", l.channels},
                      {"width", l.width},
                      {"pool", l.pool}});
  }
  return {{"input_frames", config.input_frames},
          {"input_bins", config.input_bins},
          {"conv_stack", layers},
          {"head_channels", config.head_channels},
          {"head_width", config.head_width},
          {"embedding_dim", config.embedding_dim},
          {"semantic_input_dim", config.semantic_input_dim},
          {"n_classes", config.n_classes},
          {"semantic_relu", config.semantic_relu}};
}

EncoderConfig encoder_from_json(const json& obj) {
  EncoderConfig config;
  config.input_frames = obj.at("input_frames").get<std::size_t>();
  config.input_bins = obj.at("input_bins").get<std::size_t>();
  for (const auto& l : obj.at("conv_stack")) {
    config.conv_stack.push_back({l.at("channels").get<std::size_t>(),
                                 l.at("width").get<std::size_t>(),
                                 l.at("pool").get<std::size_t>()});
  }
  config.head_channels = obj.at("head_channels").get<std::size_t>();
  config.head_width = obj.at("head_width").get<std::size_t>();
  config.embedding_dim = obj.at("embedding_dim").get<std::size_t>();
  config.semantic_input_dim = obj.at("semantic_input_dim").get<std::size_t>();
  config.n_classes = obj.at("n_classes").get<std::size_t>();
  config.semantic_relu = obj.at("semantic_relu").get<bool>();
  return config;
}

}  // namespace

std::string encoder_config_json(const EncoderConfig& config) {
  return encoder_to_json(config).dump();
}

EncoderConfig parse_encoder_config(const std::string& text) {
  try {
    return encoder_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid encoder config: ") + e.what());
  }
}

std::string train_config_json(const TrainConfig& config) {
  return json{{"margin", config.margin},
              {"learning_rate", config.learning_rate},
              {"momentum", config.momentum},
              {"lr_decay", config.lr_decay},
              {"batch_size", config.batch_size},
              {"max_epochs", config.max_epochs},
              {"patience", config.patience},
              {"validation_fraction", config.validation_fraction},
              {"seed", config.seed}}
      .dump();
}

std::string encode_checkpoint(const ModelParams& params,
                              const CheckpointInfo& info) {
  json header;
  header["format"] = "zstag-checkpoint";
  header["config"] = encoder_to_json(params.config);
  header["seed"] = params.seed;
  header["epoch"] = info.epoch;
  header["metrics"] = info.metrics;
  header["class_labels"] = params.class_labels;
  json tensors = json::array();
  for (const auto& slot : params.layout().slots()) {
    tensors.push_back({{"name", slot.name}, {"shape", slot.shape}});
  }
  header["tensors"] = tensors;
  if (info.standardizer) {
    header["standardizer"] = json::parse(info.standardizer->to_json());
  }
  const std::string text = header.dump();
  std::string out = "ZSTC";
  append_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + params.count() * 4);
  for (double v : params.values) append_f32(out, static_cast<float>(v));
  return out;
}

namespace {

ModelParams decode_checkpoint_body(const std::string& bytes,
                                   CheckpointInfo* info) {
  if (bytes.size() < 8 || bytes.compare(0, 4, "ZSTC") != 0) {
    throw DataError("not a zstag checkpoint");
  }
  const std::uint32_t header_size = read_u32(bytes, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(header_size)) {
    throw DataError("truncated checkpoint header");
  }
  json header;
  try {
    header = json::parse(bytes.substr(8, header_size));
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid checkpoint header: ") + e.what());
  }
  ModelParams params(encoder_from_json(header.at("config")));
  params.seed = header.at("seed").get<std::uint64_t>();
  params.class_labels = header.at("class_labels").get<std::vector<LabelId>>();
  const auto& slots = params.layout().slots();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != slots.size()) {
    throw DataError("checkpoint tensor list does not match its config");
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (tensors[i].at("name").get<std::string>() != slots[i].name ||
        tensors[i].at("shape").get<std::vector<std::size_t>>() !=
            slots[i].shape) {
      throw DataError("checkpoint tensor " + slots[i].name +
                      " has an unexpected name or shape");
    }
  }
  const std::size_t base = 8 + header_size;
  if (bytes.size() != base + params.count() * 4) {
    throw DataError("checkpoint payload size mismatch");
  }
  for (std::size_t i = 0; i < params.count(); ++i) {
    params.values[i] = read_f32(bytes, base + 4 * i);
  }
  if (info != nullptr) {
    info->epoch = header.at("epoch").get<std::size_t>();
    info->metrics = header.at("metrics").get<std::map<std::string, double>>();
    info->standardizer.reset();
    if (header.contains("standardizer")) {
      info->standardizer =
          Standardizer::from_json(header.at("standardizer").dump());
    }
  }
  return params;
}

}  // namespace

ModelParams decode_checkpoint(const std::string& bytes, CheckpointInfo* info) {
  try {
    return decode_checkpoint_body(bytes, info);
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointInfo& info) {
  write_file(path, encode_checkpoint(params, info));
}

ModelParams load_checkpoint(const std::string& path, CheckpointInfo* info) {
  try {
    return decode_checkpoint(read_file(path), info);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string training_log_jsonl(const std::vector<EpochLog>& log) {
  std::string out;
  for (const auto& e : log) {
    out += json{{"epoch", e.epoch},
                {"train_loss", e.train_loss},
                {"valid_loss", e.valid_loss},
                {"lr", e.lr}}
               .dump();
    out += '\n';
  }
  return out;
}

}  // namespace zstag
