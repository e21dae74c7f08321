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

#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "test_support.h"

namespace zstag {
namespace {

using testing::record;

constexpr std::size_t kBins = 4;

// Two seen labels with opposite audio, a third seen label that no group-A
// instance carries, and one unseen label held by a single C instance.
struct Toy {
  Catalog catalog;
  SplitManifest manifest;
  FeatureStore features;
  SemanticTable table;
};

Toy make_toy() {
  Toy t;
  std::vector<CatalogRecord> records;
  for (int i = 0; i < 6; ++i) {
    records.push_back(record("p" + std::to_string(i), {"p"}));
    records.push_back(record("q" + std::to_string(i), {"q"}));
  }
  records.push_back(record("b0", {"p", "r", "u"}));
  records.push_back(record("c0", {"u"}));
  t.catalog = Catalog::from_records(records);
  const LabelId p = *t.catalog.find_label("p");
  const LabelId q = *t.catalog.find_label("q");
  const LabelId r = *t.catalog.find_label("r");
  const LabelId u = *t.catalog.find_label("u");
  t.manifest = partition_instances(t.catalog, {{p, q, r}, {u}});

  Rng rng(3);
  for (const auto& instance : t.catalog.instances()) {
    FeatureMatrix m(40, kBins);
    const double sign = instance.id[0] == 'q' ? -1.0 : 1.0;
    for (std::size_t f = 0; f < m.frames; ++f) {
      for (std::size_t d = 0; d < kBins; ++d) {
        m.at(f, d) = static_cast<float>(sign * (d < 2 ? 1.0 : -0.5) +
                                        0.1 * rng.normal());
      }
    }
    t.features[instance.id] = m;
  }
  std::vector<LabelId> ids = {p, q, r, u};
  std::vector<std::string> names = {"p", "q", "r", "u"};
  t.table = SemanticTable(SemanticKind::kWord, 3, ids, names,
                          {1, 0, 0, 0, 1, 0, 0, 0.5, 0.5, 0.3, 0.3, 1});
  return t;
}

SetupView train_view(const Toy& t, InstanceGroup g = InstanceGroup::kA) {
  return make_setup(t.manifest, t.catalog, g, LabelGroup::kX);
}

EncoderConfig toy_encoder() { return EncoderConfig::tiny(kBins, 0); }

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.learning_rate = 0.03;
  c.batch_size = 4;
  c.max_epochs = epochs;
  c.patience = epochs;
  c.validation_fraction = 0.0;
  return c;
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.validate();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.validation_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainEmbedding, ZeroLearningRateLeavesInitialization) {
  const Toy t = make_toy();
  TrainConfig c = quick(3);
  c.learning_rate = 0.0;
  const TrainResult r =
      train_embedding(train_view(t), t.table, t.features, toy_encoder(), c);
  EncoderConfig shaped = toy_encoder();
  shaped.semantic_input_dim = 3;
  EXPECT_EQ(r.params.values, init_params(shaped, c.seed).values);
  EXPECT_EQ(r.log.size(), 3u);
}

TEST(TrainEmbedding, DeterministicPerSeed) {
  const Toy t = make_toy();
  TrainConfig c = quick(5);
  c.validation_fraction = 0.2;
  const auto a =
      train_embedding(train_view(t), t.table, t.features, toy_encoder(), c);
  const auto b =
      train_embedding(train_view(t), t.table, t.features, toy_encoder(), c);
  EXPECT_EQ(a.params.values, b.params.values);
  EXPECT_EQ(training_log_jsonl(a.log), training_log_jsonl(b.log));
  c.seed = 1;
  const auto other =
      train_embedding(train_view(t), t.table, t.features, toy_encoder(), c);
  EXPECT_NE(a.params.values, other.params.values);
}

TEST(TrainEmbedding, SeparableFixtureDrivesHingeToZero) {
  const Toy t = make_toy();
  const TrainResult r = train_embedding(train_view(t), t.table, t.features,
                                        toy_encoder(), quick(150));
  EXPECT_LT(r.best_loss, 0.01 * 0.2);
  // Each training instance scores its own label above the others.
  const auto view = train_view(t);
  for (std::size_t row = 0; row < view.instance_ids.size(); ++row) {
    const auto y = track_embedding(r.params, t.features.at(view.instance_ids[row]));
    const auto s = score_labels(r.params, y, t.table, view.label_ids);
    const LabelId own = view.positives[row].front();
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (view.label_ids[j] == own) continue;
      const std::size_t own_col =
          std::find(view.label_ids.begin(), view.label_ids.end(), own) -
          view.label_ids.begin();
      EXPECT_GT(s[own_col], s[j]);
    }
  }
}

TEST(TrainEmbedding, RejectsNonTrainViewsAndMissingVectors) {
  const Toy t = make_toy();
  const SetupView annot = make_setup(t.manifest, t.catalog, InstanceGroup::kC,
                                     LabelGroup::kY);
  EXPECT_THROW(
      train_embedding(annot, t.table, t.features, toy_encoder(), quick(1)),
      ConfigError);
  const SemanticTable partial(SemanticKind::kWord, 1, {0}, {"p"}, {1.0});
  EXPECT_THROW(
      train_embedding(train_view(t), partial, t.features, toy_encoder(),
                      quick(1)),
      DataError);
}

TEST(TrainClassifier, FitsSeparableFixtureAndSuppressesAbsentLabel) {
  const Toy t = make_toy();
  const auto view = train_view(t);
  const TrainResult r =
      train_classifier(view, t.features, toy_encoder(), quick(150));
  EXPECT_LT(r.best_loss, 0.05);
  EXPECT_EQ(r.params.class_labels, view.label_ids);
  const LabelId absent = *t.catalog.find_label("r");
  const std::size_t col =
      std::find(view.label_ids.begin(), view.label_ids.end(), absent) -
      view.label_ids.begin();
  double mean = 0.0;
  for (const auto& id : view.instance_ids) {
    const auto y = track_embedding(r.params, t.features.at(id));
    mean += classifier_scores(r.params, y)[col];
  }
  EXPECT_LT(mean / static_cast<double>(view.instance_ids.size()), 0.1);
}

TEST(TrainClassifier, ZeroLearningRateAndDeterminism) {
  const Toy t = make_toy();
  TrainConfig c = quick(2);
  c.learning_rate = 0.0;
  const auto view = train_view(t);
  const TrainResult r = train_classifier(view, t.features, toy_encoder(), c);
  EncoderConfig shaped = toy_encoder();
  shaped.n_classes = view.label_ids.size();
  EXPECT_EQ(r.params.values, init_params(shaped, 0).values);
  c.learning_rate = 0.01;
  EXPECT_EQ(train_classifier(view, t.features, toy_encoder(), c).params.values,
            train_classifier(view, t.features, toy_encoder(), c).params.values);
}

TEST(TrainEmbedding, EpochCallbackAndEarlyStop) {
  const Toy t = make_toy();
  TrainConfig c = quick(50);
  c.patience = 2;
  c.learning_rate = 0.0;  // loss never improves after epoch 1
  std::vector<std::size_t> seen;
  const auto r = train_embedding(train_view(t), t.table, t.features,
                                 toy_encoder(), c,
                                 [&](const EpochLog& e) { seen.push_back(e.epoch); });
  EXPECT_EQ(r.best_epoch, 1u);
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(TrackEmbedding, AveragesChunkEmbeddings) {
  const ModelParams p = init_params(toy_encoder(), 4);
  Rng rng(1);
  FeatureMatrix one(32, kBins);
  for (float& v : one.data) v = static_cast<float>(rng.normal());
  const auto single = audio_forward(p, one).embedding;
  EXPECT_EQ(track_embedding(p, one), single);

  FeatureMatrix twice(64, kBins);
  std::copy(one.data.begin(), one.data.end(), twice.data.begin());
  std::copy(one.data.begin(), one.data.end(), twice.data.begin() + 32 * kBins);
  const auto dup = track_embedding(p, twice);
  for (std::size_t e = 0; e < dup.size(); ++e) {
    EXPECT_NEAR(dup[e], single[e], 1e-15);
  }

  FeatureMatrix three(96, kBins);
  for (float& v : three.data) v = static_cast<float>(rng.normal());
  std::vector<double> want(p.config.embedding_dim, 0.0);
  for (int k = 0; k < 3; ++k) {
    FeatureMatrix c(32, kBins);
    std::copy(three.data.begin() + k * 32 * kBins,
              three.data.begin() + (k + 1) * 32 * kBins, c.data.begin());
    const auto y = audio_forward(p, c).embedding;
    for (std::size_t e = 0; e < want.size(); ++e) want[e] += y[e] / 3.0;
  }
  const auto got = track_embedding(p, three);
  for (std::size_t e = 0; e < got.size(); ++e) {
    EXPECT_NEAR(got[e], want[e], 1e-12);
  }
}

TEST(ScoreLabels, CosineOfProjectionsAndScaleInvariance) {
  const Toy t = make_toy();
  EncoderConfig c = toy_encoder();
  c.semantic_input_dim = 3;
  ModelParams p = init_params(c, 2);
  for (double& v : p.tensor("semantic.bias")) v = 0.3;
  std::vector<double> y(p.config.embedding_dim);
  Rng rng(2);
  for (double& v : y) v = rng.normal();
  const std::vector<LabelId> ids = t.table.label_ids();
  const auto s = score_labels(p, y, t.table, ids);
  const auto proj = project_labels(p, t.table, ids);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    EXPECT_DOUBLE_EQ(s[j], relevance(y, proj.at(ids[j])));
  }
  std::vector<double> y3 = y;
  for (double& v : y3) v *= 3.0;
  const auto s3 = score_labels(p, y3, t.table, ids);
  for (std::size_t j = 0; j < ids.size(); ++j) EXPECT_NEAR(s3[j], s[j], 1e-14);
  EXPECT_THROW(score_labels(p, y, t.table, {99}), DataError);
}

TEST(Checkpoint, RoundTripsValuesAndMetadata) {
  EncoderConfig c = toy_encoder();
  c.semantic_input_dim = 3;
  ModelParams p = init_params(c, 9);
  for (double& v : p.tensor("semantic.bias")) v = 0.123456789;
  p.round_to_float();
  CheckpointInfo info;
  info.epoch = 17;
  info.metrics["valid_loss"] = 0.25;
  info.standardizer = Standardizer({1, 2, 3, 4}, {0.5, 1, 1, 2}, 99);
  testing::TempDir dir;
  save_checkpoint(dir.file("m.zstc"), p, info);
  CheckpointInfo back_info;
  const ModelParams back = load_checkpoint(dir.file("m.zstc"), &back_info);
  EXPECT_EQ(back.values, p.values);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(encoder_config_json(back.config), encoder_config_json(p.config));
  EXPECT_EQ(back_info.epoch, 17u);
  EXPECT_EQ(back_info.metrics.at("valid_loss"), 0.25);
  ASSERT_TRUE(back_info.standardizer);
  EXPECT_EQ(back_info.standardizer->mean(), info.standardizer->mean());
  EXPECT_EQ(back_info.standardizer->fitted_on(), 99u);

  // Byte-stable encoding.
  EXPECT_EQ(encode_checkpoint(p, info), encode_checkpoint(back, back_info));
  std::string bytes = encode_checkpoint(p, info);
  EXPECT_EQ(bytes.substr(0, 4), "ZSTC");
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)),
               DataError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), DataError);
}

TEST(Checkpoint, ClassifierLabelsSurvive) {
  EncoderConfig c = toy_encoder();
  c.n_classes = 3;
  ModelParams p = init_params(c, 1);
  p.class_labels = {4, 7, 9};
  const ModelParams back = decode_checkpoint(encode_checkpoint(p, {}));
  EXPECT_EQ(back.class_labels, p.class_labels);
  EXPECT_EQ(back.values, p.values);
}

TEST(TrainingLog, OneJsonObjectPerEpoch) {
  const std::vector<EpochLog> log = {{1, 0.5, 0.6, 0.01}, {2, 0.4, 0.55, 0.01}};
  std::istringstream in(training_log_jsonl(log));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch").get<std::size_t>(), log[n].epoch);
    EXPECT_EQ(j.at("train_loss").get<double>(), log[n].train_loss);
    EXPECT_EQ(j.at("valid_loss").get<double>(), log[n].valid_loss);
    EXPECT_EQ(j.at("lr").get<double>(), log[n].lr);
    ++n;
  }
  EXPECT_EQ(n, 2u);
}

TEST(EncoderConfigJson, RoundTrip) {
  EncoderConfig c = EncoderConfig::paper(128, 300);
  c.semantic_relu = false;
  c.n_classes = 5;
  const EncoderConfig back = parse_encoder_config(encoder_config_json(c));
  EXPECT_EQ(encoder_config_json(back), encoder_config_json(c));
  EXPECT_EQ(back.conv_stack.size(), 4u);
  EXPECT_FALSE(back.semantic_relu);
}

}  // namespace
}  // namespace zstag
