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

#include "zstag/experiment.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "test_support.h"

namespace zstag {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

constexpr const char* kSmallSynthetic = R"(
seed = 4
[features]
source = "synthetic"
[synthetic]
n_labels = 10
n_unseen = 3
n_instances = 120
feature_dim = 6
semantic_dim = 4
frames = 40
[train]
learning_rate = 0.03
batch_size = 16
max_epochs = 3
patience = 3
[eval]
ks = [1, 3]
)";

ExperimentConfig small_config(const std::string& out) {
  ExperimentConfig c = parse_experiment_config(kSmallSynthetic);
  c.output_dir = out;
  return c;
}

TEST(ExperimentConfig, ParsesAndSetsDerivedSeeds) {
  const ExperimentConfig c = parse_experiment_config(kSmallSynthetic);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.train.seed, 4u);
  EXPECT_EQ(c.split_seed, 4u);
  EXPECT_EQ(c.synthetic.seed, 4u);
  EXPECT_EQ(c.features, FeatureSource::kSynthetic);
  EXPECT_EQ(c.side_info, SideInfoSource::kSynthetic);
  EXPECT_EQ(c.synthetic.n_instances, 120u);
  EXPECT_EQ(c.train.max_epochs, 3u);
  EXPECT_EQ(c.ks, (std::vector<std::size_t>{1, 3}));
  c.validate();
}

TEST(ExperimentConfig, RoundTripsThroughToml) {
  ExperimentConfig c = parse_experiment_config(kSmallSynthetic);
  c.train.margin = 0.35;
  c.profile = "paper";
  const std::string text = experiment_config_toml(c);
  const ExperimentConfig back = parse_experiment_config(text);
  EXPECT_EQ(experiment_config_toml(back), text);
  EXPECT_EQ(back.train.margin, 0.35);
  EXPECT_EQ(back.profile, "paper");
}

TEST(ExperimentConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_experiment_config("bogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("[train]\nlearning_rat = 0.1\n"),
               ConfigError);
  EXPECT_THROW(parse_experiment_config("[train]\nbatch_size = \"x\"\n"),
               ConfigError);
  EXPECT_THROW(parse_experiment_config("[eval]\nks = [0]\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("seed = [\n"), ConfigError);
  ExperimentConfig c = parse_experiment_config(kSmallSynthetic);
  c.profile = "huge";
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ExperimentConfig, RelativePathsResolveAgainstConfigDir) {
  const ExperimentConfig c = parse_experiment_config(
      "[data]\ncatalog = \"cat.jsonl\"\n[output]\ndir = \"out\"\n", "/x/y");
  EXPECT_EQ(c.catalog, "/x/y/cat.jsonl");
  EXPECT_EQ(c.output_dir, "/x/y/out");
}

TEST(PrepareExperiment, MissingCatalogFailsBeforeTraining) {
  testing::TempDir dir;
  ExperimentConfig c;
  c.catalog = dir.file("missing.jsonl");
  c.output_dir = dir.file("out");
  try {
    prepare_experiment(c);
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_EQ(what.rfind("[config]", 0), 0u) << what;
    EXPECT_NE(what.find("data.catalog"), std::string::npos) << what;
  }
  EXPECT_FALSE(fs::exists(dir.file("out")));
}

TEST(PrepareExperiment, BadCatalogNamesTheStage) {
  testing::TempDir dir;
  std::ofstream(dir.file("c.jsonl")) << "{\"id\": \"a\", \"labels\": [\"x\"]}\n"
                                     << "not json\n";
  std::ofstream(dir.file("v.txt")) << "x 1 2\n";
  fs::create_directories(dir.file("f"));
  ExperimentConfig c;
  c.catalog = dir.file("c.jsonl");
  c.side_info_path = dir.file("v.txt");
  c.feature_dir = dir.file("f");
  c.output_dir = dir.file("out");
  try {
    prepare_experiment(c);
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("[catalog]", 0), 0u) << e.what();
  }
}

TEST(PrepareExperiment, SyntheticInputsAreStandardizedOnSeenGroups) {
  testing::TempDir dir;
  const Experiment ex = prepare_experiment(small_config(dir.path().string()));
  EXPECT_EQ(testing::manifest_violation(ex.manifest, ex.catalog), "");
  ASSERT_TRUE(ex.standardizer);
  // Frames of A and B average to zero per bin after standardization.
  std::vector<double> mean(6, 0.0);
  double frames = 0;
  for (const auto* group : {&ex.manifest.group_a, &ex.manifest.group_b}) {
    for (const auto& id : *group) {
      const FeatureMatrix& f = ex.features.at(id);
      for (std::size_t t = 0; t < f.frames; ++t) {
        for (std::size_t d = 0; d < 6; ++d) mean[d] += f.at(t, d);
      }
      frames += static_cast<double>(f.frames);
    }
  }
  for (double m : mean) EXPECT_NEAR(m / frames, 0.0, 1e-4);
  EXPECT_EQ(ex.encoder.input_bins, 6u);
  EXPECT_EQ(ex.encoder.semantic_input_dim, 4u);
}

TEST(Grid, FullGridShapeCheckpointsAndDeterminism) {
  testing::TempDir dir;
  const std::string out1 = dir.file("run1"), out2 = dir.file("run2");
  const Experiment ex = prepare_experiment(small_config(out1));
  const GridResult g = run_grid(ex, out1);
  EXPECT_EQ(g.annotation.size(), 18u);
  EXPECT_EQ(g.retrieval.size(), 6u);
  for (const auto& r : g.annotation) {
    for (const auto& m : r.metrics) {
      if (m.included > 0) {
        EXPECT_GE(m.value, 0.0);
        EXPECT_LE(m.value, 1.0);
      }
    }
  }
  std::size_t checkpoints = 0;
  for (const auto& e : fs::directory_iterator(fs::path(out1) / "checkpoints")) {
    checkpoints += e.path().extension() == ".zstc";
  }
  EXPECT_EQ(checkpoints, 3u);
  for (const char* f : {"annotation.csv", "retrieval.csv", "reports.json",
                        "manifest.json", "config.resolved.toml", "run.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(out1) / f)) << f;
  }

  run_grid(prepare_experiment(small_config(out2)), out2);
  EXPECT_EQ(slurp(fs::path(out1) / "annotation.csv"),
            slurp(fs::path(out2) / "annotation.csv"));
  EXPECT_EQ(slurp(fs::path(out1) / "retrieval.csv"),
            slurp(fs::path(out2) / "retrieval.csv"));

  // A rerun in place reuses every checkpoint.
  const auto before = fs::last_write_time(
      fs::directory_iterator(fs::path(out1) / "checkpoints")->path());
  run_grid(ex, out1);
  EXPECT_EQ(fs::last_write_time(
                fs::directory_iterator(fs::path(out1) / "checkpoints")->path()),
            before);
}

TEST(Grid, CheckpointKeyTracksTrainConfig) {
  testing::TempDir dir;
  Experiment ex = prepare_experiment(small_config(dir.path().string()));
  const SetupView v = make_setup(ex.manifest, ex.catalog, InstanceGroup::kA,
                                 LabelGroup::kX);
  const std::string key = checkpoint_key(ex, ModelKind::kEmbedding, v);
  EXPECT_EQ(key, checkpoint_key(ex, ModelKind::kEmbedding, v));
  EXPECT_NE(key, checkpoint_key(ex, ModelKind::kClassifier, v));
  ex.config.train.learning_rate = 0.5;
  EXPECT_NE(key, checkpoint_key(ex, ModelKind::kEmbedding, v));
}

TEST(Baseline, BothRowsOnSeenRetrieval) {
  testing::TempDir dir;
  const Experiment ex = prepare_experiment(small_config(dir.path().string()));
  const BaselineResult r = run_baseline(ex, dir.path().string());
  for (const EvalReport* rep : {&r.embedding, &r.classifier}) {
    EXPECT_EQ(rep->train_setup, "A-X");
    EXPECT_EQ(rep->test_setup, "B-X");
    const double auc = rep->metric("AUC-l").value;
    EXPECT_GE(auc, 0.0);
    EXPECT_LE(auc, 1.0);
  }
  const std::string csv = slurp(dir.file("baseline.csv"));
  EXPECT_EQ(csv, baseline_csv(r));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "model,train_setup,test_setup,AUC-l,MAP-l");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

struct Demo {
  testing::TempDir dir;
  Experiment ex;
  ModelParams params;
};

std::unique_ptr<Demo> trained_demo() {
  auto d = std::make_unique<Demo>();
  d->ex = prepare_experiment(small_config(d->dir.path().string()));
  const SetupView v = make_setup(d->ex.manifest, d->ex.catalog,
                                 InstanceGroup::kAB, LabelGroup::kX);
  d->params = train_or_load(d->ex, ModelKind::kEmbedding, v,
                            d->dir.path().string());
  return d;
}

TEST(Demos, AnnotateRanksRequestedGroup) {
  const auto d = trained_demo();
  const std::string id = d->ex.manifest.group_c.front();
  const FeatureMatrix& track = d->ex.features.at(id);
  const auto top1 =
      annotate(d->params, d->ex.table, d->ex.manifest, track, LabelGroup::kXY, 1);
  ASSERT_EQ(top1.size(), 1u);
  const auto y_only =
      annotate(d->params, d->ex.table, d->ex.manifest, track, LabelGroup::kY, 99);
  EXPECT_EQ(y_only.size(), d->ex.manifest.unseen.size());
  for (const auto& r : y_only) EXPECT_TRUE(r.unseen);
  for (std::size_t i = 1; i < y_only.size(); ++i) {
    EXPECT_GE(y_only[i - 1].score, y_only[i].score);
  }
  const auto all =
      annotate(d->params, d->ex.table, d->ex.manifest, track, LabelGroup::kXY, 99);
  EXPECT_EQ(all.size(), d->ex.catalog.n_labels());
  EXPECT_EQ(all.front().label, top1.front().label);
  EXPECT_THROW(annotate(d->params, d->ex.table, d->ex.manifest, track,
                        LabelGroup::kXY, 0),
               ConfigError);
}

TEST(Demos, ResolveQuerySuggestsClosestNames) {
  const auto d = trained_demo();
  const std::string name = d->ex.table.names().front();
  const auto v = resolve_query(d->ex.table, name);
  const auto row = d->ex.table.row(0);
  EXPECT_TRUE(std::equal(v.begin(), v.end(), row.begin()));
  try {
    resolve_query(d->ex.table, name + "zz");
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(name), std::string::npos) << e.what();
  }
  WordVectors vocab;
  vocab.dim = 4;
  vocab.vectors["novel"] = {1, 2, 3, 4};
  EXPECT_EQ(resolve_query(d->ex.table, "novel", &vocab),
            (std::vector<double>{1, 2, 3, 4}));
}

TEST(Demos, RetrieveFindsAPositiveForAnUnseenLabel) {
  const auto d = trained_demo();
  const auto ids = [&] {
    std::vector<std::string> out;
    for (const auto& inst : d->ex.catalog.instances()) out.push_back(inst.id);
    return out;
  }();
  const TrackEmbeddings tracks = embed_tracks(d->params, d->ex.features, ids);
  std::size_t hits = 0;
  for (LabelId y : d->ex.manifest.unseen) {
    const auto q = d->ex.table.vector_for(y);
    const auto top = retrieve(d->params, tracks, q, 5);
    ASSERT_EQ(top.size(), 5u);
    for (std::size_t i = 1; i < top.size(); ++i) {
      EXPECT_GE(top[i - 1].score, top[i].score);
    }
    for (const auto& t : top) {
      const auto row = *d->ex.catalog.find_instance(t.id);
      const auto& pos = d->ex.catalog.positives(row);
      if (std::find(pos.begin(), pos.end(), y) != pos.end()) {
        ++hits;
        break;
      }
    }
  }
  EXPECT_GE(hits, 1u);
  EXPECT_EQ(retrieve(d->params, tracks, d->ex.table.row(0), 10000).size(),
            ids.size());
}

TEST(Demos, NeighborsMatchBruteForce) {
  const auto d = trained_demo();
  const SemanticTable& t = d->ex.table;
  const auto q = t.row(2);
  const NeighborLists n = neighbors(d->params, t, q, 4);
  ASSERT_EQ(n.semantic.size(), 4u);
  ASSERT_EQ(n.embedding.size(), 4u);
  EXPECT_EQ(n.semantic.front().name, t.names()[2]);
  std::vector<std::pair<double, std::string>> brute;
  const auto pq = semantic_forward(d->params, q).output;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto p = semantic_forward(d->params, t.row(i)).output;
    brute.push_back({-relevance(pq, p), t.names()[i]});
  }
  std::sort(brute.begin(), brute.end());
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(n.embedding[i].name, brute[i].second);
    EXPECT_DOUBLE_EQ(n.embedding[i].score, -brute[i].first);
  }
}

TEST(EditDistance, Examples) {
  EXPECT_EQ(edit_distance("", ""), 0u);
  EXPECT_EQ(edit_distance("rock", "rock"), 0u);
  EXPECT_EQ(edit_distance("kitten", "sitting"), 3u);
  EXPECT_EQ(edit_distance("", "abc"), 3u);
}

}  // namespace
}  // namespace zstag
