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

// zstag command-line tool. Exit codes: 0 success, 2 config error, 3 data
// error, 4 numerical failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "zstag/experiment.h"

namespace fs = std::filesystem;
using namespace zstag;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string profile;
  bool verbose = false;
  bool quiet = false;
};

ExperimentConfig load_config(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  ExperimentConfig config = load_experiment_config(g.config);
  if (g.seed) config.set_seed(*g.seed);
  if (!g.out.empty()) config.output_dir = g.out;
  if (!g.profile.empty()) config.profile = g.profile;
  return config;
}

std::string cell(double v) {
  if (std::isnan(v)) return "   nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void print_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) return;
  std::printf("%-10s %-14s", "train", "test");
  for (const auto& m : reports.front().metrics) {
    std::printf(" %7s", m.name.c_str());
  }
  std::printf("\n");
  for (const auto& r : reports) {
    std::printf("%-10s %-14s", r.train_setup.c_str(), r.test_setup.c_str());
    for (const auto& m : r.metrics) std::printf(" %7s", cell(m.value).c_str());
    std::printf("\n");
  }
}

// Loads a checkpoint and re-applies its feature standardizer to `features`.
ModelParams load_model(const std::string& path, FeatureStore* features) {
  CheckpointInfo info;
  ModelParams params = load_checkpoint(path, &info);
  if (features != nullptr && info.standardizer) {
    for (auto& [id, f] : *features) info.standardizer->apply(f);
  }
  return params;
}

void require_semantic(const ModelParams& params, const SemanticTable& table) {
  if (params.config.semantic_input_dim == 0) {
    throw ConfigError("checkpoint has no semantic branch (classifier model?)");
  }
  if (params.config.semantic_input_dim != table.dim()) {
    throw DataError("table dimension " + std::to_string(table.dim()) +
                    " does not match the checkpoint (" +
                    std::to_string(params.config.semantic_input_dim) + ")");
  }
}

std::vector<std::string> manifest_ids(const SplitManifest& manifest) {
  std::vector<std::string> ids = manifest.group_a;
  ids.insert(ids.end(), manifest.group_b.begin(), manifest.group_b.end());
  ids.insert(ids.end(), manifest.group_c.begin(), manifest.group_c.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "embedding") return ModelKind::kEmbedding;
  if (text == "classifier") return ModelKind::kClassifier;
  throw ConfigError("--model must be embedding or classifier");
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("zstag"));

  CLI::App app{"Multi-label zero-shot audio tagging toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config (TOML)");
  app.add_option("--seed", g.seed, "Override every seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--profile", g.profile, "Model profile")
      ->check(CLI::IsMember({"paper", "tiny"}));
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");
  app.add_flag("-q,--quiet", g.quiet, "Warnings and errors only");

  // split
  auto* split = app.add_subcommand("split", "Split labels and partition "
                                            "instances into A, B, C");
  std::string sp_catalog;
  double sp_fraction = 0.2;
  split->add_option("--catalog", sp_catalog, "Catalog, when no config is given");
  split->add_option("--unseen-fraction", sp_fraction)->capture_default_str();
  split->fallthrough();

  // sideinfo
  auto* sideinfo = app.add_subcommand("sideinfo", "Build label side information");
  sideinfo->require_subcommand(1);
  std::string si_catalog, si_input, si_out;
  bool si_standardize = false;
  auto* build_attr = sideinfo->add_subcommand(
      "build-attributes", "Attribute vectors from instance likelihoods");
  build_attr->add_option("--catalog", si_catalog)->required();
  build_attr->add_option("--likelihoods", si_input, "CSV id,attribute,likelihood")
      ->required();
  build_attr->add_option("--table", si_out, "Output stem")->required();
  auto* build_words =
      sideinfo->add_subcommand("build-words", "Word vectors for label names");
  build_words->add_option("--catalog", si_catalog)->required();
  build_words->add_option("--vectors", si_input, "Text word-vector file")
      ->required();
  build_words->add_option("--table", si_out, "Output stem")->required();
  build_words->add_flag("--standardize", si_standardize);

  // features
  auto* features = app.add_subcommand("features", "Extract mel features");
  std::string ft_catalog, ft_audio_root, ft_dir, ft_manifest, ft_output;
  features->add_option("--catalog", ft_catalog);
  features->add_option("--audio-root", ft_audio_root);
  features->fallthrough();
  auto* fit_std = features->add_subcommand(
      "fit-standardizer", "Per-bin standardizer over A and B instances");
  fit_std->add_option("--dir", ft_dir, "Feature directory")->required();
  fit_std->add_option("--manifest,--train-manifest", ft_manifest)->required();
  fit_std->add_option("--output", ft_output, "Standardizer JSON")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one model");
  std::string train_setup = "(A+B)-X", train_model = "embedding";
  train->add_option("--setup", train_setup, "A-X, B-X or (A+B)-X");
  train->add_option("--model", train_model, "embedding or classifier");
  train->fallthrough();

  auto* baseline = app.add_subcommand(
      "train-baseline", "Embedding vs classifier, trained on A-X, tested on B-X");
  baseline->fallthrough();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a setup");
  std::string ev_checkpoint, ev_setup, ev_task;
  eval->add_option("--checkpoint", ev_checkpoint)->required();
  eval->add_option("--setup", ev_setup)->required();
  eval->add_option("--task", ev_task, "annotation or retrieval")
      ->check(CLI::IsMember({"annotation", "retrieval"}));
  eval->fallthrough();

  auto* grid = app.add_subcommand("grid", "Full train x test grid");
  grid->fallthrough();

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  SyntheticSpec spec;
  synth->add_option("--n-labels", spec.n_labels)->capture_default_str();
  synth->add_option("--n-unseen", spec.n_unseen)->capture_default_str();
  synth->add_option("--n-instances", spec.n_instances)->capture_default_str();
  synth->add_option("--feature-dim", spec.feature_dim)->capture_default_str();
  synth->add_option("--semantic-dim", spec.semantic_dim)->capture_default_str();
  synth->add_option("--frames", spec.frames)->capture_default_str();
  synth->add_option("--cardinality", spec.cardinality)->capture_default_str();
  synth->add_option("--noise", spec.noise)->capture_default_str();
  synth->add_option("--skew", spec.popularity_skew)->capture_default_str();
  synth->add_option("--parent-rate", spec.parent_rate)->capture_default_str();
  synth->fallthrough();

  // demos
  std::string dm_checkpoint, dm_table, dm_manifest, dm_feature_dir, dm_track,
      dm_query, dm_vectors, dm_labels = "X+Y", dm_catalog;
  std::size_t dm_k = 10;
  auto* annotate_cmd = app.add_subcommand("annotate", "Top-k tags for a track");
  annotate_cmd->add_option("--checkpoint", dm_checkpoint)->required();
  annotate_cmd->add_option("--table", dm_table)->required();
  annotate_cmd->add_option("--manifest", dm_manifest)->required();
  annotate_cmd->add_option("--feature-dir", dm_feature_dir)->required();
  annotate_cmd->add_option("--track", dm_track)->required();
  annotate_cmd->add_option("--labels", dm_labels, "X, Y or X+Y")
      ->capture_default_str();
  annotate_cmd->add_option("-k", dm_k)->capture_default_str();

  auto* retrieve_cmd =
      app.add_subcommand("retrieve", "Top-k tracks for a label or word");
  retrieve_cmd->add_option("--checkpoint", dm_checkpoint)->required();
  retrieve_cmd->add_option("--table", dm_table)->required();
  retrieve_cmd->add_option("--manifest", dm_manifest)->required();
  retrieve_cmd->add_option("--feature-dir", dm_feature_dir)->required();
  retrieve_cmd->add_option("--query", dm_query)->required();
  retrieve_cmd->add_option("--vectors", dm_vectors, "Word-vector file");
  retrieve_cmd->add_option("--catalog", dm_catalog, "Show track labels");
  retrieve_cmd->add_option("-k", dm_k)->capture_default_str();

  auto* neighbors_cmd = app.add_subcommand(
      "neighbors", "Nearest labels in side-info space vs embedding space");
  neighbors_cmd->add_option("--checkpoint", dm_checkpoint)->required();
  neighbors_cmd->add_option("--table", dm_table)->required();
  neighbors_cmd->add_option("--query", dm_query)->required();
  neighbors_cmd->add_option("--vectors", dm_vectors, "Word-vector file");
  neighbors_cmd->add_option("-k", dm_k)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kConfig);
  }
  spdlog::set_level(g.verbose ? spdlog::level::debug
                    : g.quiet ? spdlog::level::warn
                              : spdlog::level::info);

  try {
    if (split->parsed() && g.config.empty()) {
      if (sp_catalog.empty()) throw ConfigError("split needs --config or --catalog");
      const Catalog catalog =
          load_catalog(sp_catalog, catalog_format_from_path(sp_catalog));
      const std::uint64_t seed = g.seed.value_or(0);
      const SplitManifest manifest = partition_instances(
          catalog, split_labels(catalog, sp_fraction, seed), seed);
      validate_manifest(manifest, catalog);
      fs::path path = g.out.empty() ? fs::path("manifest.json") : fs::path(g.out);
      if (path.extension() != ".json") path /= "manifest.json";
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      save_manifest(manifest, path.string());
      std::printf("|X| = %zu, |Y| = %zu; A = %zu, B = %zu, C = %zu\n",
                  manifest.seen.size(), manifest.unseen.size(),
                  manifest.group_a.size(), manifest.group_b.size(),
                  manifest.group_c.size());
      std::printf("wrote %s\n", path.string().c_str());
    } else if (split->parsed()) {
      const ExperimentConfig config = load_config(g);
      const Experiment ex = prepare_experiment(config, false);
      fs::create_directories(config.output_dir);
      const std::string path =
          (fs::path(config.output_dir) / "manifest.json").string();
      save_manifest(ex.manifest, path);
      std::printf("|X| = %zu, |Y| = %zu; A = %zu, B = %zu, C = %zu\n",
                  ex.manifest.seen.size(), ex.manifest.unseen.size(),
                  ex.manifest.group_a.size(), ex.manifest.group_b.size(),
                  ex.manifest.group_c.size());
      std::printf("wrote %s\n", path.c_str());
    } else if (build_attr->parsed()) {
      const Catalog catalog =
          load_catalog(si_catalog, catalog_format_from_path(si_catalog));
      const SemanticTable table =
          build_attribute_table(load_likelihoods(si_input), catalog);
      save_table(table, si_out);
      std::printf("%zu labels x %zu attribute dims -> %s.json\n", table.size(),
                  table.dim(), si_out.c_str());
    } else if (build_words->parsed()) {
      const Catalog catalog =
          load_catalog(si_catalog, catalog_format_from_path(si_catalog));
      std::set<std::string> wanted;
      for (const auto& label : catalog.labels()) wanted.insert(label.name);
      const WordTableResult result = build_word_table(
          catalog, load_word_vectors(si_input, &wanted), si_standardize);
      save_table(result.table, si_out);
      std::printf("%zu labels x %zu dims -> %s.json\n", result.table.size(),
                  result.table.dim(), si_out.c_str());
      for (const auto& name : result.dropped) {
        std::printf("no vector: %s\n", name.c_str());
      }
    } else if (fit_std->parsed()) {
      const SplitManifest manifest = load_manifest(ft_manifest);
      std::vector<std::string> ids = manifest.group_a;
      ids.insert(ids.end(), manifest.group_b.begin(), manifest.group_b.end());
      const FeatureStore store = load_feature_dir(ft_dir, ids);
      const Standardizer st = fit_train_standardizer(store, manifest);
      write_file(ft_output, st.to_json());
      std::printf("fitted on %zu frames -> %s\n", st.fitted_on(),
                  ft_output.c_str());
    } else if (features->parsed()) {
      if (ft_catalog.empty() || ft_audio_root.empty() || g.out.empty()) {
        throw ConfigError("features needs --catalog, --audio-root and --out");
      }
      const Catalog catalog =
          load_catalog(ft_catalog, catalog_format_from_path(ft_catalog));
      const MelConfig mel;
      const FeatureStore store =
          extract_catalog_features(catalog, ft_audio_root, "", mel);
      fs::create_directories(g.out);
      for (const auto& [id, f] : store) {
        save_features((fs::path(g.out) / feature_file_name(id)).string(), f,
                      mel_trailer_json(mel));
      }
      std::printf("extracted %zu tracks -> %s\n", store.size(), g.out.c_str());
    } else if (train->parsed()) {
      const ExperimentConfig config = load_config(g);
      const Experiment ex = prepare_experiment(config);
      const auto [ig, lg] = parse_setup(train_setup);
      const SetupView view = make_setup(ex.manifest, ex.catalog, ig, lg);
      require_role(view, SetupRole::kTrain);
      const ModelKind kind = parse_model_kind(train_model);
      train_or_load(ex, kind, view, config.output_dir);
      std::printf("%s\n",
                  checkpoint_path(ex, kind, view, config.output_dir).c_str());
    } else if (baseline->parsed()) {
      const ExperimentConfig config = load_config(g);
      const Experiment ex = prepare_experiment(config);
      const BaselineResult result = run_baseline(ex, config.output_dir);
      std::printf("%s", baseline_csv(result).c_str());
    } else if (eval->parsed()) {
      const ExperimentConfig config = load_config(g);
      Experiment ex = prepare_experiment(config);
      const ModelParams params = load_checkpoint(ev_checkpoint);
      const auto [ig, lg] = parse_setup(ev_setup);
      const SetupView view = make_setup(ex.manifest, ex.catalog, ig, lg);
      std::string task = ev_task;
      if (task.empty()) {
        task = view.allows(SetupRole::kAnnotation) ? "annotation" : "retrieval";
      }
      const auto tracks = embed_tracks(params, ex.features, view.instance_ids);
      const bool classifier = params.config.semantic_input_dim == 0;
      if (!classifier) require_semantic(params, ex.table);
      const ScoreMatrix scores =
          classifier ? classifier_score_matrix(params, tracks, view)
                     : embedding_scores(params, ex.table, tracks, view);
      EvalReport report;
      if (task == "annotation") {
        require_role(view, SetupRole::kAnnotation);
        report = annotation_report(view, scores, config.ks);
      } else {
        require_role(view, SetupRole::kRetrieval);
        report = retrieval_report(view, scores);
      }
      report.train_setup = "-";
      print_reports({report});
    } else if (grid->parsed()) {
      const ExperimentConfig config = load_config(g);
      const Experiment ex = prepare_experiment(config);
      const GridResult result = run_grid(ex, config.output_dir);
      std::printf("Annotation\n");
      print_reports(result.annotation);
      std::printf("\nRetrieval\n");
      print_reports(result.retrieval);
      std::printf("\nwrote %s\n", config.output_dir.c_str());
    } else if (synth->parsed()) {
      if (g.out.empty()) throw ConfigError("synth needs --out");
      if (g.seed) spec.seed = *g.seed;
      const SyntheticData data = generate_synthetic(spec);
      write_synthetic(data, g.out);
      ExperimentConfig config;
      config.set_seed(spec.seed);
      config.catalog = "catalog.jsonl";
      config.side_info = SideInfoSource::kTable;
      config.side_info_path = "side_info";
      config.split_labels = "planted_split.json";
      config.features = FeatureSource::kPrecomputed;
      config.feature_dir = "features";
      config.output_dir = "run";
      if (!g.profile.empty()) config.profile = g.profile;
      write_file((fs::path(g.out) / "config.toml").string(),
                 experiment_config_toml(config));
      const SplitManifest manifest =
          partition_instances(data.catalog, data.planted, spec.seed);
      std::printf("%zu instances, %zu labels (|Y| = %zu); A = %zu, B = %zu, "
                  "C = %zu -> %s\n",
                  data.catalog.n_instances(), data.catalog.n_labels(),
                  data.planted.unseen.size(), manifest.group_a.size(),
                  manifest.group_b.size(), manifest.group_c.size(),
                  g.out.c_str());
    } else if (annotate_cmd->parsed()) {
      const SemanticTable table = load_table(dm_table);
      const SplitManifest manifest = load_manifest(dm_manifest);
      FeatureStore store = load_feature_dir(dm_feature_dir, {dm_track});
      const ModelParams params = load_model(dm_checkpoint, &store);
      require_semantic(params, table);
      const auto ranked = annotate(params, table, manifest, store.at(dm_track),
                                   parse_label_group(dm_labels), dm_k);
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        std::printf("%3zu  %-24s %8.4f%s\n", i + 1, ranked[i].name.c_str(),
                    ranked[i].score, ranked[i].unseen ? "  (unseen)" : "");
      }
    } else if (retrieve_cmd->parsed()) {
      const SemanticTable table = load_table(dm_table);
      const SplitManifest manifest = load_manifest(dm_manifest);
      std::optional<WordVectors> vectors;
      if (!dm_vectors.empty()) vectors = load_word_vectors(dm_vectors);
      const auto query =
          resolve_query(table, dm_query, vectors ? &*vectors : nullptr);
      const auto ids = manifest_ids(manifest);
      FeatureStore store = load_feature_dir(dm_feature_dir, ids);
      const ModelParams params = load_model(dm_checkpoint, &store);
      require_semantic(params, table);
      const auto tracks = embed_tracks(params, store, ids);
      std::optional<Catalog> catalog;
      if (!dm_catalog.empty()) {
        catalog = load_catalog(dm_catalog, catalog_format_from_path(dm_catalog));
      }
      const auto ranked = retrieve(params, tracks, query, dm_k);
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        std::printf("%3zu  %-24s %8.4f", i + 1, ranked[i].id.c_str(),
                    ranked[i].score);
        if (catalog) {
          if (const auto row = catalog->find_instance(ranked[i].id)) {
            std::string labels;
            for (LabelId id : catalog->positives(*row)) {
              labels += (labels.empty() ? "" : ", ") + catalog->label_name(id);
            }
            std::printf("  [%s]", labels.c_str());
          }
        }
        std::printf("\n");
      }
    } else if (neighbors_cmd->parsed()) {
      const SemanticTable table = load_table(dm_table);
      std::optional<WordVectors> vectors;
      if (!dm_vectors.empty()) vectors = load_word_vectors(dm_vectors);
      const auto query =
          resolve_query(table, dm_query, vectors ? &*vectors : nullptr);
      const ModelParams params = load_model(dm_checkpoint, nullptr);
      require_semantic(params, table);
      const NeighborLists lists = neighbors(params, table, query, dm_k);
      std::printf("%3s  %-28s %-28s\n", "", "side-info space",
                  "embedding space");
      for (std::size_t i = 0; i < lists.semantic.size(); ++i) {
        char left[64], right[64];
        std::snprintf(left, sizeof left, "%s (%.3f)",
                      lists.semantic[i].name.c_str(), lists.semantic[i].score);
        std::snprintf(right, sizeof right, "%s (%.3f)",
                      lists.embedding[i].name.c_str(),
                      lists.embedding[i].score);
        std::printf("%3zu  %-28s %-28s\n", i + 1, left, right);
      }
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(ErrorKind::kData);
  }
  return 0;
}
