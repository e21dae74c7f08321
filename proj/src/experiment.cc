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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <initializer_list>
#include <limits>
#include <map>
#include <sstream>
#include <string_view>
#include <type_traits>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <toml.hpp>

namespace zstag {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Runs `fn`, re-throwing library errors with the stage name prepended.
template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    const std::string what = "[" + stage + "] " + e.what();
    switch (e.kind()) {
      case ErrorKind::kConfig:
        throw ConfigError(what);
      case ErrorKind::kData:
        throw DataError(what);
      case ErrorKind::kNumerical:
        throw NumericalError(what);
    }
    throw;
  }
}

// ---- TOML helpers ----------------------------------------------------------

void check_keys(const toml::table& table,
                std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  for (const auto& [key, node] : table) {
    (void)node;
    if (std::find(allowed.begin(), allowed.end(), key.str()) == allowed.end()) {
      throw ConfigError("unknown config key " + where +
                        (where.empty() ? "" : ".") + std::string(key.str()));
    }
  }
}

const toml::table* section(const toml::table& root, std::string_view name) {
  const toml::node* node = root.get(name);
  if (node == nullptr) return nullptr;
  if (!node->is_table()) {
    throw ConfigError("config key " + std::string(name) + " must be a table");
  }
  return node->as_table();
}

std::string key_path(const std::string& where, std::string_view key) {
  return where.empty() ? std::string(key) : where + "." + std::string(key);
}

template <typename T>
void read(const toml::table* table, std::string_view key,
          const std::string& where, T& out) {
  if (table == nullptr) return;
  const toml::node* node = table->get(key);
  if (node == nullptr) return;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->value_exact<bool>()) {
      out = *v;
      return;
    }
    throw ConfigError(key_path(where, key) + " must be a boolean");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value_exact<std::string>()) {
      out = *v;
      return;
    }
    throw ConfigError(key_path(where, key) + " must be a string");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (node->is_integer() || node->is_floating_point()) {
      out = *node->value<double>();
      return;
    }
    throw ConfigError(key_path(where, key) + " must be a number");
  } else {
    static_assert(std::is_unsigned_v<T>);
    if (auto v = node->value_exact<std::int64_t>(); v && *v >= 0) {
      out = static_cast<T>(*v);
      return;
    }
    throw ConfigError(key_path(where, key) +
                      " must be a non-negative integer");
  }
}

std::string resolve_path(const std::string& base, const std::string& path) {
  if (path.empty()) return path;
  const fs::path p(path);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (fs::path(base) / p).lexically_normal().string();
}

SideInfoSource parse_side_info(const std::string& text) {
  if (text == "attribute") return SideInfoSource::kAttribute;
  if (text == "word") return SideInfoSource::kWord;
  if (text == "table") return SideInfoSource::kTable;
  if (text == "synthetic") return SideInfoSource::kSynthetic;
  throw ConfigError("side_info.kind must be attribute, word, table or "
                    "synthetic, got '" + text + "'");
}

FeatureSource parse_feature_source(const std::string& text) {
  if (text == "audio") return FeatureSource::kAudio;
  if (text == "precomputed") return FeatureSource::kPrecomputed;
  if (text == "synthetic") return FeatureSource::kSynthetic;
  throw ConfigError("features.source must be audio, precomputed or "
                    "synthetic, got '" + text + "'");
}

std::int64_t as_int(std::uint64_t v) {
  if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
    throw ConfigError("value " + std::to_string(v) + " does not fit in TOML");
  }
  return static_cast<std::int64_t>(v);
}

// ---- misc ------------------------------------------------------------------

std::string setup_file_stem(ModelKind kind, const std::string& setup) {
  std::string stem = kind == ModelKind::kEmbedding ? "emb_" : "cls_";
  for (char c : setup) {
    if (c == '(' || c == ')') continue;
    stem.push_back(c == '+' ? 'p' : c);
  }
  return stem;
}

void require_features(const FeatureStore& features,
                      const std::vector<std::string>& ids) {
  for (const auto& id : ids) {
    if (features.count(id) == 0) {
      throw DataError("no features for instance " + id);
    }
  }
}

std::vector<std::string> all_instance_ids(const Catalog& catalog) {
  std::vector<std::string> ids;
  ids.reserve(catalog.n_instances());
  for (const auto& inst : catalog.instances()) ids.push_back(inst.id);
  return ids;
}

std::string fixed6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

// ---- config ----------------------------------------------------------------

std::string side_info_source_name(SideInfoSource source) {
  switch (source) {
    case SideInfoSource::kAttribute:
      return "attribute";
    case SideInfoSource::kWord:
      return "word";
    case SideInfoSource::kTable:
      return "table";
    case SideInfoSource::kSynthetic:
      return "synthetic";
  }
  return "word";
}

std::string feature_source_name(FeatureSource source) {
  switch (source) {
    case FeatureSource::kAudio:
      return "audio";
    case FeatureSource::kPrecomputed:
      return "precomputed";
    case FeatureSource::kSynthetic:
      return "synthetic";
  }
  return "precomputed";
}

void ExperimentConfig::set_seed(std::uint64_t value) {
  seed = value;
  split_seed = value;
  train.seed = value;
  synthetic.seed = value;
}

void ExperimentConfig::validate() const {
  if (profile != "tiny" && profile != "paper") {
    throw ConfigError("model.profile must be tiny or paper, got '" + profile +
                      "'");
  }
  train.validate();
  if (ks.empty()) throw ConfigError("eval.ks must not be empty");
  for (std::size_t k : ks) {
    if (k == 0) throw ConfigError("eval.ks entries must be >= 1");
  }
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");

  const bool synthetic_features = features == FeatureSource::kSynthetic;
  const bool synthetic_side = side_info == SideInfoSource::kSynthetic;
  if (synthetic_features != synthetic_side) {
    throw ConfigError(
        "synthetic side information and synthetic features go together");
  }
  if (synthetic_features) {
    synthetic.validate();
    if (!catalog.empty() || !allowlist.empty() || !split_labels.empty()) {
      throw ConfigError(
          "a synthetic experiment takes no catalog, allowlist or split labels");
    }
    return;
  }

  if (!(unseen_fraction > 0.0 && unseen_fraction < 1.0)) {
    throw ConfigError("split.unseen_fraction must be in (0, 1)");
  }
  const auto need_file = [](const std::string& path, const char* key) {
    if (path.empty()) throw ConfigError(std::string(key) + " is required");
    if (!fs::is_regular_file(path)) {
      throw ConfigError(std::string(key) + " not found: " + path);
    }
  };
  const auto need_dir = [](const std::string& path, const char* key) {
    if (path.empty()) throw ConfigError(std::string(key) + " is required");
    if (!fs::is_directory(path)) {
      throw ConfigError(std::string(key) + " is not a directory: " + path);
    }
  };
  need_file(catalog, "data.catalog");
  if (!allowlist.empty()) need_file(allowlist, "data.allowlist");
  if (!split_labels.empty()) need_file(split_labels, "split.labels");
  if (side_info == SideInfoSource::kTable) {
    std::string json_path = side_info_path;
    if (json_path.size() < 5 ||
        json_path.compare(json_path.size() - 5, 5, ".json") != 0) {
      json_path += ".json";
    }
    need_file(json_path, "side_info.path");
  } else {
    need_file(side_info_path, "side_info.path");
  }
  if (features == FeatureSource::kAudio) {
    need_dir(audio_root, "features.audio_root");
  } else {
    need_dir(feature_dir, "features.dir");
  }
}

ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config syntax error at line " << e.source().begin.line << ": "
        << e.description();
    throw ConfigError(msg.str());
  }
  check_keys(root,
             {"seed", "data", "side_info", "split", "features", "synthetic",
              "model", "train", "eval", "output"},
             "");

  ExperimentConfig c;
  read(&root, "seed", "", c.seed);
  c.set_seed(c.seed);

  if (const auto* t = section(root, "data")) {
    check_keys(*t, {"catalog", "allowlist"}, "data");
    read(t, "catalog", "data", c.catalog);
    read(t, "allowlist", "data", c.allowlist);
  }
  bool side_info_given = false;
  if (const auto* t = section(root, "side_info")) {
    check_keys(*t, {"kind", "path", "standardize"}, "side_info");
    std::string kind = side_info_source_name(c.side_info);
    side_info_given = t->contains("kind");
    read(t, "kind", "side_info", kind);
    c.side_info = parse_side_info(kind);
    read(t, "path", "side_info", c.side_info_path);
    read(t, "standardize", "side_info", c.standardize_side_info);
  }
  if (const auto* t = section(root, "split")) {
    check_keys(*t, {"unseen_fraction", "seed", "labels"}, "split");
    read(t, "unseen_fraction", "split", c.unseen_fraction);
    read(t, "seed", "split", c.split_seed);
    read(t, "labels", "split", c.split_labels);
  }
  if (const auto* t = section(root, "features")) {
    check_keys(*t, {"source", "audio_root", "dir", "standardize"}, "features");
    std::string source = feature_source_name(c.features);
    read(t, "source", "features", source);
    c.features = parse_feature_source(source);
    read(t, "audio_root", "features", c.audio_root);
    read(t, "dir", "features", c.feature_dir);
    read(t, "standardize", "features", c.standardize_features);
  }
  if (c.features == FeatureSource::kSynthetic && !side_info_given) {
    c.side_info = SideInfoSource::kSynthetic;
  }
  if (const auto* t = section(root, "synthetic")) {
    check_keys(*t,
               {"n_labels", "n_unseen", "n_instances", "feature_dim",
                "semantic_dim", "frames", "cardinality", "noise",
                "popularity_skew", "parent_rate", "seed"},
               "synthetic");
    auto& s = c.synthetic;
    read(t, "n_labels", "synthetic", s.n_labels);
    read(t, "n_unseen", "synthetic", s.n_unseen);
    read(t, "n_instances", "synthetic", s.n_instances);
    read(t, "feature_dim", "synthetic", s.feature_dim);
    read(t, "semantic_dim", "synthetic", s.semantic_dim);
    read(t, "frames", "synthetic", s.frames);
    read(t, "cardinality", "synthetic", s.cardinality);
    read(t, "noise", "synthetic", s.noise);
    read(t, "popularity_skew", "synthetic", s.popularity_skew);
    read(t, "parent_rate", "synthetic", s.parent_rate);
    read(t, "seed", "synthetic", s.seed);
  }
  if (const auto* t = section(root, "model")) {
    check_keys(*t, {"profile"}, "model");
    read(t, "profile", "model", c.profile);
  }
  if (const auto* t = section(root, "train")) {
    check_keys(*t,
               {"margin", "learning_rate", "momentum", "lr_decay",
                "batch_size", "max_epochs", "patience", "validation_fraction",
                "seed"},
               "train");
    auto& tc = c.train;
    read(t, "margin", "train", tc.margin);
    read(t, "learning_rate", "train", tc.learning_rate);
    read(t, "momentum", "train", tc.momentum);
    read(t, "lr_decay", "train", tc.lr_decay);
    read(t, "batch_size", "train", tc.batch_size);
    read(t, "max_epochs", "train", tc.max_epochs);
    read(t, "patience", "train", tc.patience);
    read(t, "validation_fraction", "train", tc.validation_fraction);
    read(t, "seed", "train", tc.seed);
  }
  if (const auto* t = section(root, "eval")) {
    check_keys(*t, {"ks"}, "eval");
    if (const toml::node* node = t->get("ks")) {
      const toml::array* arr = node->as_array();
      if (arr == nullptr) throw ConfigError("eval.ks must be an array");
      c.ks.clear();
      for (const auto& item : *arr) {
        auto v = item.value_exact<std::int64_t>();
        if (!v || *v < 1) {
          throw ConfigError("eval.ks entries must be positive integers");
        }
        c.ks.push_back(static_cast<std::size_t>(*v));
      }
    }
  }
  if (const auto* t = section(root, "output")) {
    check_keys(*t, {"dir"}, "output");
    read(t, "dir", "output", c.output_dir);
  }

  c.catalog = resolve_path(base_dir, c.catalog);
  c.allowlist = resolve_path(base_dir, c.allowlist);
  c.split_labels = resolve_path(base_dir, c.split_labels);
  c.side_info_path = resolve_path(base_dir, c.side_info_path);
  c.audio_root = resolve_path(base_dir, c.audio_root);
  c.feature_dir = resolve_path(base_dir, c.feature_dir);
  c.output_dir = resolve_path(base_dir, c.output_dir);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  if (!fs::is_regular_file(path)) {
    throw ConfigError("config file not found: " + path);
  }
  const fs::path parent = fs::path(path).parent_path();
  return parse_experiment_config(read_file(path),
                                 parent.empty() ? "." : parent.string());
}

std::string experiment_config_toml(const ExperimentConfig& c) {
  toml::table root;
  root.insert("seed", as_int(c.seed));

  toml::table data;
  if (!c.catalog.empty()) data.insert("catalog", c.catalog);
  if (!c.allowlist.empty()) data.insert("allowlist", c.allowlist);
  root.insert("data", std::move(data));

  toml::table side;
  side.insert("kind", side_info_source_name(c.side_info));
  if (!c.side_info_path.empty()) side.insert("path", c.side_info_path);
  side.insert("standardize", c.standardize_side_info);
  root.insert("side_info", std::move(side));

  toml::table split{{"unseen_fraction", c.unseen_fraction},
                    {"seed", as_int(c.split_seed)}};
  if (!c.split_labels.empty()) split.insert("labels", c.split_labels);
  root.insert("split", std::move(split));

  toml::table feat;
  feat.insert("source", feature_source_name(c.features));
  if (!c.audio_root.empty()) feat.insert("audio_root", c.audio_root);
  if (!c.feature_dir.empty()) feat.insert("dir", c.feature_dir);
  feat.insert("standardize", c.standardize_features);
  root.insert("features", std::move(feat));

  if (c.features == FeatureSource::kSynthetic) {
    const auto& s = c.synthetic;
    root.insert("synthetic",
                toml::table{{"n_labels", as_int(s.n_labels)},
                            {"n_unseen", as_int(s.n_unseen)},
                            {"n_instances", as_int(s.n_instances)},
                            {"feature_dim", as_int(s.feature_dim)},
                            {"semantic_dim", as_int(s.semantic_dim)},
                            {"frames", as_int(s.frames)},
                            {"cardinality", s.cardinality},
                            {"noise", s.noise},
                            {"popularity_skew", s.popularity_skew},
                            {"parent_rate", s.parent_rate},
                            {"seed", as_int(s.seed)}});
  }

  root.insert("model", toml::table{{"profile", c.profile}});
  const auto& t = c.train;
  root.insert("train",
              toml::table{{"margin", t.margin},
                          {"learning_rate", t.learning_rate},
                          {"momentum", t.momentum},
                          {"lr_decay", t.lr_decay},
                          {"batch_size", as_int(t.batch_size)},
                          {"max_epochs", as_int(t.max_epochs)},
                          {"patience", as_int(t.patience)},
                          {"validation_fraction", t.validation_fraction},
                          {"seed", as_int(t.seed)}});
  toml::array ks;
  for (std::size_t k : c.ks) ks.push_back(as_int(k));
  root.insert("eval", toml::table{{"ks", std::move(ks)}});
  root.insert("output", toml::table{{"dir", c.output_dir}});

  std::ostringstream out;
  out << root << "\n";
  return out.str();
}

// ---- preparation -----------------------------------------------------------

FeatureStore extract_catalog_features(const Catalog& catalog,
                                      const std::string& audio_root,
                                      const std::string& cache_dir,
                                      const MelConfig& mel) {
  const std::string trailer = mel_trailer_json(mel);
  FeatureStore store;
  std::size_t reused = 0;
  for (const auto& inst : catalog.instances()) {
    if (!inst.audio) {
      throw DataError("instance " + inst.id + " has no audio path");
    }
    const std::string path = (fs::path(audio_root) / *inst.audio).string();
    const std::string bytes = read_file(path);
    std::string cached;
    if (!cache_dir.empty()) {
      Fingerprint key;
      key.add(trailer).add(bytes);
      cached = (fs::path(cache_dir) / (key.hex() + ".zstf")).string();
      if (fs::is_regular_file(cached)) {
        store.emplace(inst.id, load_features(cached));
        ++reused;
        continue;
      }
    }
    const WavAudio wav = parse_wav(bytes);
    if (wav.channels != 1) {
      throw DataError(path + ": expected mono audio, got " +
                      std::to_string(wav.channels) + " channels");
    }
    FeatureMatrix features = extract_mel(wav.samples, wav.sample_rate, mel);
    if (!cached.empty()) {
      fs::create_directories(cache_dir);
      save_features(cached, features, trailer);
    }
    store.emplace(inst.id, std::move(features));
  }
  if (reused > 0) spdlog::info("reused {} cached feature files", reused);
  return store;
}

Standardizer fit_train_standardizer(const FeatureStore& features,
                                    const SplitManifest& manifest) {
  StandardizerFit fit;
  for (const auto* group : {&manifest.group_a, &manifest.group_b}) {
    for (const auto& id : *group) {
      const auto it = features.find(id);
      if (it == features.end()) throw DataError("no features for instance " + id);
      fit.add(it->second);
    }
  }
  if (fit.frames() == 0) {
    throw DataError("no A or B frames to fit the standardizer on");
  }
  return fit.finish();
}

Experiment prepare_experiment(const ExperimentConfig& config,
                              bool with_features) {
  in_stage("config", [&] { config.validate(); });
  Experiment ex;
  ex.config = config;
  LabelSplit labels;

  if (config.features == FeatureSource::kSynthetic) {
    SyntheticData data =
        in_stage("synthetic", [&] { return generate_synthetic(config.synthetic); });
    ex.catalog = std::move(data.catalog);
    ex.table = std::move(data.table);
    ex.features = std::move(data.features);
    labels = std::move(data.planted);
  } else {
    ex.catalog = in_stage("catalog", [&] {
      Catalog catalog =
          load_catalog(config.catalog, catalog_format_from_path(config.catalog));
      if (!config.allowlist.empty()) {
        auto filtered =
            filter_labels(catalog, load_allowlist(config.allowlist));
        spdlog::info("allowlist dropped {} labels and {} instances",
                     filtered.dropped_labels, filtered.dropped_instances);
        catalog = std::move(filtered.catalog);
      }
      return catalog;
    });
    ex.table = in_stage("side_info", [&] {
      switch (config.side_info) {
        case SideInfoSource::kAttribute:
          return build_attribute_table(load_likelihoods(config.side_info_path),
                                       ex.catalog);
        case SideInfoSource::kWord: {
          std::set<std::string> wanted;
          for (const auto& label : ex.catalog.labels()) wanted.insert(label.name);
          const WordVectors raw =
              load_word_vectors(config.side_info_path, &wanted);
          WordTableResult result = build_word_table(
              ex.catalog, raw, config.standardize_side_info);
          if (!result.dropped.empty()) {
            spdlog::warn("{} labels have no word vector and are dropped",
                         result.dropped.size());
            const auto& ids = result.table.label_ids();
            ex.catalog = ex.catalog.restricted_to(
                std::set<LabelId>(ids.begin(), ids.end()));
            return result.table.aligned_to(ex.catalog);
          }
          return std::move(result.table);
        }
        case SideInfoSource::kTable:
          return load_table(config.side_info_path).aligned_to(ex.catalog);
        case SideInfoSource::kSynthetic:
          break;
      }
      throw ConfigError("synthetic side information needs synthetic features");
    });
    labels = in_stage("split", [&] {
      if (!config.split_labels.empty()) {
        return load_planted_split(config.split_labels);
      }
      return split_labels(ex.catalog, config.unseen_fraction, config.split_seed);
    });
    if (with_features) {
      ex.features = in_stage("features", [&] {
        if (config.features == FeatureSource::kAudio) {
          const std::string cache =
              (fs::path(config.output_dir) / "cache" / "features").string();
          return extract_catalog_features(ex.catalog, config.audio_root, cache);
        }
        return load_feature_dir(config.feature_dir,
                                all_instance_ids(ex.catalog));
      });
    }
  }

  ex.manifest = in_stage("split", [&] {
    SplitManifest m = partition_instances(ex.catalog, labels, config.split_seed);
    validate_manifest(m, ex.catalog);
    return m;
  });

  if (!with_features) {
    ex.features.clear();
    return ex;
  }
  in_stage("features", [&] {
    require_features(ex.features, all_instance_ids(ex.catalog));
    const std::size_t dims = ex.features.begin()->second.dims;
    for (const auto& [id, f] : ex.features) {
      if (f.dims != dims) {
        throw DataError("instance " + id + " has " + std::to_string(f.dims) +
                        " feature bins, expected " + std::to_string(dims));
      }
    }
    if (config.standardize_features) {
      ex.standardizer = fit_train_standardizer(ex.features, ex.manifest);
      for (auto& [id, f] : ex.features) ex.standardizer->apply(f);
    }
  });

  ex.encoder = in_stage("model", [&] {
    EncoderConfig enc = EncoderConfig::profile(
        config.profile, ex.features.begin()->second.dims, ex.table.dim());
    enc.validate();
    return enc;
  });
  spdlog::info("prepared {} instances, {} labels (|X| = {}, |Y| = {}), "
               "groups A/B/C = {}/{}/{}",
               ex.catalog.n_instances(), ex.catalog.n_labels(),
               ex.manifest.seen.size(), ex.manifest.unseen.size(),
               ex.manifest.group_a.size(), ex.manifest.group_b.size(),
               ex.manifest.group_c.size());
  return ex;
}

// ---- training and the grid -------------------------------------------------

std::string checkpoint_key(const Experiment& ex, ModelKind kind,
                           const SetupView& train_setup) {
  Fingerprint fp;
  fp.add(std::string_view("zstag-checkpoint-1"));
  fp.add(std::string_view(kind == ModelKind::kEmbedding ? "embedding"
                                                        : "classifier"));
  fp.add(train_setup.name());
  fp.add(ex.catalog.hash());
  fp.add(serialize_manifest(ex.manifest));
  fp.add(encoder_config_json(ex.encoder));
  fp.add(train_config_json(ex.config.train));
  if (kind == ModelKind::kEmbedding) {
    fp.add(static_cast<std::uint64_t>(ex.table.dim()));
    for (LabelId id : ex.table.label_ids()) {
      fp.add(static_cast<std::uint64_t>(static_cast<std::uint32_t>(id)));
    }
    for (double v : ex.table.values()) fp.add(v);
  }
  for (const auto& id : train_setup.instance_ids) {
    const FeatureMatrix& f = ex.features.at(id);
    fp.add(id);
    fp.add(static_cast<std::uint64_t>(f.frames));
    fp.add(static_cast<std::uint64_t>(f.dims));
    fp.add(std::string_view(reinterpret_cast<const char*>(f.data.data()),
                            f.data.size() * sizeof(float)));
  }
  return fp.hex();
}

std::string checkpoint_path(const Experiment& ex, ModelKind kind,
                            const SetupView& train_setup,
                            const std::string& out_dir) {
  const std::string stem = setup_file_stem(kind, train_setup.name());
  return (fs::path(out_dir) / "checkpoints" /
          (stem + "-" + checkpoint_key(ex, kind, train_setup) + ".zstc"))
      .string();
}

ModelParams train_or_load(const Experiment& ex, ModelKind kind,
                          const SetupView& train_setup,
                          const std::string& out_dir) {
  const std::string setup = train_setup.name();
  const std::string stem = setup_file_stem(kind, setup);
  const fs::path ckpt = checkpoint_path(ex, kind, train_setup, out_dir);
  const fs::path ckpt_dir = ckpt.parent_path();
  if (fs::is_regular_file(ckpt)) {
    spdlog::info("{}: reusing checkpoint {}", setup, ckpt.filename().string());
    return load_checkpoint(ckpt.string());
  }

  const auto coverage = coverage_report(train_setup);
  if (!coverage.flagged.empty()) {
    spdlog::warn("{}: {} seen labels have no positive instance", setup,
                 coverage.flagged.size());
  }
  spdlog::info("{}: training {} model on {} instances", setup,
               kind == ModelKind::kEmbedding ? "embedding" : "classifier",
               train_setup.instance_ids.size());
  const auto on_epoch = [&](const EpochLog& e) {
    spdlog::debug("{} epoch {}: train {:.5f} valid {:.5f}", setup, e.epoch,
                  e.train_loss, e.valid_loss);
  };
  TrainResult result =
      kind == ModelKind::kEmbedding
          ? train_embedding(train_setup, ex.table, ex.features, ex.encoder,
                            ex.config.train, on_epoch)
          : train_classifier(train_setup, ex.features, ex.encoder,
                             ex.config.train, on_epoch);

  fs::create_directories(ckpt_dir);
  fs::create_directories(fs::path(out_dir) / "logs");
  write_file((fs::path(out_dir) / "logs" / (stem + ".jsonl")).string(),
             training_log_jsonl(result.log));
  CheckpointInfo info;
  info.epoch = result.best_epoch;
  info.metrics["best_loss"] = result.best_loss;
  info.standardizer = ex.standardizer;
  save_checkpoint(ckpt.string(), result.params, info);
  return std::move(result.params);
}

GridResult run_grid(const Experiment& ex, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  write_file((out / "config.resolved.toml").string(),
             experiment_config_toml(ex.config));
  save_manifest(ex.manifest, (out / "manifest.json").string());

  GridResult grid;
  json run = {{"train_setups", json::array()}};
  const auto all_ids = all_instance_ids(ex.catalog);
  for (const auto& train_name : grid_train_setups()) {
    const auto [tig, tlg] = parse_setup(train_name);
    const SetupView train_view = make_setup(ex.manifest, ex.catalog, tig, tlg);
    const std::string stage = "train " + train_name;
    const ModelParams params = in_stage(stage, [&] {
      require_role(train_view, SetupRole::kTrain);
      return train_or_load(ex, ModelKind::kEmbedding, train_view, out_dir);
    });
    run["train_setups"].push_back(
        {{"setup", train_name},
         {"instances", train_view.instance_ids.size()},
         {"checkpoint", fs::path(checkpoint_path(ex, ModelKind::kEmbedding,
                                                 train_view, out_dir))
                            .filename()
                            .string()}});
    const TrackEmbeddings tracks = embed_tracks(params, ex.features, all_ids);

    for (const auto& test_name : grid_annotation_setups()) {
      in_stage("eval " + train_name + " on " + test_name, [&] {
        const auto [ig, lg] = parse_setup(test_name);
        const SetupView view = make_setup(ex.manifest, ex.catalog, ig, lg);
        require_role(view, SetupRole::kAnnotation);
        EvalReport report = annotation_report(
            view, embedding_scores(params, ex.table, tracks, view),
            ex.config.ks);
        report.train_setup = train_name;
        grid.annotation.push_back(std::move(report));
      });
    }
    for (const auto& test_name : grid_retrieval_setups()) {
      in_stage("eval " + train_name + " on " + test_name, [&] {
        const auto [ig, lg] = parse_setup(test_name);
        const SetupView view = make_setup(ex.manifest, ex.catalog, ig, lg);
        require_role(view, SetupRole::kRetrieval);
        EvalReport report = retrieval_report(
            view, embedding_scores(params, ex.table, tracks, view));
        report.train_setup = train_name;
        grid.retrieval.push_back(std::move(report));
      });
    }
  }

  write_file((out / "annotation.csv").string(), reports_csv(grid.annotation));
  write_file((out / "retrieval.csv").string(), reports_csv(grid.retrieval));
  std::vector<EvalReport> all = grid.annotation;
  all.insert(all.end(), grid.retrieval.begin(), grid.retrieval.end());
  write_file((out / "reports.json").string(), reports_json(all));
  run["annotation_rows"] = grid.annotation.size();
  run["retrieval_rows"] = grid.retrieval.size();
  run["groups"] = {{"A", ex.manifest.group_a.size()},
                   {"B", ex.manifest.group_b.size()},
                   {"C", ex.manifest.group_c.size()}};
  write_file((out / "run.json").string(), run.dump(2) + "\n");
  return grid;
}

BaselineResult run_baseline(const Experiment& ex, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const SetupView ax =
      make_setup(ex.manifest, ex.catalog, InstanceGroup::kA, LabelGroup::kX);
  const SetupView bx =
      make_setup(ex.manifest, ex.catalog, InstanceGroup::kB, LabelGroup::kX);
  const ModelParams emb = in_stage("train embedding A-X", [&] {
    return train_or_load(ex, ModelKind::kEmbedding, ax, out_dir);
  });
  const ModelParams cls = in_stage("train classifier A-X", [&] {
    return train_or_load(ex, ModelKind::kClassifier, ax, out_dir);
  });

  BaselineResult result;
  in_stage("eval baseline on B-X", [&] {
    const auto emb_tracks = embed_tracks(emb, ex.features, bx.instance_ids);
    result.embedding =
        retrieval_report(bx, embedding_scores(emb, ex.table, emb_tracks, bx));
    const auto cls_tracks = embed_tracks(cls, ex.features, bx.instance_ids);
    result.classifier =
        retrieval_report(bx, classifier_score_matrix(cls, cls_tracks, bx));
  });
  result.embedding.train_setup = ax.name();
  result.classifier.train_setup = ax.name();
  write_file((fs::path(out_dir) / "baseline.csv").string(),
             baseline_csv(result));
  return result;
}

std::string baseline_csv(const BaselineResult& result) {
  std::string out = "model,train_setup,test_setup,AUC-l,MAP-l\n";
  const auto row = [&](const char* model, const EvalReport& r) {
    out += std::string(model) + "," + r.train_setup + "," + r.test_setup + "," +
           fixed6(r.metric("AUC-l").value) + "," +
           fixed6(r.metric("MAP-l").value) + "\n";
  };
  row("embedding", result.embedding);
  row("classifier", result.classifier);
  return out;
}

// ---- demos -----------------------------------------------------------------

std::vector<RankedLabel> annotate(const ModelParams& params,
                                  const SemanticTable& table,
                                  const SplitManifest& manifest,
                                  const FeatureMatrix& track,
                                  LabelGroup label_group, std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  std::vector<LabelId> candidates;
  if (label_group != LabelGroup::kY) {
    candidates.insert(candidates.end(), manifest.seen.begin(),
                      manifest.seen.end());
  }
  if (label_group != LabelGroup::kX) {
    candidates.insert(candidates.end(), manifest.unseen.begin(),
                      manifest.unseen.end());
  }
  std::sort(candidates.begin(), candidates.end());
  const auto embedding = track_embedding(params, track);
  const auto scores = score_labels(params, embedding, table, candidates);
  std::map<LabelId, std::string> names;
  for (std::size_t i = 0; i < table.size(); ++i) {
    names.emplace(table.label_ids()[i], table.names()[i]);
  }
  std::vector<RankedLabel> ranked;
  ranked.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    ranked.push_back({candidates[i], names.at(candidates[i]), scores[i],
                      manifest.unseen.count(candidates[i]) != 0});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedLabel& a, const RankedLabel& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.name < b.name;
                   });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<double> resolve_query(const SemanticTable& table,
                                  const std::string& query,
                                  const WordVectors* vocabulary) {
  const std::string normalized = normalize_label(query);
  if (const auto row = table.find_name(normalized)) {
    const auto v = table.row(*row);
    return {v.begin(), v.end()};
  }
  if (vocabulary != nullptr) {
    auto it = vocabulary->vectors.find(query);
    if (it == vocabulary->vectors.end()) {
      it = vocabulary->vectors.find(normalized);
    }
    if (it != vocabulary->vectors.end()) {
      if (it->second.size() != table.dim()) {
        throw DataError("word vector for '" + query + "' has dimension " +
                        std::to_string(it->second.size()) + ", table has " +
                        std::to_string(table.dim()));
      }
      std::vector<double> v = it->second;
      if (const auto& st = table.standardization()) {
        for (std::size_t d = 0; d < v.size(); ++d) {
          v[d] -= st->mean[d];
          if (st->std[d] > 0.0) v[d] /= st->std[d];
        }
      }
      return v;
    }
  }

  std::vector<std::pair<std::size_t, std::string>> known;
  for (const auto& name : table.names()) {
    known.emplace_back(edit_distance(normalized, name), name);
  }
  if (vocabulary != nullptr) {
    for (const auto& [word, v] : vocabulary->vectors) {
      (void)v;
      known.emplace_back(edit_distance(query, word), word);
    }
  }
  std::sort(known.begin(), known.end());
  known.erase(std::unique(known.begin(), known.end()), known.end());
  std::string msg = "unknown query '" + query + "'";
  if (!known.empty()) {
    msg += "; closest:";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, known.size()); ++i) {
      msg += (i == 0 ? " " : ", ") + known[i].second;
    }
  }
  throw DataError(msg);
}

std::vector<RankedTrack> retrieve(const ModelParams& params,
                                  const TrackEmbeddings& tracks,
                                  std::span<const double> query,
                                  std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  const auto projected = semantic_forward(params, query).output;
  std::vector<RankedTrack> ranked;
  ranked.reserve(tracks.size());
  for (const auto& [id, embedding] : tracks) {
    ranked.push_back({id, relevance(embedding, projected)});
  }
  // The map iterates ids in ascending order, so a stable sort breaks ties
  // by id.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedTrack& a, const RankedTrack& b) {
                     return a.score > b.score;
                   });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

NeighborLists neighbors(const ModelParams& params, const SemanticTable& table,
                        std::span<const double> query, std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  NeighborLists lists;
  lists.semantic = nearest_labels(table, query, k);
  const auto projected_query = semantic_forward(params, query).output;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto projected = semantic_forward(params, table.row(i)).output;
    lists.embedding.push_back({table.label_ids()[i], table.names()[i],
                               relevance(projected_query, projected)});
  }
  std::sort(lists.embedding.begin(), lists.embedding.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.name < b.name;
            });
  if (lists.embedding.size() > k) lists.embedding.resize(k);
  return lists;
}

}  // namespace zstag
