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

#include "zstag/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include <nlohmann/json.hpp>

namespace zstag {

using json = nlohmann::json;

namespace {

constexpr int kMaxAttempts = 100;

std::string padded(const char* prefix, std::size_t value, std::size_t count) {
  const int width = static_cast<int>(std::to_string(count).size());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, value);
  return buf;
}

// k distinct indices drawn without replacement proportionally to weights.
std::vector<std::size_t> weighted_sample(const std::vector<double>& weights,
                                         std::size_t k, Rng& rng) {
  std::vector<double> w = weights;
  std::vector<std::size_t> out;
  for (std::size_t draw = 0; draw < k; ++draw) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double u = rng.uniform01() * total;
    std::size_t pick = 0;
    for (; pick + 1 < w.size(); ++pick) {
      if (w[pick] > 0.0 && u < w[pick]) break;
      u -= w[pick];
    }
    while (w[pick] == 0.0) --pick;  // rounding at the upper end
    out.push_back(pick);
    w[pick] = 0.0;
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_labels < 3) throw ConfigError("synthetic data needs at least 3 labels");
  if (n_unseen == 0 || n_unseen >= n_labels) {
    throw ConfigError("n_unseen must be in [1, n_labels)");
  }
  if (n_labels - n_unseen < 2) {
    throw ConfigError("synthetic data needs at least 2 seen labels");
  }
  if (n_instances < 3) {
    throw ConfigError("synthetic data needs at least 3 instances");
  }
  if (feature_dim == 0 || semantic_dim == 0 || frames == 0) {
    throw ConfigError("synthetic dimensions must be positive");
  }
  if (cardinality < 1.0 || cardinality > static_cast<double>(n_labels)) {
    throw ConfigError("cardinality must be in [1, n_labels]");
  }
  if (noise < 0.0 || popularity_skew < 0.0) {
    throw ConfigError("noise and popularity_skew must be non-negative");
  }
  if (!(parent_rate >= 0.0 && parent_rate <= 1.0)) {
    throw ConfigError("parent_rate must be in [0, 1]");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 21));
  const std::size_t n_labels = spec.n_labels;

  std::vector<std::size_t> perm(n_labels);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<bool> unseen(n_labels, false);
  for (std::size_t i = 0; i < spec.n_unseen; ++i) unseen[perm[i]] = true;
  std::vector<std::size_t> seen_idx;
  for (std::size_t l = 0; l < n_labels; ++l) {
    if (!unseen[l]) seen_idx.push_back(l);
  }

  std::vector<std::size_t> rank(n_labels);
  std::iota(rank.begin(), rank.end(), 0);
  rng.shuffle(rank);
  std::vector<double> popularity(n_labels);
  for (std::size_t l = 0; l < n_labels; ++l) {
    popularity[l] =
        1.0 / std::pow(static_cast<double>(rank[l] + 1), spec.popularity_skew);
  }

  const std::size_t ds = spec.semantic_dim;
  std::vector<double> proto(n_labels * ds, 0.0);
  for (std::size_t l : seen_idx) {
    for (std::size_t d = 0; d < ds; ++d) proto[l * ds + d] = rng.normal();
  }
  // Unseen labels draw their components from a shuffled pool of seen
  // labels, so components are shared only once the pool runs out.
  std::vector<std::size_t> pool;
  std::vector<std::size_t> parent(n_labels, n_labels);
  for (std::size_t l = 0; l < n_labels; ++l) {
    if (!unseen[l]) continue;
    const std::size_t m = std::min<std::size_t>(2 + rng.uniform_index(2),
                                                seen_idx.size());
    std::vector<std::size_t> parts;
    while (parts.size() < m) {
      if (pool.empty()) {
        pool = seen_idx;
        rng.shuffle(pool);
      }
      const std::size_t c = pool.back();
      pool.pop_back();
      if (std::find(parts.begin(), parts.end(), c) == parts.end()) {
        parts.push_back(c);
      }
    }
    std::vector<double> w(m);
    for (double& x : w) x = rng.uniform(0.1, 1.0);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    parent[l] = parts[static_cast<std::size_t>(
        std::max_element(w.begin(), w.end()) - w.begin())];
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t d = 0; d < ds; ++d) {
        proto[l * ds + d] += w[j] / total * proto[parts[j] * ds + d];
      }
    }
  }

  const std::size_t dim = spec.feature_dim;
  std::vector<double> mixing(dim * ds);
  for (double& x : mixing) x = rng.normal();

  std::vector<std::vector<std::size_t>> label_sets;
  bool feasible = false;
  for (int attempt = 0; attempt < kMaxAttempts && !feasible; ++attempt) {
    label_sets.assign(spec.n_instances, {});
    bool has_a = false, has_b = false, has_c = false;
    const auto base = static_cast<std::size_t>(std::floor(spec.cardinality));
    const double frac = spec.cardinality - static_cast<double>(base);
    for (auto& set : label_sets) {
      std::size_t k = base + (rng.uniform01() < frac ? 1 : 0);
      const std::size_t jitter = rng.uniform_index(3);
      if (jitter == 0 && k > 1) --k;
      if (jitter == 2 && k < n_labels) ++k;
      set = weighted_sample(popularity, k, rng);
      const std::vector<std::size_t> drawn = set;
      for (std::size_t l : drawn) {
        if (unseen[l] && rng.uniform01() < spec.parent_rate &&
            std::find(set.begin(), set.end(), parent[l]) == set.end()) {
          set.push_back(parent[l]);
        }
      }
      std::sort(set.begin(), set.end());
      std::size_t n_y = 0;
      for (std::size_t l : set) n_y += unseen[l] ? 1 : 0;
      if (n_y == 0) has_a = true;
      else if (n_y == set.size()) has_c = true;
      else has_b = true;
    }
    feasible = has_a && has_b && has_c;
  }
  if (!feasible) {
    throw DataError("synthetic spec cannot populate groups A, B and C");
  }

  std::vector<std::string> names(n_labels);
  for (std::size_t l = 0; l < n_labels; ++l) {
    names[l] = padded("tag", l, n_labels);
  }
  std::vector<CatalogRecord> records;
  records.reserve(spec.n_instances);
  for (std::size_t i = 0; i < spec.n_instances; ++i) {
    CatalogRecord rec;
    rec.id = padded("syn", i, spec.n_instances);
    for (std::size_t l : label_sets[i]) rec.labels.push_back(names[l]);
    records.push_back(std::move(rec));
  }

  SyntheticData data;
  data.catalog = Catalog::from_records(records);

  std::vector<LabelId> ids;
  std::vector<std::string> table_names;
  std::vector<double> values;
  for (std::size_t l = 0; l < n_labels; ++l) {
    const auto id = data.catalog.find_label(names[l]);
    if (!id) continue;  // never drawn
    ids.push_back(*id);
    table_names.push_back(names[l]);
    values.insert(values.end(), proto.begin() + l * ds,
                  proto.begin() + (l + 1) * ds);
    (unseen[l] ? data.planted.unseen : data.planted.seen).insert(*id);
  }
  data.table = SemanticTable(SemanticKind::kWord, ds, std::move(ids),
                             std::move(table_names), std::move(values));
  if (data.planted.seen.empty() || data.planted.unseen.empty()) {
    throw DataError("synthetic draw left the seen or unseen set empty");
  }

  // Every label contributes a unit-norm direction to the sound, so a mixed
  // unseen prototype is as audible as a seen one.
  std::vector<double> unit = proto;
  for (std::size_t l = 0; l < n_labels; ++l) {
    double norm = 0.0;
    for (std::size_t d = 0; d < ds; ++d) norm += proto[l * ds + d] * proto[l * ds + d];
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (std::size_t d = 0; d < ds; ++d) unit[l * ds + d] /= norm;
    }
  }

  Rng noise_rng(derive_seed(spec.seed, 22));
  std::vector<double> latent(ds);
  std::vector<double> mean(dim);
  for (std::size_t i = 0; i < spec.n_instances; ++i) {
    std::fill(latent.begin(), latent.end(), 0.0);
    for (std::size_t l : label_sets[i]) {
      for (std::size_t d = 0; d < ds; ++d) latent[d] += unit[l * ds + d];
    }
    for (std::size_t r = 0; r < dim; ++r) {
      double acc = 0.0;
      for (std::size_t d = 0; d < ds; ++d) {
        acc += mixing[r * ds + d] * latent[d];
      }
      mean[r] = acc;
    }
    FeatureMatrix fm(spec.frames, dim);
    for (std::size_t t = 0; t < spec.frames; ++t) {
      for (std::size_t r = 0; r < dim; ++r) {
        fm.at(t, r) =
            static_cast<float>(mean[r] + spec.noise * noise_rng.normal());
      }
    }
    data.features.emplace(records[i].id, std::move(fm));
  }
  return data;
}

void write_synthetic(const SyntheticData& data, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  save_catalog(data.catalog, (root / "catalog.jsonl").string());
  save_table(data.table, (root / "side_info").string());
  json split = {{"X", data.planted.seen}, {"Y", data.planted.unseen}};
  write_file((root / "planted_split.json").string(), split.dump(2) + "\n");
  const std::string trailer = json{{"source", "synthetic"}}.dump();
  for (const auto& [id, features] : data.features) {
    save_features((root / "features" / feature_file_name(id)).string(),
                  features, trailer);
  }
}

LabelSplit load_planted_split(const std::string& path) {
  try {
    const json obj = json::parse(read_file(path));
    LabelSplit split;
    split.seen = obj.at("X").get<std::set<LabelId>>();
    split.unseen = obj.at("Y").get<std::set<LabelId>>();
    return split;
  } catch (const json::exception& e) {
    throw DataError(path + ": invalid planted split: " + e.what());
  }
}

}  // namespace zstag
