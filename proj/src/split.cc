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

#include "zstag/split.h"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "zstag/common.h"

namespace zstag {

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kLabelSplitStream = 1;
constexpr std::uint64_t kHoldoutStream = 2;

enum class Group { kA, kB, kC };

Group classify(const std::vector<LabelId>& positives,
               const std::set<LabelId>& seen) {
  bool any_seen = false;
  bool any_unseen = false;
  for (LabelId id : positives) {
    if (seen.count(id) != 0) {
      any_seen = true;
    } else {
      any_unseen = true;
    }
  }
  if (any_seen && any_unseen) return Group::kB;
  return any_seen ? Group::kA : Group::kC;
}

bool group_contains(InstanceGroup group, Group g) {
  switch (group) {
    case InstanceGroup::kA:
      return g == Group::kA;
    case InstanceGroup::kB:
      return g == Group::kB;
    case InstanceGroup::kC:
      return g == Group::kC;
    case InstanceGroup::kAB:
      return g != Group::kC;
    case InstanceGroup::kBC:
      return g != Group::kA;
    case InstanceGroup::kABC:
      return true;
  }
  return false;
}

unsigned roles_for(InstanceGroup ig, LabelGroup lg) {
  using IG = InstanceGroup;
  unsigned roles = 0;
  if (lg == LabelGroup::kX && (ig == IG::kA || ig == IG::kB || ig == IG::kAB)) {
    roles |= static_cast<unsigned>(SetupRole::kTrain);
  }
  if ((lg == LabelGroup::kY || lg == LabelGroup::kXY) &&
      (ig == IG::kB || ig == IG::kC || ig == IG::kBC)) {
    roles |= static_cast<unsigned>(SetupRole::kAnnotation);
  }
  if (lg == LabelGroup::kY && (ig == IG::kBC || ig == IG::kABC)) {
    roles |= static_cast<unsigned>(SetupRole::kRetrieval);
  }
  return roles;
}

std::string strip_parens(std::string text) {
  std::string out;
  for (char c : text) {
    if (c != '(' && c != ')' && c != ' ') out.push_back(c);
  }
  return out;
}

}  // namespace

std::string instance_group_name(InstanceGroup group) {
  switch (group) {
    case InstanceGroup::kA:
      return "A";
    case InstanceGroup::kB:
      return "B";
    case InstanceGroup::kC:
      return "C";
    case InstanceGroup::kAB:
      return "A+B";
    case InstanceGroup::kBC:
      return "B+C";
    case InstanceGroup::kABC:
      return "A+B+C";
  }
  return "?";
}

std::string label_group_name(LabelGroup group) {
  switch (group) {
    case LabelGroup::kX:
      return "X";
    case LabelGroup::kY:
      return "Y";
    case LabelGroup::kXY:
      return "X+Y";
  }
  return "?";
}

InstanceGroup parse_instance_group(const std::string& text) {
  std::string key = strip_parens(text);
  key.erase(std::remove(key.begin(), key.end(), '+'), key.end());
  if (key == "A") return InstanceGroup::kA;
  if (key == "B") return InstanceGroup::kB;
  if (key == "C") return InstanceGroup::kC;
  if (key == "AB") return InstanceGroup::kAB;
  if (key == "BC") return InstanceGroup::kBC;
  if (key == "ABC") return InstanceGroup::kABC;
  throw ConfigError("unknown instance group: " + text);
}

LabelGroup parse_label_group(const std::string& text) {
  std::string key = strip_parens(text);
  key.erase(std::remove(key.begin(), key.end(), '+'), key.end());
  if (key == "X") return LabelGroup::kX;
  if (key == "Y") return LabelGroup::kY;
  if (key == "XY") return LabelGroup::kXY;
  throw ConfigError("unknown label group: " + text);
}

std::pair<InstanceGroup, LabelGroup> parse_setup(const std::string& text) {
  const auto dash = text.rfind('-');
  if (dash == std::string::npos) {
    throw ConfigError("setup must look like <instances>-<labels>: " + text);
  }
  return {parse_instance_group(text.substr(0, dash)),
          parse_label_group(text.substr(dash + 1))};
}

std::string SetupView::name() const {
  auto wrap = [](const std::string& s) {
    return s.find('+') == std::string::npos ? s : "(" + s + ")";
  };
  return wrap(instance_group_name(instance_group)) + "-" +
         wrap(label_group_name(label_group));
}

LabelSplit split_labels(const Catalog& catalog, double unseen_fraction,
                        std::uint64_t seed) {
  if (!(unseen_fraction > 0.0 && unseen_fraction < 1.0)) {
    throw ConfigError("unseen fraction must be in (0, 1)");
  }
  const std::size_t n = catalog.n_labels();
  if (n < 2) throw DataError("need at least two labels to split");
  std::size_t n_unseen = round_half_up(unseen_fraction * static_cast<double>(n));
  n_unseen = std::clamp<std::size_t>(n_unseen, 1, n - 1);

  std::vector<LabelId> ids = catalog.label_ids();
  Rng rng(derive_seed(seed, kLabelSplitStream));
  rng.shuffle(ids);

  LabelSplit split;
  split.unseen.insert(ids.begin(), ids.begin() + n_unseen);
  split.seen.insert(ids.begin() + n_unseen, ids.end());
  return split;
}

SplitManifest partition_instances(const Catalog& catalog,
                                  const LabelSplit& labels,
                                  std::uint64_t seed) {
  for (LabelId id : labels.seen) {
    if (labels.unseen.count(id) != 0) {
      throw DataError("label " + std::to_string(id) + " is both seen and unseen");
    }
  }
  if (labels.seen.size() + labels.unseen.size() != catalog.n_labels()) {
    throw DataError("label split does not cover the catalog labels");
  }
  for (const auto& label : catalog.labels()) {
    if (labels.seen.count(label.id) == 0 && labels.unseen.count(label.id) == 0) {
      throw DataError("label split misses label " + label.name);
    }
  }

  SplitManifest manifest;
  manifest.seen = labels.seen;
  manifest.unseen = labels.unseen;
  manifest.seed = seed;
  manifest.catalog_hash = catalog.hash();
  for (std::size_t row = 0; row < catalog.n_instances(); ++row) {
    const auto& id = catalog.instances()[row].id;
    switch (classify(catalog.positives(row), labels.seen)) {
      case Group::kA:
        manifest.group_a.push_back(id);
        break;
      case Group::kB:
        manifest.group_b.push_back(id);
        break;
      case Group::kC:
        manifest.group_c.push_back(id);
        break;
    }
  }
  return manifest;
}

void validate_manifest(const SplitManifest& manifest, const Catalog& catalog) {
  if (!manifest.catalog_hash.empty() &&
      manifest.catalog_hash != catalog.hash()) {
    throw DataError("manifest was built from a different catalog (hash " +
                    manifest.catalog_hash + ", catalog " + catalog.hash() + ")");
  }
  for (const auto& label : catalog.labels()) {
    const bool in_x = manifest.seen.count(label.id) != 0;
    const bool in_y = manifest.unseen.count(label.id) != 0;
    if (in_x == in_y) {
      throw DataError("label " + label.name +
                      " must be in exactly one of X and Y");
    }
  }
  if (manifest.seen.size() + manifest.unseen.size() != catalog.n_labels()) {
    throw DataError("manifest labels do not match the catalog");
  }
  std::unordered_set<std::string> assigned;
  auto check = [&](const std::vector<std::string>& ids, Group expected,
                   const char* name) {
    for (const auto& id : ids) {
      if (!assigned.insert(id).second) {
        throw DataError("instance " + id + " assigned to more than one group");
      }
      const auto row = catalog.find_instance(id);
      if (!row) throw DataError("manifest instance not in catalog: " + id);
      if (classify(catalog.positives(*row), manifest.seen) != expected) {
        throw DataError("instance " + id + " violates group " + name);
      }
    }
  };
  check(manifest.group_a, Group::kA, "A");
  check(manifest.group_b, Group::kB, "B");
  check(manifest.group_c, Group::kC, "C");
  if (assigned.size() != catalog.n_instances()) {
    throw DataError("manifest groups do not cover every instance");
  }
}

SetupView make_setup(const SplitManifest& manifest, const Catalog& catalog,
                     InstanceGroup instance_group, LabelGroup label_group) {
  SetupView view;
  view.instance_group = instance_group;
  view.label_group = label_group;
  view.roles = roles_for(instance_group, label_group);
  if (view.roles == 0) {
    throw ConfigError("setup " + view.name() +
                      " is not a train, annotation or retrieval setup");
  }

  std::set<LabelId> labels;
  if (label_group != LabelGroup::kY) {
    labels.insert(manifest.seen.begin(), manifest.seen.end());
  }
  if (label_group != LabelGroup::kX) {
    labels.insert(manifest.unseen.begin(), manifest.unseen.end());
  }
  view.label_ids.assign(labels.begin(), labels.end());

  std::unordered_map<std::string, Group> group_of;
  for (const auto& id : manifest.group_a) group_of.emplace(id, Group::kA);
  for (const auto& id : manifest.group_b) group_of.emplace(id, Group::kB);
  for (const auto& id : manifest.group_c) group_of.emplace(id, Group::kC);

  for (std::size_t row = 0; row < catalog.n_instances(); ++row) {
    const auto& id = catalog.instances()[row].id;
    auto it = group_of.find(id);
    if (it == group_of.end()) {
      throw DataError("catalog instance missing from manifest: " + id);
    }
    if (!group_contains(instance_group, it->second)) continue;
    std::vector<LabelId> pos;
    for (LabelId label : catalog.positives(row)) {
      if (labels.count(label) != 0) pos.push_back(label);
    }
    view.instance_ids.push_back(id);
    view.positives.push_back(std::move(pos));
  }
  return view;
}

void require_role(const SetupView& view, SetupRole role) {
  if (view.allows(role)) return;
  switch (role) {
    case SetupRole::kTrain:
      throw ConfigError(view.name() +
                        " is not a train setup (use A-X, B-X or (A+B)-X)");
    case SetupRole::kAnnotation:
      throw ConfigError(view.name() +
                        " is not an annotation test setup (use B, C or B+C "
                        "with Y or X+Y)");
    case SetupRole::kRetrieval:
      if (view.instance_group == InstanceGroup::kC) {
        throw ConfigError(
            "C-Y cannot be formed for retrieval: unseen labels are not "
            "guaranteed a positive instance in C");
      }
      throw ConfigError(view.name() +
                        " is not a retrieval test setup (use (B+C)-Y or "
                        "(A+B+C)-Y)");
  }
}

Holdout holdout_validation(const SetupView& view, double fraction,
                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("validation fraction must be in (0, 1)");
  }
  const std::size_t n = view.instance_ids.size();
  const std::size_t n_valid = round_half_up(fraction * static_cast<double>(n));
  if (n_valid < 1 || n_valid >= n) {
    throw DataError("train set of " + std::to_string(n) +
                    " instances is too small for a validation holdout of " +
                    std::to_string(fraction));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, kHoldoutStream));
  rng.shuffle(order);
  std::vector<char> is_valid(n, 0);
  for (std::size_t i = 0; i < n_valid; ++i) is_valid[order[i]] = 1;

  Holdout holdout;
  for (std::size_t i = 0; i < n; ++i) {
    (is_valid[i] ? holdout.valid_ids : holdout.train_ids)
        .push_back(view.instance_ids[i]);
  }
  return holdout;
}

CoverageReport coverage_report(const SetupView& view) {
  std::map<LabelId, std::size_t> counts;
  for (LabelId id : view.label_ids) counts[id] = 0;
  for (const auto& row : view.positives) {
    for (LabelId id : row) ++counts[id];
  }
  CoverageReport report;
  for (const auto& [id, count] : counts) {
    report.counts.push_back({id, count});
    if (count == 0) report.flagged.push_back(id);
  }
  return report;
}

std::string serialize_manifest(const SplitManifest& manifest) {
  json obj;
  obj["seed"] = manifest.seed;
  obj["catalog_hash"] = manifest.catalog_hash;
  obj["X"] = manifest.seen;
  obj["Y"] = manifest.unseen;
  obj["A"] = manifest.group_a;
  obj["B"] = manifest.group_b;
  obj["C"] = manifest.group_c;
  return obj.dump(1) + "\n";
}

SplitManifest parse_manifest(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed manifest JSON: ") + e.what());
  }
  SplitManifest manifest;
  try {
    manifest.seed = obj.at("seed").get<std::uint64_t>();
    manifest.catalog_hash = obj.at("catalog_hash").get<std::string>();
    manifest.seen = obj.at("X").get<std::set<LabelId>>();
    manifest.unseen = obj.at("Y").get<std::set<LabelId>>();
    manifest.group_a = obj.at("A").get<std::vector<std::string>>();
    manifest.group_b = obj.at("B").get<std::vector<std::string>>();
    manifest.group_c = obj.at("C").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid manifest: ") + e.what());
  }
  return manifest;
}

void save_manifest(const SplitManifest& manifest, const std::string& path) {
  write_file(path, serialize_manifest(manifest));
}

SplitManifest load_manifest(const std::string& path) {
  return parse_manifest(read_file(path));
}

}  // namespace zstag
