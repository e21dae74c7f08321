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

// Label-first data split for multi-label zero-shot learning.
//
// Labels are divided into seen (X) and unseen (Y) sets. Instances then fall
// into exactly one of three groups:
//   A: at least one positive in X, none in Y
//   B: at least one positive in X and at least one in Y
//   C: no positive in X, at least one in Y
// Train, annotation-test and retrieval-test setups are unions of these
// instance groups crossed with X, Y or X+Y.

#ifndef ZSTAG_SPLIT_H_
#define ZSTAG_SPLIT_H_

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "zstag/dataset.h"

namespace zstag {

struct LabelSplit {
  std::set<LabelId> seen;
  std::set<LabelId> unseen;
};

struct SplitManifest {
  std::set<LabelId> seen;    // X
  std::set<LabelId> unseen;  // Y
  // Instance ids in catalog order.
  std::vector<std::string> group_a;
  std::vector<std::string> group_b;
  std::vector<std::string> group_c;
  std::uint64_t seed = 0;
  std::string catalog_hash;
};

enum class InstanceGroup { kA, kB, kC, kAB, kBC, kABC };
enum class LabelGroup { kX, kY, kXY };

// Uses of a setup. A combination may serve several.
enum class SetupRole : unsigned { kTrain = 1, kAnnotation = 2, kRetrieval = 4 };

struct SetupView {
  InstanceGroup instance_group;
  LabelGroup label_group;
  unsigned roles = 0;
  // Instance ids in catalog order; label ids ascending.
  std::vector<std::string> instance_ids;
  std::vector<LabelId> label_ids;
  // Per view instance: its positives restricted to label_ids, ascending.
  std::vector<std::vector<LabelId>> positives;

  bool allows(SetupRole role) const {
    return (roles & static_cast<unsigned>(role)) != 0;
  }
  // e.g. "(B+C)-(X+Y)".
  std::string name() const;
};

// |Y| = round_half_up(unseen_fraction * n_labels), deterministic in seed.
LabelSplit split_labels(const Catalog& catalog, double unseen_fraction,
                        std::uint64_t seed);

SplitManifest partition_instances(const Catalog& catalog,
                                  const LabelSplit& labels,
                                  std::uint64_t seed = 0);

// Checks the partition and group invariants; throws DataError naming the
// first violation.
void validate_manifest(const SplitManifest& manifest, const Catalog& catalog);

SetupView make_setup(const SplitManifest& manifest, const Catalog& catalog,
                     InstanceGroup instance_group, LabelGroup label_group);

// Throws ConfigError if the view cannot be used for `role`.
void require_role(const SetupView& view, SetupRole role);

struct Holdout {
  std::vector<std::string> train_ids;
  std::vector<std::string> valid_ids;
};

// Both lists keep the view's catalog order.
Holdout holdout_validation(const SetupView& view, double fraction,
                           std::uint64_t seed);

struct LabelCoverage {
  LabelId label;
  std::size_t n_positives;
};

struct CoverageReport {
  std::vector<LabelCoverage> counts;  // one per view label, ascending id
  std::vector<LabelId> flagged;       // labels with no positive in the view
};

CoverageReport coverage_report(const SetupView& view);

std::string instance_group_name(InstanceGroup group);
std::string label_group_name(LabelGroup group);
// Accepts "A", "B+C", "(A+B)", "AB", ... and "X", "Y", "X+Y", "XY".
InstanceGroup parse_instance_group(const std::string& text);
LabelGroup parse_label_group(const std::string& text);
// Parses "(B+C)-Y" style names.
std::pair<InstanceGroup, LabelGroup> parse_setup(const std::string& text);

std::string serialize_manifest(const SplitManifest& manifest);
SplitManifest parse_manifest(const std::string& text);
void save_manifest(const SplitManifest& manifest, const std::string& path);
SplitManifest load_manifest(const std::string& path);

}  // namespace zstag

#endif  // ZSTAG_SPLIT_H_
