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

// Multi-label annotation catalogs: loading, allowlist filtering and summary
// statistics.

#ifndef ZSTAG_DATASET_H_
#define ZSTAG_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace zstag {

using LabelId = std::int32_t;

struct Instance {
  std::string id;
  std::optional<std::string> audio;
};

struct Label {
  LabelId id;
  std::string name;
};

// One raw annotation line, before normalization and cleaning.
struct CatalogRecord {
  std::string id;
  std::vector<std::string> labels;
  std::optional<std::string> audio;
};

enum class CatalogFormat { kJsonl, kCsv };

// Lowercases ASCII letters and removes ASCII characters that are not letters
// or digits. Bytes >= 0x80 are kept so UTF-8 names survive.
// "Classic Rock" -> "classicrock".
std::string normalize_label(std::string_view name);

// Immutable instance x label annotation set. Every instance has at least one
// positive label and every label has at least one positive instance. Label
// ids are assigned in order of first appearance and are preserved by
// filtering, so they need not be contiguous.
class Catalog {
 public:
  struct Cleaning {
    std::size_t dropped_instances = 0;
    std::size_t dropped_labels = 0;
  };

  Catalog() = default;

  // Normalizes label names, assigns ids, drops instances without labels.
  // Throws DataError on duplicate instance ids or an empty result.
  static Catalog from_records(const std::vector<CatalogRecord>& records,
                              Cleaning* cleaning = nullptr);

  const std::vector<Instance>& instances() const { return instances_; }
  // Sorted by id.
  const std::vector<Label>& labels() const { return labels_; }
  // Positive label ids of instance `row`, ascending.
  const std::vector<LabelId>& positives(std::size_t row) const {
    return positives_[row];
  }

  std::size_t n_instances() const { return instances_.size(); }
  std::size_t n_labels() const { return labels_.size(); }
  std::size_t n_positives() const;

  std::optional<std::size_t> find_instance(std::string_view id) const;
  std::optional<LabelId> find_label(std::string_view name) const;
  bool has_label(LabelId id) const { return label_index_.count(id) != 0; }
  const std::string& label_name(LabelId id) const;
  std::vector<LabelId> label_ids() const;

  // Order-sensitive fingerprint of instance ids, label names and annotations.
  std::string hash() const;

  // Restricts the catalog to `keep` labels and re-applies the cleaning rules.
  Catalog restricted_to(const std::set<LabelId>& keep,
                        Cleaning* cleaning = nullptr) const;

 private:
  Catalog(std::vector<Instance> instances, std::vector<Label> labels,
          std::vector<std::vector<LabelId>> positives, Cleaning* cleaning);

  std::vector<Instance> instances_;
  std::vector<Label> labels_;
  std::vector<std::vector<LabelId>> positives_;
  std::unordered_map<std::string, std::size_t> instance_index_;
  std::unordered_map<LabelId, std::size_t> label_index_;
  std::unordered_map<std::string, LabelId> name_index_;
};

struct CatalogStats {
  std::size_t n_instances = 0;
  std::size_t n_labels = 0;
  double label_cardinality = 0.0;
  std::map<LabelId, std::size_t> per_label_counts;
};

Catalog load_catalog(const std::string& path, CatalogFormat format);
Catalog parse_catalog(std::string_view text, CatalogFormat format);
CatalogFormat catalog_format_from_path(const std::string& path);

// Writes JSONL with each instance's labels in ascending id order, which
// reloads to the same label ids.
std::string serialize_catalog(const Catalog& catalog);
void save_catalog(const Catalog& catalog, const std::string& path);

struct FilterResult {
  Catalog catalog;
  std::size_t dropped_labels = 0;
  std::size_t dropped_instances = 0;
};

FilterResult filter_labels(const Catalog& catalog,
                           const std::set<std::string>& allowlist);

// One normalized label name per line; blank lines ignored.
std::set<std::string> load_allowlist(const std::string& path);

CatalogStats catalog_stats(const Catalog& catalog);

}  // namespace zstag

#endif  // ZSTAG_DATASET_H_
