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

#ifndef ZSTAG_TESTS_TEST_SUPPORT_H_
#define ZSTAG_TESTS_TEST_SUPPORT_H_

#include <atomic>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "zstag/common.h"
#include "zstag/dataset.h"
#include "zstag/split.h"

namespace zstag::testing {

// Directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("zstag-test-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline CatalogRecord record(std::string id, std::vector<std::string> labels) {
  return CatalogRecord{std::move(id), std::move(labels), std::nullopt};
}

// Instances "i000".. with 1..max_labels distinct labels "l0".. each.
inline Catalog random_catalog(Rng& rng, std::size_t n_instances,
                              std::size_t n_labels, std::size_t max_labels) {
  std::vector<CatalogRecord> records;
  for (std::size_t i = 0; i < n_instances; ++i) {
    const std::size_t k = 1 + rng.uniform_index(std::min(max_labels, n_labels));
    std::set<std::size_t> picked;
    while (picked.size() < k) picked.insert(rng.uniform_index(n_labels));
    std::vector<std::string> labels;
    for (std::size_t l : picked) labels.push_back("l" + std::to_string(l));
    char id[32];
    std::snprintf(id, sizeof id, "i%03zu", i);
    records.push_back(record(id, labels));
  }
  return Catalog::from_records(records);
}

enum class Group { kA, kB, kC };

// Group of an instance straight from the definitions.
inline Group definitional_group(const std::vector<LabelId>& positives,
                                const std::set<LabelId>& seen,
                                const std::set<LabelId>& unseen) {
  bool any_x = false, any_y = false;
  for (LabelId id : positives) {
    any_x = any_x || seen.count(id) != 0;
    any_y = any_y || unseen.count(id) != 0;
  }
  if (any_x && !any_y) return Group::kA;
  if (any_x && any_y) return Group::kB;
  return Group::kC;
}

// Checks every manifest invariant directly against the catalog. Returns the
// first violation, or an empty string.
inline std::string manifest_violation(const SplitManifest& m,
                                      const Catalog& catalog) {
  std::set<LabelId> all;
  for (const auto& label : catalog.labels()) all.insert(label.id);
  std::set<LabelId> both = m.seen;
  both.insert(m.unseen.begin(), m.unseen.end());
  if (both != all) return "X and Y do not cover the labels";
  if (both.size() != m.seen.size() + m.unseen.size()) return "X and Y overlap";

  std::map<std::string, int> count;
  for (const auto* g : {&m.group_a, &m.group_b, &m.group_c}) {
    for (const auto& id : *g) ++count[id];
  }
  if (count.size() != catalog.n_instances()) {
    return "A, B and C do not cover the instances";
  }
  for (const auto& [id, n] : count) {
    if (n != 1) return "instance " + id + " is in more than one group";
    if (!catalog.find_instance(id)) return "unknown instance " + id;
  }
  const std::pair<const std::vector<std::string>*, Group> groups[] = {
      {&m.group_a, Group::kA}, {&m.group_b, Group::kB}, {&m.group_c, Group::kC}};
  for (const auto& [ids, expected] : groups) {
    for (const auto& id : *ids) {
      std::size_t n_x = 0, n_y = 0;
      for (LabelId l : catalog.positives(*catalog.find_instance(id))) {
        n_x += m.seen.count(l);
        n_y += m.unseen.count(l);
      }
      const bool ok = expected == Group::kA   ? n_x >= 1 && n_y == 0
                      : expected == Group::kB ? n_x >= 1 && n_y >= 1
                                              : n_x == 0 && n_y >= 1;
      if (!ok) return "instance " + id + " breaks its group definition";
    }
  }
  return "";
}

}  // namespace zstag::testing

#endif  // ZSTAG_TESTS_TEST_SUPPORT_H_
