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

#include "zstag/dataset.h"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "zstag/common.h"

namespace zstag {

using json = nlohmann::json;

std::string normalize_label(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char ch : name) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80) {
      out.push_back(ch);
    } else if (c >= 'A' && c <= 'Z') {
      out.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      out.push_back(ch);
    }
  }
  return out;
}

Catalog Catalog::from_records(const std::vector<CatalogRecord>& records,
                              Cleaning* cleaning) {
  std::vector<Instance> instances;
  std::vector<Label> labels;
  std::vector<std::vector<LabelId>> positives;
  std::unordered_map<std::string, LabelId> ids;
  std::unordered_map<std::string, std::size_t> seen_instances;

  instances.reserve(records.size());
  positives.reserve(records.size());
  for (const auto& record : records) {
    if (record.id.empty()) throw DataError("instance with empty id");
    if (!seen_instances.emplace(record.id, instances.size()).second) {
      throw DataError("duplicate instance id: " + record.id);
    }
    std::vector<LabelId> row;
    for (const auto& raw : record.labels) {
      const std::string name = normalize_label(raw);
      if (name.empty()) continue;
      auto [it, inserted] =
          ids.emplace(name, static_cast<LabelId>(labels.size()));
      if (inserted) labels.push_back({it->second, name});
      row.push_back(it->second);
    }
    instances.push_back({record.id, record.audio});
    positives.push_back(std::move(row));
  }
  return Catalog(std::move(instances), std::move(labels), std::move(positives),
                 cleaning);
}

Catalog::Catalog(std::vector<Instance> instances, std::vector<Label> labels,
                 std::vector<std::vector<LabelId>> positives,
                 Cleaning* cleaning) {
  Cleaning local;
  std::unordered_map<LabelId, std::size_t> counts;
  for (std::size_t row = 0; row < instances.size(); ++row) {
    auto& pos = positives[row];
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    if (pos.empty()) {
      ++local.dropped_instances;
      continue;
    }
    for (LabelId id : pos) ++counts[id];
    instance_index_.emplace(instances[row].id, instances_.size());
    instances_.push_back(std::move(instances[row]));
    positives_.push_back(std::move(pos));
  }
  std::sort(labels.begin(), labels.end(),
            [](const Label& a, const Label& b) { return a.id < b.id; });
  for (auto& label : labels) {
    if (counts.count(label.id) == 0) {
      ++local.dropped_labels;
      continue;
    }
    label_index_.emplace(label.id, labels_.size());
    name_index_.emplace(label.name, label.id);
    labels_.push_back(std::move(label));
  }
  if (instances_.empty() || labels_.empty()) {
    throw DataError("catalog is empty after cleaning");
  }
  if (local.dropped_instances > 0 || local.dropped_labels > 0) {
    spdlog::info("catalog cleaning dropped {} instances and {} labels",
                 local.dropped_instances, local.dropped_labels);
  }
  if (cleaning != nullptr) *cleaning = local;
}

std::size_t Catalog::n_positives() const {
  std::size_t total = 0;
  for (const auto& row : positives_) total += row.size();
  return total;
}

std::optional<std::size_t> Catalog::find_instance(std::string_view id) const {
  auto it = instance_index_.find(std::string(id));
  if (it == instance_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<LabelId> Catalog::find_label(std::string_view name) const {
  auto it = name_index_.find(std::string(name));
  if (it == name_index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Catalog::label_name(LabelId id) const {
  auto it = label_index_.find(id);
  if (it == label_index_.end()) {
    throw DataError("unknown label id: " + std::to_string(id));
  }
  return labels_[it->second].name;
}

std::vector<LabelId> Catalog::label_ids() const {
  std::vector<LabelId> ids;
  ids.reserve(labels_.size());
  for (const auto& label : labels_) ids.push_back(label.id);
  return ids;
}

std::string Catalog::hash() const {
  Fingerprint fp;
  fp.add(static_cast<std::uint64_t>(labels_.size()));
  for (const auto& label : labels_) {
    fp.add(static_cast<std::uint64_t>(label.id)).add(label.name);
  }
  fp.add(static_cast<std::uint64_t>(instances_.size()));
  for (std::size_t row = 0; row < instances_.size(); ++row) {
    fp.add(instances_[row].id);
    fp.add(static_cast<std::uint64_t>(positives_[row].size()));
    for (LabelId id : positives_[row]) fp.add(static_cast<std::uint64_t>(id));
  }
  return fp.hex();
}

Catalog Catalog::restricted_to(const std::set<LabelId>& keep,
                               Cleaning* cleaning) const {
  std::vector<std::vector<LabelId>> positives;
  positives.reserve(positives_.size());
  for (const auto& row : positives_) {
    std::vector<LabelId> kept;
    for (LabelId id : row) {
      if (keep.count(id) != 0) kept.push_back(id);
    }
    positives.push_back(std::move(kept));
  }
  return Catalog(instances_, labels_, std::move(positives), cleaning);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line,
                                        std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) {
    throw DataError("line " + std::to_string(line_no) + ": unterminated quote");
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<CatalogRecord> parse_jsonl(std::string_view text) {
  std::vector<CatalogRecord> records;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (is_blank(line)) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw DataError(where + "expected a JSON object");
    if (!obj.contains("id") || !obj["id"].is_string()) {
      throw DataError(where + "missing string field \"id\"");
    }
    if (!obj.contains("labels") || !obj["labels"].is_array()) {
      throw DataError(where + "missing array field \"labels\"");
    }
    CatalogRecord record;
    record.id = obj["id"].get<std::string>();
    for (const auto& label : obj["labels"]) {
      if (!label.is_string()) throw DataError(where + "non-string label");
      record.labels.push_back(label.get<std::string>());
    }
    if (obj.contains("audio") && !obj["audio"].is_null()) {
      if (!obj["audio"].is_string()) {
        throw DataError(where + "field \"audio\" must be a string");
      }
      record.audio = obj["audio"].get<std::string>();
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<CatalogRecord> parse_csv(std::string_view text) {
  std::vector<CatalogRecord> records;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (is_blank(line)) continue;
    auto fields = split_csv_line(line, line_no);
    if (!header_seen) {
      if (fields.size() < 2 || fields[0] != "id" || fields[1] != "labels" ||
          (fields.size() >= 3 && fields[2] != "audio") || fields.size() > 3) {
        throw DataError("line " + std::to_string(line_no) +
                        ": expected header id,labels,audio");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() < 2 || fields.size() > 3) {
      throw DataError("line " + std::to_string(line_no) +
                      ": expected 2 or 3 fields, got " +
                      std::to_string(fields.size()));
    }
    CatalogRecord record;
    record.id = fields[0];
    std::size_t start = 0;
    const std::string& labels = fields[1];
    while (start <= labels.size()) {
      std::size_t bar = labels.find('|', start);
      if (bar == std::string::npos) bar = labels.size();
      if (bar > start) record.labels.push_back(labels.substr(start, bar - start));
      start = bar + 1;
    }
    if (fields.size() == 3 && !fields[2].empty()) record.audio = fields[2];
    records.push_back(std::move(record));
  }
  if (!header_seen) throw DataError("CSV catalog has no header");
  return records;
}

}  // namespace

Catalog parse_catalog(std::string_view text, CatalogFormat format) {
  const auto records =
      format == CatalogFormat::kJsonl ? parse_jsonl(text) : parse_csv(text);
  return Catalog::from_records(records);
}

Catalog load_catalog(const std::string& path, CatalogFormat format) {
  return parse_catalog(read_file(path), format);
}

CatalogFormat catalog_format_from_path(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) {
    return CatalogFormat::kCsv;
  }
  return CatalogFormat::kJsonl;
}

std::string serialize_catalog(const Catalog& catalog) {
  std::string out;
  for (std::size_t row = 0; row < catalog.n_instances(); ++row) {
    const auto& instance = catalog.instances()[row];
    json obj;
    obj["id"] = instance.id;
    json labels = json::array();
    for (LabelId id : catalog.positives(row)) {
      labels.push_back(catalog.label_name(id));
    }
    obj["labels"] = std::move(labels);
    if (instance.audio) obj["audio"] = *instance.audio;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_catalog(const Catalog& catalog, const std::string& path) {
  write_file(path, serialize_catalog(catalog));
}

FilterResult filter_labels(const Catalog& catalog,
                           const std::set<std::string>& allowlist) {
  if (allowlist.empty()) throw DataError("label allowlist is empty");
  std::set<LabelId> keep;
  for (const auto& label : catalog.labels()) {
    if (allowlist.count(label.name) != 0) keep.insert(label.id);
  }
  if (keep.empty()) {
    throw DataError("label allowlist matches no catalog label");
  }
  FilterResult result;
  Catalog::Cleaning cleaning;
  result.catalog = catalog.restricted_to(keep, &cleaning);
  result.dropped_labels = catalog.n_labels() - result.catalog.n_labels();
  result.dropped_instances = cleaning.dropped_instances;
  return result;
}

std::set<std::string> load_allowlist(const std::string& path) {
  std::set<std::string> names;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const std::string name = normalize_label(line);
    if (!name.empty()) names.insert(name);
  }
  return names;
}

CatalogStats catalog_stats(const Catalog& catalog) {
  CatalogStats stats;
  stats.n_instances = catalog.n_instances();
  stats.n_labels = catalog.n_labels();
  for (const auto& label : catalog.labels()) stats.per_label_counts[label.id] = 0;
  std::size_t total = 0;
  for (std::size_t row = 0; row < catalog.n_instances(); ++row) {
    for (LabelId id : catalog.positives(row)) ++stats.per_label_counts[id];
    total += catalog.positives(row).size();
  }
  stats.label_cardinality =
      stats.n_instances == 0
          ? 0.0
          : static_cast<double>(total) / static_cast<double>(stats.n_instances);
  return stats;
}

}  // namespace zstag
