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

#include "zstag/side_info.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "zstag/common.h"

namespace zstag {

using json = nlohmann::json;

SemanticTable::SemanticTable(SemanticKind kind, std::size_t dim,
                             std::vector<LabelId> ids,
                             std::vector<std::string> names,
                             std::vector<double> values,
                             std::optional<Standardization> standardization)
    : kind_(kind),
      dim_(dim),
      ids_(std::move(ids)),
      names_(std::move(names)),
      values_(std::move(values)),
      standardization_(std::move(standardization)) {
  if (dim_ == 0) throw DataError("semantic table dimension must be positive");
  if (names_.size() != ids_.size() || values_.size() != ids_.size() * dim_) {
    throw DataError("semantic table shape mismatch");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw DataError("semantic table has duplicate label id " +
                      std::to_string(ids_[i]));
    }
  }
}

std::optional<std::size_t> SemanticTable::find_name(
    const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::span<const double> SemanticTable::vector_for(LabelId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw DataError("semantic table has no vector for label id " +
                    std::to_string(id));
  }
  return row(it->second);
}

SemanticTable SemanticTable::aligned_to(const Catalog& catalog) const {
  std::unordered_map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < names_.size(); ++i) by_name.emplace(names_[i], i);
  std::vector<LabelId> ids;
  std::vector<std::string> names;
  std::vector<double> values;
  for (const auto& label : catalog.labels()) {
    auto it = by_name.find(label.name);
    if (it == by_name.end()) {
      throw DataError("semantic table has no vector for label " + label.name);
    }
    ids.push_back(label.id);
    names.push_back(label.name);
    const auto r = row(it->second);
    values.insert(values.end(), r.begin(), r.end());
  }
  return SemanticTable(kind_, dim_, std::move(ids), std::move(names),
                       std::move(values), standardization_);
}

std::string semantic_kind_name(SemanticKind kind) {
  return kind == SemanticKind::kAttribute ? "attribute" : "word";
}

namespace {

double parse_double(std::string_view text, const std::string& where) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw DataError(where + "malformed number '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

LikelihoodAnnotations parse_likelihoods(const std::string& text) {
  LikelihoodAnnotations out;
  std::set<std::string> vocabulary;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (!header) {
      if (fields != std::vector<std::string>{"id", "attribute", "likelihood"}) {
        throw DataError(where + "expected header id,attribute,likelihood");
      }
      header = true;
      continue;
    }
    if (fields.size() != 3) throw DataError(where + "expected 3 fields");
    const double p = parse_double(fields[2], where);
    if (p < 0.0 || p > 1.0) {
      throw DataError(where + "likelihood outside [0, 1]");
    }
    vocabulary.insert(fields[1]);
    out.rows.push_back({fields[0], fields[1], p});
  }
  if (!header) throw DataError("likelihood CSV has no header");
  out.vocabulary.assign(vocabulary.begin(), vocabulary.end());
  return out;
}

LikelihoodAnnotations load_likelihoods(const std::string& path) {
  return parse_likelihoods(read_file(path));
}

std::vector<double> instance_attribute_vector(
    std::span<const AttributeLikelihood> rows,
    const std::vector<std::string>& vocabulary) {
  std::vector<double> out(2 * vocabulary.size(), 0.0);
  std::vector<char> seen(vocabulary.size(), 0);
  for (const auto& row : rows) {
    auto it = std::find(vocabulary.begin(), vocabulary.end(), row.attribute);
    if (it == vocabulary.end()) {
      throw DataError("unknown attribute: " + row.attribute);
    }
    const auto k = static_cast<std::size_t>(it - vocabulary.begin());
    if (seen[k]) throw DataError("attribute listed twice: " + row.attribute);
    seen[k] = 1;
    if (row.likelihood > 0.5) {
      out[2 * k] = 1.0;
    } else if (row.likelihood < 0.5) {
      out[2 * k + 1] = 1.0;
    }
  }
  return out;
}

Standardization standardize_columns(std::vector<double>& values,
                                    std::size_t n, std::size_t dim) {
  Standardization stats;
  stats.mean.assign(dim, 0.0);
  stats.std.assign(dim, 0.0);
  if (n == 0) return stats;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) stats.mean[d] += values[i * dim + d];
  }
  for (std::size_t d = 0; d < dim; ++d) stats.mean[d] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double c = values[i * dim + d] - stats.mean[d];
      stats.std[d] += c * c;
    }
  }
  std::size_t constant = 0;
  for (std::size_t d = 0; d < dim; ++d) {
    stats.std[d] = std::sqrt(stats.std[d] / static_cast<double>(n));
    // Relative threshold: accumulated integer counts are either equal or
    // differ by at least one.
    if (stats.std[d] <= 1e-12 * (1.0 + std::abs(stats.mean[d]))) {
      stats.std[d] = 0.0;
      ++constant;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      double& v = values[i * dim + d];
      v -= stats.mean[d];
      v = stats.std[d] > 0.0 ? v / stats.std[d] : 0.0;
    }
  }
  if (constant > 0) {
    spdlog::warn("standardization: {} of {} dimensions are constant", constant,
                 dim);
  }
  return stats;
}

SemanticTable build_attribute_table(const LikelihoodAnnotations& likelihoods,
                                    const Catalog& catalog) {
  const std::size_t m = likelihoods.vocabulary.size();
  if (m == 0) throw DataError("attribute vocabulary is empty");
  const std::size_t dim = 2 * m;

  std::unordered_map<std::string, std::vector<AttributeLikelihood>> by_instance;
  for (const auto& row : likelihoods.rows) {
    by_instance[row.instance_id].push_back({row.attribute, row.likelihood});
  }

  std::map<LabelId, std::vector<double>> sums;
  std::map<LabelId, std::size_t> contributors;
  for (const auto& label : catalog.labels()) {
    sums[label.id].assign(dim, 0.0);
    contributors[label.id] = 0;
  }
  for (std::size_t r = 0; r < catalog.n_instances(); ++r) {
    auto it = by_instance.find(catalog.instances()[r].id);
    std::vector<double> vec =
        it == by_instance.end()
            ? std::vector<double>(dim, 0.0)
            : instance_attribute_vector(it->second, likelihoods.vocabulary);
    for (LabelId id : catalog.positives(r)) {
      auto& sum = sums[id];
      for (std::size_t d = 0; d < dim; ++d) sum[d] += vec[d];
      ++contributors[id];
    }
  }

  std::vector<LabelId> ids;
  std::vector<std::string> names;
  std::vector<double> values;
  for (const auto& label : catalog.labels()) {
    if (contributors[label.id] == 0) {
      throw DataError("label " + label.name + " has no contributing instance");
    }
    ids.push_back(label.id);
    names.push_back(label.name);
    values.insert(values.end(), sums[label.id].begin(), sums[label.id].end());
  }
  auto stats = standardize_columns(values, ids.size(), dim);
  return SemanticTable(SemanticKind::kAttribute, dim, std::move(ids),
                       std::move(names), std::move(values), std::move(stats));
}

WordVectors parse_word_vectors(const std::string& text,
                               const std::set<std::string>* wanted) {
  WordVectors out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  std::size_t entries = 0;
  std::vector<double> values;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";

    std::size_t pos = line.find(' ');
    if (pos == std::string_view::npos || pos == 0) {
      throw DataError(where + "expected 'word v1 ... vd'");
    }
    std::string word(line.substr(0, pos));
    values.clear();
    while (pos < line.size()) {
      while (pos < line.size() && line[pos] == ' ') ++pos;
      if (pos >= line.size()) break;
      std::size_t next = line.find(' ', pos);
      if (next == std::string_view::npos) next = line.size();
      values.push_back(parse_double(line.substr(pos, next - pos), where));
      pos = next;
    }
    if (values.empty()) throw DataError(where + "entry has no values");
    if (out.dim == 0) {
      out.dim = values.size();
    } else if (values.size() != out.dim) {
      throw DataError(where + "inconsistent dimension " +
                      std::to_string(values.size()) + " (expected " +
                      std::to_string(out.dim) + ")");
    }
    ++entries;
    if (wanted != nullptr && wanted->count(word) == 0) continue;
    out.vectors.emplace(std::move(word), values);
  }
  if (entries == 0) throw DataError("word-vector file is empty");
  return out;
}

WordVectors load_word_vectors(const std::string& path,
                              const std::set<std::string>* wanted) {
  return parse_word_vectors(read_file(path), wanted);
}

WordTableResult build_word_table(const Catalog& catalog, const WordVectors& raw,
                                 bool standardize) {
  if (raw.vectors.empty() || raw.dim == 0) {
    throw DataError("word-vector table is empty");
  }
  WordTableResult result;
  std::vector<LabelId> ids;
  std::vector<std::string> names;
  std::vector<double> values;
  for (const auto& label : catalog.labels()) {
    auto it = raw.vectors.find(label.name);
    if (it == raw.vectors.end()) {
      result.dropped.push_back(label.name);
      continue;
    }
    ids.push_back(label.id);
    names.push_back(label.name);
    values.insert(values.end(), it->second.begin(), it->second.end());
  }
  if (ids.empty()) {
    throw DataError("no catalog label has a word vector");
  }
  std::optional<Standardization> stats;
  if (standardize) stats = standardize_columns(values, ids.size(), raw.dim);
  result.table = SemanticTable(SemanticKind::kWord, raw.dim, std::move(ids),
                               std::move(names), std::move(values),
                               std::move(stats));
  if (!result.dropped.empty()) {
    spdlog::info("{} labels have no word vector", result.dropped.size());
  }
  return result;
}

double cosine_similarity(std::span<const double> a,
                         std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("cosine: dimension mismatch");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<ScoredLabel> nearest_labels(const SemanticTable& table,
                                        std::span<const double> query,
                                        std::size_t k) {
  if (query.size() != table.dim()) {
    throw DataError("query dimension " + std::to_string(query.size()) +
                    " does not match table dimension " +
                    std::to_string(table.dim()));
  }
  std::vector<ScoredLabel> scored;
  scored.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    scored.push_back({table.label_ids()[i], table.names()[i],
                      cosine_similarity(table.row(i), query)});
  }
  std::sort(scored.begin(), scored.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.name < b.name;
            });
  scored.resize(std::min(k, scored.size()));
  return scored;
}

void save_table(const SemanticTable& table, const std::string& stem) {
  json header;
  header["kind"] = semantic_kind_name(table.kind());
  header["dim"] = table.dim();
  header["labels"] = table.names();
  header["label_ids"] = table.label_ids();
  header["matrix"] =
      std::filesystem::path(stem + ".f32").filename().string();
  if (table.standardization()) {
    header["standardization"] = {{"mean", table.standardization()->mean},
                                 {"std", table.standardization()->std}};
  } else {
    header["standardization"] = nullptr;
  }
  write_file(stem + ".json", header.dump(1) + "\n");
  std::string blob;
  blob.reserve(table.values().size() * 4);
  for (double v : table.values()) append_f32(blob, static_cast<float>(v));
  write_file(stem + ".f32", blob);
}

SemanticTable load_table(const std::string& path) {
  std::string json_path = path;
  if (json_path.size() < 5 ||
      json_path.compare(json_path.size() - 5, 5, ".json") != 0) {
    json_path += ".json";
  }
  json header;
  try {
    header = json::parse(read_file(json_path));
  } catch (const json::parse_error& e) {
    throw DataError("malformed semantic table header " + json_path + ": " +
                    e.what());
  }
  try {
    const std::string kind_name = header.at("kind").get<std::string>();
    SemanticKind kind;
    if (kind_name == "attribute") {
      kind = SemanticKind::kAttribute;
    } else if (kind_name == "word") {
      kind = SemanticKind::kWord;
    } else {
      throw DataError("unknown semantic table kind " + kind_name);
    }
    const auto dim = header.at("dim").get<std::size_t>();
    auto names = header.at("labels").get<std::vector<std::string>>();
    auto ids = header.at("label_ids").get<std::vector<LabelId>>();
    const auto matrix_path =
        (std::filesystem::path(json_path).parent_path() /
         header.at("matrix").get<std::string>())
            .string();
    const std::string blob = read_file(matrix_path);
    if (blob.size() != names.size() * dim * 4) {
      throw DataError("semantic table matrix has wrong size: " + matrix_path);
    }
    std::vector<double> values(names.size() * dim);
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = read_f32(blob, 4 * i);
    }
    std::optional<Standardization> stats;
    if (header.contains("standardization") &&
        !header["standardization"].is_null()) {
      stats = Standardization{
          header["standardization"].at("mean").get<std::vector<double>>(),
          header["standardization"].at("std").get<std::vector<double>>()};
    }
    return SemanticTable(kind, dim, std::move(ids), std::move(names),
                         std::move(values), std::move(stats));
  } catch (const json::exception& e) {
    throw DataError("invalid semantic table header " + json_path + ": " +
                    e.what());
  }
}

}  // namespace zstag
