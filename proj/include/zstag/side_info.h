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

// Label side information: per-label semantic vectors built either from
// instance-level attribute likelihoods or from a pretrained word-vector file.

#ifndef ZSTAG_SIDE_INFO_H_
#define ZSTAG_SIDE_INFO_H_

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "zstag/dataset.h"

namespace zstag {

enum class SemanticKind { kAttribute, kWord };

struct Standardization {
  std::vector<double> mean;
  // Population std per dimension. Zero marks a constant dimension, which is
  // only mean-centered.
  std::vector<double> std;
};

class SemanticTable {
 public:
  SemanticTable() = default;
  SemanticTable(SemanticKind kind, std::size_t dim, std::vector<LabelId> ids,
                std::vector<std::string> names, std::vector<double> values,
                std::optional<Standardization> standardization = std::nullopt);

  SemanticKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<LabelId>& label_ids() const { return ids_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& values() const { return values_; }
  const std::optional<Standardization>& standardization() const {
    return standardization_;
  }

  std::span<const double> row(std::size_t index) const {
    return {values_.data() + index * dim_, dim_};
  }
  bool contains(LabelId id) const { return index_.count(id) != 0; }
  std::optional<std::size_t> find_name(const std::string& name) const;
  // Throws DataError if the label has no vector.
  std::span<const double> vector_for(LabelId id) const;

  // Re-keys rows by name onto `catalog` label ids. Rows whose name is not in
  // the catalog are dropped; a catalog label without a row is an error.
  SemanticTable aligned_to(const Catalog& catalog) const;

 private:
  SemanticKind kind_ = SemanticKind::kWord;
  std::size_t dim_ = 0;
  std::vector<LabelId> ids_;
  std::vector<std::string> names_;
  std::vector<double> values_;
  std::optional<Standardization> standardization_;
  std::unordered_map<LabelId, std::size_t> index_;
};

struct AttributeLikelihood {
  std::string attribute;
  double likelihood;
};

struct LikelihoodRow {
  std::string instance_id;
  std::string attribute;
  double likelihood;
};

struct LikelihoodAnnotations {
  std::vector<std::string> vocabulary;  // sorted, unique
  std::vector<LikelihoodRow> rows;
};

// CSV with header id,attribute,likelihood.
LikelihoodAnnotations load_likelihoods(const std::string& path);
LikelihoodAnnotations parse_likelihoods(const std::string& text);

// Length 2m, interleaved [a1+, a1-, a2+, a2-, ...]. Slot 2k is set when
// attribute k has likelihood > 0.5, slot 2k+1 when < 0.5; exactly 0.5 means
// unannotated and sets neither.
std::vector<double> instance_attribute_vector(
    std::span<const AttributeLikelihood> rows,
    const std::vector<std::string>& vocabulary);

// Sums the attribute vectors of each label's positive instances, then
// standardizes every dimension across labels.
SemanticTable build_attribute_table(const LikelihoodAnnotations& likelihoods,
                                    const Catalog& catalog);

// Column-wise standardization of a row-major n x dim matrix, in place.
Standardization standardize_columns(std::vector<double>& values,
                                    std::size_t n, std::size_t dim);

struct WordVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

// Text format, one "word v1 ... vd" entry per line. With `wanted`, only those
// words are kept (the file is still validated in full).
WordVectors load_word_vectors(const std::string& path,
                              const std::set<std::string>* wanted = nullptr);
WordVectors parse_word_vectors(const std::string& text,
                               const std::set<std::string>* wanted = nullptr);

struct WordTableResult {
  SemanticTable table;
  std::vector<std::string> dropped;  // label names without a vector
};

WordTableResult build_word_table(const Catalog& catalog,
                                 const WordVectors& raw,
                                 bool standardize = false);

struct ScoredLabel {
  LabelId label;
  std::string name;
  double score;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Descending cosine, ties by name ascending. k is clamped to the table size.
std::vector<ScoredLabel> nearest_labels(const SemanticTable& table,
                                        std::span<const double> query,
                                        std::size_t k);

// Writes <stem>.json (kind, dim, labels, standardization) and <stem>.f32.
void save_table(const SemanticTable& table, const std::string& stem);
// Accepts the stem or the .json path.
SemanticTable load_table(const std::string& path);

std::string semantic_kind_name(SemanticKind kind);

}  // namespace zstag

#endif  // ZSTAG_SIDE_INFO_H_
