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

// Annotation and retrieval evaluation over setup views.
//
// Annotation ranks the view's labels for every view instance and reports
// AUC-i, MAP-i and P@K. Retrieval ranks the view's instances for every view
// label and reports AUC-l and MAP-l. Each metric keeps its own inclusion
// rule: AUC needs a positive and a negative, AP a positive, P@K nothing.
// Retrieval skips labels without both a positive and a negative instance.

#ifndef ZSTAG_EVALUATION_H_
#define ZSTAG_EVALUATION_H_

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "zstag/audio.h"
#include "zstag/model.h"
#include "zstag/side_info.h"
#include "zstag/split.h"

namespace zstag {

// Scores of view instances (rows, view order) against view labels (columns,
// ascending id).
struct ScoreMatrix {
  std::vector<std::string> instance_ids;
  std::vector<LabelId> label_ids;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const {
    return values[row * label_ids.size() + col];
  }
};

struct MetricValue {
  std::string name;
  double value = 0.0;        // NaN when no subject qualified
  std::size_t included = 0;  // subjects averaged
  std::size_t excluded = 0;
};

struct EvalReport {
  std::string task;  // "annotation" or "retrieval"
  std::string train_setup;
  std::string test_setup;
  std::size_t n_subjects = 0;
  std::vector<MetricValue> metrics;

  // Throws DataError for an unknown metric name.
  const MetricValue& metric(const std::string& name) const;
};

using TrackEmbeddings = std::map<std::string, std::vector<double>>;

// Track-level embeddings of `ids`.
TrackEmbeddings embed_tracks(const ModelParams& params,
                             const FeatureStore& features,
                             const std::vector<std::string>& ids);

// Cosine relevance of each view instance to each view label.
ScoreMatrix embedding_scores(const ModelParams& params,
                             const SemanticTable& table,
                             const TrackEmbeddings& tracks,
                             const SetupView& view);

// Classifier outputs for the view; every view label must be a classifier
// output.
ScoreMatrix classifier_score_matrix(const ModelParams& params,
                                    const TrackEmbeddings& tracks,
                                    const SetupView& view);

EvalReport annotation_report(const SetupView& view, const ScoreMatrix& scores,
                             const std::vector<std::size_t>& ks);

EvalReport retrieval_report(const SetupView& view, const ScoreMatrix& scores);

// Require an annotation (resp. retrieval) view, then embed, score and
// report.
EvalReport evaluate_annotation(const ModelParams& params,
                               const FeatureStore& features,
                               const SemanticTable& table,
                               const SetupView& view,
                               const std::vector<std::size_t>& ks);
EvalReport evaluate_retrieval(const ModelParams& params,
                              const FeatureStore& features,
                              const SemanticTable& table,
                              const SetupView& view);

// Rows (train_setup, test_setup) and one column per metric of the first
// report. Values use fixed 6-decimal formatting.
std::string reports_csv(const std::vector<EvalReport>& reports);
std::string reports_json(const std::vector<EvalReport>& reports);

}  // namespace zstag

#endif  // ZSTAG_EVALUATION_H_
