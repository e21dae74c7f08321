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

#include "zstag/evaluation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "zstag/metrics.h"
#include "zstag/trainer.h"

namespace zstag {

using json = nlohmann::json;

namespace {

struct Accumulator {
  std::string name;
  double sum = 0.0;
  std::size_t included = 0;
  std::size_t excluded = 0;

  void add(double v) {
    sum += v;
    ++included;
  }
  MetricValue finish() const {
    MetricValue m;
    m.name = name;
    m.included = included;
    m.excluded = excluded;
    m.value = included == 0 ? std::numeric_limits<double>::quiet_NaN()
                            : sum / static_cast<double>(included);
    return m;
  }
};

void check_shape(const SetupView& view, const ScoreMatrix& scores) {
  if (scores.instance_ids != view.instance_ids ||
      scores.label_ids != view.label_ids ||
      scores.values.size() != view.instance_ids.size() * view.label_ids.size()) {
    throw DataError("score matrix does not match view " + view.name());
  }
}

std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

const MetricValue& EvalReport::metric(const std::string& name) const {
  for (const auto& m : metrics) {
    if (m.name == name) return m;
  }
  throw DataError("report has no metric " + name);
}

TrackEmbeddings embed_tracks(const ModelParams& params,
                             const FeatureStore& features,
                             const std::vector<std::string>& ids) {
  TrackEmbeddings out;
  for (const auto& id : ids) {
    if (out.count(id) != 0) continue;
    const auto it = features.find(id);
    if (it == features.end()) throw DataError("no features for instance " + id);
    out.emplace(id, track_embedding(params, it->second));
  }
  return out;
}

ScoreMatrix embedding_scores(const ModelParams& params,
                             const SemanticTable& table,
                             const TrackEmbeddings& tracks,
                             const SetupView& view) {
  const auto projected = project_labels(params, table, view.label_ids);
  ScoreMatrix scores;
  scores.instance_ids = view.instance_ids;
  scores.label_ids = view.label_ids;
  scores.values.reserve(view.instance_ids.size() * view.label_ids.size());
  for (const auto& id : view.instance_ids) {
    const auto it = tracks.find(id);
    if (it == tracks.end()) throw DataError("no embedding for instance " + id);
    for (LabelId label : view.label_ids) {
      scores.values.push_back(relevance(it->second, projected.at(label)));
    }
  }
  return scores;
}

ScoreMatrix classifier_score_matrix(const ModelParams& params,
                                    const TrackEmbeddings& tracks,
                                    const SetupView& view) {
  std::vector<std::size_t> columns;
  for (LabelId label : view.label_ids) {
    const auto it = std::find(params.class_labels.begin(),
                              params.class_labels.end(), label);
    if (it == params.class_labels.end()) {
      throw DataError("classifier has no output for label " +
                      std::to_string(label));
    }
    columns.push_back(static_cast<std::size_t>(it - params.class_labels.begin()));
  }
  ScoreMatrix scores;
  scores.instance_ids = view.instance_ids;
  scores.label_ids = view.label_ids;
  for (const auto& id : view.instance_ids) {
    const auto it = tracks.find(id);
    if (it == tracks.end()) throw DataError("no embedding for instance " + id);
    const auto out = classifier_scores(params, it->second);
    for (std::size_t c : columns) scores.values.push_back(out[c]);
  }
  return scores;
}

EvalReport annotation_report(const SetupView& view, const ScoreMatrix& scores,
                             const std::vector<std::size_t>& ks) {
  check_shape(view, scores);
  if (view.instance_ids.empty()) {
    throw DataError("annotation view " + view.name() + " has no instances");
  }
  Accumulator auc{"AUC-i"};
  Accumulator ap{"MAP-i"};
  std::vector<Accumulator> pk;
  for (std::size_t k : ks) pk.push_back({"P@" + std::to_string(k)});

  const std::size_t n_labels = view.label_ids.size();
  for (std::size_t i = 0; i < view.instance_ids.size(); ++i) {
    RankedPrediction pred;
    pred.scores.assign(scores.values.begin() + i * n_labels,
                       scores.values.begin() + (i + 1) * n_labels);
    pred.relevant.assign(n_labels, false);
    for (LabelId id : view.positives[i]) {
      const auto it =
          std::lower_bound(view.label_ids.begin(), view.label_ids.end(), id);
      pred.relevant[static_cast<std::size_t>(it - view.label_ids.begin())] =
          true;
    }
    const std::size_t n_pos = pred.n_positive();
    if (n_pos > 0 && n_pos < n_labels) {
      auc.add(roc_auc(pred));
    } else {
      ++auc.excluded;
    }
    if (n_pos > 0) {
      ap.add(average_precision(pred));
    } else {
      ++ap.excluded;
    }
    for (std::size_t j = 0; j < ks.size(); ++j) {
      pk[j].add(precision_at_k(pred, ks[j]));
    }
  }
  EvalReport report;
  report.task = "annotation";
  report.test_setup = view.name();
  report.n_subjects = view.instance_ids.size();
  report.metrics.push_back(auc.finish());
  report.metrics.push_back(ap.finish());
  for (const auto& acc : pk) report.metrics.push_back(acc.finish());
  if (auc.excluded > 0) {
    spdlog::debug("{}: {} instances excluded from AUC-i", view.name(),
                  auc.excluded);
  }
  return report;
}

EvalReport retrieval_report(const SetupView& view, const ScoreMatrix& scores) {
  check_shape(view, scores);
  // Candidates in ascending instance-id order.
  std::vector<std::size_t> rows(view.instance_ids.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    return view.instance_ids[a] < view.instance_ids[b];
  });
  const std::size_t n_labels = view.label_ids.size();
  Accumulator auc{"AUC-l"};
  Accumulator ap{"MAP-l"};
  for (std::size_t j = 0; j < n_labels; ++j) {
    const LabelId label = view.label_ids[j];
    RankedPrediction pred;
    pred.scores.reserve(rows.size());
    pred.relevant.reserve(rows.size());
    for (std::size_t r : rows) {
      pred.scores.push_back(scores.at(r, j));
      pred.relevant.push_back(std::binary_search(
          view.positives[r].begin(), view.positives[r].end(), label));
    }
    const std::size_t n_pos = pred.n_positive();
    if (n_pos == 0 || n_pos == pred.size()) {
      ++auc.excluded;
      ++ap.excluded;
      continue;
    }
    auc.add(roc_auc(pred));
    ap.add(average_precision(pred));
  }
  if (auc.included == 0) {
    throw DataError("retrieval view " + view.name() +
                    " has no label with both positive and negative instances");
  }
  if (auc.excluded > 0) {
    spdlog::info("{}: {} labels excluded (all-negative or all-positive)",
                 view.name(), auc.excluded);
  }
  EvalReport report;
  report.task = "retrieval";
  report.test_setup = view.name();
  report.n_subjects = n_labels;
  report.metrics.push_back(auc.finish());
  report.metrics.push_back(ap.finish());
  return report;
}

EvalReport evaluate_annotation(const ModelParams& params,
                               const FeatureStore& features,
                               const SemanticTable& table,
                               const SetupView& view,
                               const std::vector<std::size_t>& ks) {
  require_role(view, SetupRole::kAnnotation);
  const auto tracks = embed_tracks(params, features, view.instance_ids);
  return annotation_report(view, embedding_scores(params, table, tracks, view),
                           ks);
}

EvalReport evaluate_retrieval(const ModelParams& params,
                              const FeatureStore& features,
                              const SemanticTable& table,
                              const SetupView& view) {
  require_role(view, SetupRole::kRetrieval);
  const auto tracks = embed_tracks(params, features, view.instance_ids);
  return retrieval_report(view, embedding_scores(params, table, tracks, view));
}

std::string reports_csv(const std::vector<EvalReport>& reports) {
  std::string out = "train_setup,test_setup";
  if (!reports.empty()) {
    for (const auto& m : reports.front().metrics) out += "," + m.name;
  }
  out += '\n';
  for (const auto& r : reports) {
    out += r.train_setup + "," + r.test_setup;
    for (const auto& m : r.metrics) out += "," + format_value(m.value);
    out += '\n';
  }
  return out;
}

std::string reports_json(const std::vector<EvalReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    json metrics = json::object();
    json counts = json::object();
    for (const auto& m : r.metrics) {
      metrics[m.name] = std::isnan(m.value) ? json(nullptr) : json(m.value);
      counts[m.name] = {{"included", m.included}, {"excluded", m.excluded}};
    }
    arr.push_back({{"task", r.task},
                   {"train_setup", r.train_setup},
                   {"test_setup", r.test_setup},
                   {"n_subjects", r.n_subjects},
                   {"metrics", metrics},
                   {"counts", counts}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace zstag
