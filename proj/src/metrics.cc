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

#include "zstag/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "zstag/common.h"

namespace zstag {

namespace {

void check(const RankedPrediction& prediction) {
  if (prediction.scores.size() != prediction.relevant.size()) {
    throw DataError("prediction has mismatched scores and relevance flags");
  }
  for (double s : prediction.scores) {
    if (!std::isfinite(s)) throw NumericalError("non-finite prediction score");
  }
}

}  // namespace

std::size_t RankedPrediction::n_positive() const {
  return static_cast<std::size_t>(
      std::count(relevant.begin(), relevant.end(), true));
}

std::vector<std::size_t> ranking_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  return order;
}

double roc_auc(const RankedPrediction& prediction) {
  check(prediction);
  const std::size_t n_pos = prediction.n_positive();
  const std::size_t n_neg = prediction.n_negative();
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("AUC needs at least one positive and one negative");
  }
  // Rank-sum with midranks for ties.
  const std::size_t n = prediction.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return prediction.scores[a] < prediction.scores[b];
  });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && prediction.scores[order[j]] == prediction.scores[order[i]]) {
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (prediction.relevant[order[k]]) rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(n_pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(n_neg));
}

double average_precision(const RankedPrediction& prediction) {
  check(prediction);
  const std::size_t n_pos = prediction.n_positive();
  if (n_pos == 0) throw DataError("average precision needs a positive");
  const auto order = ranking_order(prediction.scores);
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (prediction.relevant[order[r]]) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return total / static_cast<double>(n_pos);
}

double precision_at_k(const RankedPrediction& prediction, std::size_t k) {
  check(prediction);
  if (k == 0) throw ConfigError("precision@k needs k >= 1");
  const auto order = ranking_order(prediction.scores);
  const std::size_t top = std::min(k, order.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < top; ++r) {
    if (prediction.relevant[order[r]]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace zstag
