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

// Ranking metrics for one subject (an instance when annotating, a label when
// retrieving). Candidates are listed in ascending object-id order; that
// position breaks score ties for AP and P@K. AUC gives tied pairs half
// credit.

#ifndef ZSTAG_METRICS_H_
#define ZSTAG_METRICS_H_

#include <cstddef>
#include <vector>

namespace zstag {

struct RankedPrediction {
  std::vector<double> scores;
  std::vector<bool> relevant;

  std::size_t size() const { return scores.size(); }
  std::size_t n_positive() const;
  std::size_t n_negative() const { return size() - n_positive(); }
};

// Candidate positions sorted by descending score, ties by position.
std::vector<std::size_t> ranking_order(const std::vector<double>& scores);

// Mann-Whitney AUC. Throws DataError without at least one positive and one
// negative.
double roc_auc(const RankedPrediction& prediction);

// Mean over positives of the precision at each positive's rank. Throws
// DataError without a positive.
double average_precision(const RankedPrediction& prediction);

// Positives among the first k ranked candidates, divided by k even when
// fewer than k candidates exist.
double precision_at_k(const RankedPrediction& prediction, std::size_t k);

}  // namespace zstag

#endif  // ZSTAG_METRICS_H_
