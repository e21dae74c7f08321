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

#include <cmath>

#include <gtest/gtest.h>

#include "metric_oracle.h"

namespace zstag {
namespace {

using testing::oracle_ap;
using testing::oracle_auc;
using testing::oracle_precision_at;
using testing::random_prediction;

RankedPrediction pred(std::vector<double> s, std::vector<bool> r) {
  return {std::move(s), std::move(r)};
}

TEST(RocAuc, Examples) {
  EXPECT_EQ(roc_auc(pred({0.9, 0.1, 0.8}, {true, false, false})), 1.0);
  EXPECT_EQ(roc_auc(pred({0.2, 0.8, 0.5}, {true, true, false})), 0.5);
  EXPECT_EQ(roc_auc(pred({0.3, 0.3, 0.3, 0.3}, {true, false, true, false})),
            0.5);
  EXPECT_EQ(roc_auc(pred({0.1, 0.9}, {true, false})), 0.0);
}

TEST(RocAuc, NeedsBothClasses) {
  EXPECT_THROW(roc_auc(pred({0.1, 0.2}, {true, true})), DataError);
  EXPECT_THROW(roc_auc(pred({0.1, 0.2}, {false, false})), DataError);
  EXPECT_THROW(roc_auc(pred({0.1}, {true, false})), DataError);
}

TEST(AveragePrecision, Examples) {
  EXPECT_NEAR(average_precision(pred({0.9, 0.5, 0.2}, {true, false, true})),
              (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(average_precision(pred({0.3, 0.2, 0.9}, {true, true, true})), 1.0);
  EXPECT_DOUBLE_EQ(
      average_precision(pred({0.1, 0.5, 0.6, 0.7, 0.9},
                             {true, false, false, false, false})),
      0.2);
  EXPECT_THROW(average_precision(pred({0.1}, {false})), DataError);
}

TEST(AveragePrecision, TiesFallBackToPosition) {
  // Equal scores: the earlier candidate ranks first.
  EXPECT_EQ(average_precision(pred({0.5, 0.5}, {true, false})), 1.0);
  EXPECT_EQ(average_precision(pred({0.5, 0.5}, {false, true})), 0.5);
}

TEST(PrecisionAtK, Examples) {
  const RankedPrediction p = pred({0.9, 0.8, 0.1}, {false, true, false});
  EXPECT_EQ(precision_at_k(p, 2), 0.5);
  EXPECT_EQ(precision_at_k(pred({0.9, 0.1}, {true, false}), 1), 1.0);
  // Denominator stays k past the candidate count.
  EXPECT_EQ(precision_at_k(pred({0.9, 0.1}, {true, true}), 5), 0.4);
  EXPECT_EQ(precision_at_k(pred({0.5, 0.5}, {false, true}), 1), 0.0);
  EXPECT_THROW(precision_at_k(p, 0), ConfigError);
}

TEST(RankingOrder, DescendingScoreThenPosition) {
  EXPECT_EQ(ranking_order({0.1, 0.7, 0.7, 0.9}),
            (std::vector<std::size_t>{3, 1, 2, 0}));
  EXPECT_TRUE(ranking_order({}).empty());
}

TEST(Metrics, MatchBruteForceEnumeration) {
  Rng rng(0);
  for (int trial = 0; trial < 400; ++trial) {
    const RankedPrediction p = random_prediction(rng, 50, trial % 2 == 0);
    EXPECT_NEAR(roc_auc(p), oracle_auc(p), 1e-12);
    EXPECT_NEAR(average_precision(p), oracle_ap(p), 1e-12);
    for (std::size_t k : {1u, 3u, 10u, 60u}) {
      EXPECT_NEAR(precision_at_k(p, k), oracle_precision_at(p, k), 1e-12);
    }
  }
}

TEST(Metrics, BoundedInUnitInterval) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const RankedPrediction p = random_prediction(rng, 30, trial % 3 == 0);
    for (double v : {roc_auc(p), average_precision(p), precision_at_k(p, 5)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, ReversedRankingComplementsAuc) {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    RankedPrediction p = random_prediction(rng, 40, false);
    const double auc = roc_auc(p);
    for (double& s : p.scores) s = -s;
    EXPECT_NEAR(roc_auc(p), 1.0 - auc, 1e-12);
  }
}

TEST(Metrics, InvariantUnderIncreasingTransforms) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const RankedPrediction p = random_prediction(rng, 40, trial % 2 == 1);
    RankedPrediction q = p;
    for (double& s : q.scores) s = std::exp(s) + 5.0;
    EXPECT_EQ(roc_auc(p), roc_auc(q));
    EXPECT_EQ(average_precision(p), average_precision(q));
    EXPECT_EQ(precision_at_k(p, 5), precision_at_k(q, 5));
  }
}

}  // namespace
}  // namespace zstag
