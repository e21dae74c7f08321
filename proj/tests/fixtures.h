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

// Hand-built fixtures shared by the unit tests and the acceptance binary.

#ifndef ZSTAG_TESTS_FIXTURES_H_
#define ZSTAG_TESTS_FIXTURES_H_

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "zstag/dataset.h"

namespace zstag::fixtures {

// Six songs, three genres, four instruments. Three likelihoods sit at exactly
// 0.5 and must leave both slots of their instrument empty.
inline const char* kAttributeCsv =
    "id,attribute,likelihood\n"
    "s1,guitar,0.9\n"
    "s1,drums,0.8\n"
    "s1,piano,0.2\n"
    "s2,guitar,0.7\n"
    "s2,voice,0.6\n"
    "s2,piano,0.5\n"
    "s3,piano,0.95\n"
    "s3,drums,0.4\n"
    "s3,guitar,0.5\n"
    "s4,piano,0.8\n"
    "s4,voice,0.1\n"
    "s5,voice,0.9\n"
    "s5,drums,0.7\n"
    "s5,guitar,0.3\n"
    "s6,voice,0.5\n"
    "s6,piano,0.6\n";

inline std::vector<CatalogRecord> attribute_records() {
  return {
      {"s1", {"rock"}, std::nullopt},        {"s2", {"rock", "pop"}, std::nullopt},
      {"s3", {"jazz"}, std::nullopt},        {"s4", {"jazz"}, std::nullopt},
      {"s5", {"pop"}, std::nullopt},         {"s6", {"pop", "jazz"}, std::nullopt},
  };
}

// Slots [drums+, drums-, guitar+, guitar-, piano+, piano-, voice+, voice-].
//   s1 [1,0,1,0,0,1,0,0]  s2 [0,0,1,0,0,0,1,0]  s3 [0,1,0,0,1,0,0,0]
//   s4 [0,0,0,0,1,0,0,1]  s5 [1,0,0,1,0,0,1,0]  s6 [0,0,0,0,1,0,0,0]
// Per-genre sums, worked out by hand from the rows above.
inline std::map<std::string, std::vector<double>> attribute_sums() {
  return {
      {"rock", {1, 0, 2, 0, 0, 1, 1, 0}},  // s1 + s2
      {"jazz", {0, 1, 0, 0, 3, 0, 0, 1}},  // s3 + s4 + s6
      {"pop", {1, 0, 1, 1, 1, 0, 2, 0}},   // s2 + s5 + s6
  };
}

// Column-wise z-scores over genres with the population standard deviation.
inline std::map<std::string, std::vector<double>> standardized(
    const std::map<std::string, std::vector<double>>& rows) {
  const std::size_t dim = rows.begin()->second.size();
  const double n = static_cast<double>(rows.size());
  std::map<std::string, std::vector<double>> out = rows;
  for (std::size_t d = 0; d < dim; ++d) {
    double mean = 0.0;
    for (const auto& [name, v] : rows) mean += v[d] / n;
    double var = 0.0;
    for (const auto& [name, v] : rows) var += (v[d] - mean) * (v[d] - mean) / n;
    for (auto& [name, v] : out) {
      v[d] = var > 0.0 ? (v[d] - mean) / std::sqrt(var) : 0.0;
    }
  }
  return out;
}

}  // namespace zstag::fixtures

#endif  // ZSTAG_TESTS_FIXTURES_H_
