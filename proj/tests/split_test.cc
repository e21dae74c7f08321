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

#include "zstag/split.h"

#include <algorithm>

#include <gtest/gtest.h>

#include "test_support.h"

namespace zstag {
namespace {

using testing::definitional_group;
using testing::Group;
using testing::manifest_violation;
using testing::random_catalog;
using testing::record;

// One instance per label, so every label survives cleaning.
Catalog catalog_with_labels(std::size_t n) {
  std::vector<CatalogRecord> records;
  for (std::size_t l = 0; l < n; ++l) {
    records.push_back(
        record("t" + std::to_string(l), {"tag" + std::to_string(l)}));
  }
  return Catalog::from_records(records);
}

// X = {g1, g2}, Y = {g3, g4}; i1:{g1}, i2:{g2,g3}, i3:{g4}, i4:{g1,g2}.
struct Fixture {
  Catalog catalog = Catalog::from_records(
      {record("i1", {"g1"}), record("i2", {"g2", "g3"}), record("i3", {"g4"}),
       record("i4", {"g1", "g2"})});
  LabelSplit split{{*catalog.find_label("g1"), *catalog.find_label("g2")},
                   {*catalog.find_label("g3"), *catalog.find_label("g4")}};
  SplitManifest manifest = partition_instances(catalog, split, 5);

  std::set<std::string> names(const std::vector<LabelId>& ids) const {
    std::set<std::string> out;
    for (LabelId id : ids) out.insert(catalog.label_name(id));
    return out;
  }
};

std::set<std::string> as_set(const std::vector<std::string>& v) {
  return {v.begin(), v.end()};
}

TEST(SplitLabels, CountsFromFraction) {
  const Catalog c157 = catalog_with_labels(157);
  const LabelSplit s = split_labels(c157, 32.0 / 157.0, 0);
  EXPECT_EQ(s.seen.size(), 125u);
  EXPECT_EQ(s.unseen.size(), 32u);

  const Catalog c1126 = catalog_with_labels(1126);
  const LabelSplit m = split_labels(c1126, 226.0 / 1126.0, 0);
  EXPECT_EQ(m.seen.size(), 900u);
  EXPECT_EQ(m.unseen.size(), 226u);
}

TEST(SplitLabels, DeterministicInSeed) {
  const Catalog c = catalog_with_labels(40);
  const LabelSplit a = split_labels(c, 0.25, 11);
  const LabelSplit b = split_labels(c, 0.25, 11);
  EXPECT_EQ(a.seen, b.seen);
  EXPECT_EQ(a.unseen, b.unseen);
  EXPECT_NE(split_labels(c, 0.25, 12).unseen, a.unseen);
}

TEST(SplitLabels, RoundsHalfUpAndKeepsBothSidesNonEmpty) {
  const Catalog c = catalog_with_labels(10);
  EXPECT_EQ(split_labels(c, 0.25, 0).unseen.size(), 3u);  // 2.5 -> 3
  EXPECT_EQ(split_labels(c, 0.01, 0).unseen.size(), 1u);
  EXPECT_EQ(split_labels(c, 0.99, 0).unseen.size(), 9u);
}

TEST(SplitLabels, RejectsFractionOutsideUnitInterval) {
  const Catalog c = catalog_with_labels(10);
  EXPECT_THROW(split_labels(c, 0.0, 0), ConfigError);
  EXPECT_THROW(split_labels(c, 1.0, 0), ConfigError);
  EXPECT_THROW(split_labels(c, -0.2, 0), ConfigError);
}

TEST(PartitionInstances, HandExample) {
  const Fixture f;
  EXPECT_EQ(as_set(f.manifest.group_a), (std::set<std::string>{"i1", "i4"}));
  EXPECT_EQ(as_set(f.manifest.group_b), (std::set<std::string>{"i2"}));
  EXPECT_EQ(as_set(f.manifest.group_c), (std::set<std::string>{"i3"}));
  EXPECT_EQ(f.manifest.seed, 5u);
  EXPECT_EQ(f.manifest.catalog_hash, f.catalog.hash());
  EXPECT_NO_THROW(validate_manifest(f.manifest, f.catalog));
}

TEST(PartitionInstances, OnlySeenPositivesLeavesBAndCEmpty) {
  const Catalog c = Catalog::from_records(
      {record("i1", {"a"}), record("i2", {"a", "b"}), record("i3", {"c"})});
  const LabelSplit s{{*c.find_label("a"), *c.find_label("b")},
                     {*c.find_label("c")}};
  // Drop the only Y-labelled instance by moving c to X as well.
  const LabelSplit all_x{{*c.find_label("a"), *c.find_label("b"),
                          *c.find_label("c")},
                         {}};
  const SplitManifest m = partition_instances(c, all_x);
  EXPECT_EQ(m.group_a.size(), 3u);
  EXPECT_TRUE(m.group_b.empty());
  EXPECT_TRUE(m.group_c.empty());
  EXPECT_EQ(partition_instances(c, s).group_c.size(), 1u);
}

TEST(PartitionInstances, RejectsOverlappingOrIncompleteSplit) {
  const Fixture f;
  LabelSplit overlap = f.split;
  overlap.unseen.insert(*overlap.seen.begin());
  EXPECT_THROW(partition_instances(f.catalog, overlap), DataError);
  LabelSplit missing = f.split;
  missing.unseen.erase(missing.unseen.begin());
  EXPECT_THROW(partition_instances(f.catalog, missing), DataError);
}

TEST(PartitionInstances, MatchesDefinitionsOnRandomCatalogs) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_labels = 5 + rng.uniform_index(26);
    const Catalog c = random_catalog(rng, 200, n_labels, 1 + trial % 5);
    const LabelSplit s = split_labels(c, 0.1 + 0.6 * rng.uniform01(), trial);
    const SplitManifest m = partition_instances(c, s, trial);
    ASSERT_EQ(manifest_violation(m, c), "");
    EXPECT_NO_THROW(validate_manifest(m, c));
    const std::set<std::string> a = as_set(m.group_a), b = as_set(m.group_b),
                                 cc = as_set(m.group_c);
    for (std::size_t r = 0; r < c.n_instances(); ++r) {
      const auto& id = c.instances()[r].id;
      switch (definitional_group(c.positives(r), s.seen, s.unseen)) {
        case Group::kA:
          EXPECT_TRUE(a.count(id)) << id;
          break;
        case Group::kB:
          EXPECT_TRUE(b.count(id)) << id;
          break;
        case Group::kC:
          EXPECT_TRUE(cc.count(id)) << id;
          break;
      }
    }
  }
}

TEST(PartitionInstances, ByteIdenticalForSameInputs) {
  Rng rng(5);
  const Catalog c = random_catalog(rng, 80, 12, 3);
  const auto make = [&] {
    return serialize_manifest(
        partition_instances(c, split_labels(c, 0.3, 8), 8));
  };
  EXPECT_EQ(make(), make());
}

TEST(ValidateManifest, DetectsViolations) {
  const Fixture f;
  SplitManifest moved = f.manifest;
  moved.group_a.push_back(moved.group_c.back());
  moved.group_c.pop_back();
  EXPECT_THROW(validate_manifest(moved, f.catalog), DataError);

  SplitManifest dup = f.manifest;
  dup.group_b.push_back(dup.group_a.front());
  EXPECT_THROW(validate_manifest(dup, f.catalog), DataError);

  SplitManifest missing = f.manifest;
  missing.group_a.pop_back();
  EXPECT_THROW(validate_manifest(missing, f.catalog), DataError);

  SplitManifest other = f.manifest;
  other.catalog_hash = "0000";
  EXPECT_THROW(validate_manifest(other, f.catalog), DataError);
}

TEST(MakeSetup, HandExamples) {
  const Fixture f;
  const SetupView ax =
      make_setup(f.manifest, f.catalog, InstanceGroup::kA, LabelGroup::kX);
  EXPECT_EQ(as_set(ax.instance_ids), (std::set<std::string>{"i1", "i4"}));
  EXPECT_EQ(f.names(ax.label_ids), (std::set<std::string>{"g1", "g2"}));
  EXPECT_EQ(ax.name(), "A-X");
  EXPECT_TRUE(ax.allows(SetupRole::kTrain));

  const SetupView bcy =
      make_setup(f.manifest, f.catalog, InstanceGroup::kBC, LabelGroup::kY);
  EXPECT_EQ(as_set(bcy.instance_ids), (std::set<std::string>{"i2", "i3"}));
  EXPECT_EQ(f.names(bcy.label_ids), (std::set<std::string>{"g3", "g4"}));
  EXPECT_EQ(bcy.name(), "(B+C)-Y");
  EXPECT_TRUE(bcy.allows(SetupRole::kAnnotation));
  EXPECT_TRUE(bcy.allows(SetupRole::kRetrieval));
}

TEST(MakeSetup, CYIsAnnotationOnly) {
  const Fixture f;
  const SetupView cy =
      make_setup(f.manifest, f.catalog, InstanceGroup::kC, LabelGroup::kY);
  EXPECT_TRUE(cy.allows(SetupRole::kAnnotation));
  EXPECT_FALSE(cy.allows(SetupRole::kRetrieval));
  try {
    require_role(cy, SetupRole::kRetrieval);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("C-Y"), std::string::npos);
  }
}

TEST(MakeSetup, RolesOfEveryCombination) {
  const Fixture f;
  const std::set<std::string> train = {"A-X", "B-X", "(A+B)-X"};
  const std::set<std::string> annotation = {"B-Y",     "C-Y",     "(B+C)-Y",
                                            "B-(X+Y)", "C-(X+Y)", "(B+C)-(X+Y)"};
  const std::set<std::string> retrieval = {"(B+C)-Y", "(A+B+C)-Y"};
  std::size_t valid = 0;
  for (auto ig : {InstanceGroup::kA, InstanceGroup::kB, InstanceGroup::kC,
                  InstanceGroup::kAB, InstanceGroup::kBC, InstanceGroup::kABC}) {
    for (auto lg : {LabelGroup::kX, LabelGroup::kY, LabelGroup::kXY}) {
      const std::string name =
          SetupView{ig, lg, 0, {}, {}, {}}.name();
      const bool listed = train.count(name) || annotation.count(name) ||
                          retrieval.count(name);
      if (!listed) {
        EXPECT_THROW(make_setup(f.manifest, f.catalog, ig, lg), ConfigError)
            << name;
        continue;
      }
      ++valid;
      const SetupView v = make_setup(f.manifest, f.catalog, ig, lg);
      EXPECT_EQ(v.allows(SetupRole::kTrain), train.count(name) == 1) << name;
      EXPECT_EQ(v.allows(SetupRole::kAnnotation), annotation.count(name) == 1)
          << name;
      EXPECT_EQ(v.allows(SetupRole::kRetrieval), retrieval.count(name) == 1)
          << name;
    }
  }
  EXPECT_EQ(valid, 10u);
}

TEST(MakeSetup, ViewsMatchMaskedCatalog) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Catalog c = random_catalog(rng, 60, 10, 4);
    const SplitManifest m = partition_instances(c, split_labels(c, 0.3, trial));
    for (const char* name : {"A-X", "(A+B)-X", "(B+C)-(X+Y)", "(A+B+C)-Y"}) {
      const auto [ig, lg] = parse_setup(name);
      const SetupView v = make_setup(m, c, ig, lg);
      EXPECT_EQ(v.name(), name);
      ASSERT_EQ(v.positives.size(), v.instance_ids.size());
      EXPECT_TRUE(std::is_sorted(v.label_ids.begin(), v.label_ids.end()));
      const std::set<LabelId> labels(v.label_ids.begin(), v.label_ids.end());
      for (std::size_t i = 0; i < v.instance_ids.size(); ++i) {
        std::vector<LabelId> expected;
        for (LabelId l : c.positives(*c.find_instance(v.instance_ids[i]))) {
          if (labels.count(l)) expected.push_back(l);
        }
        EXPECT_EQ(v.positives[i], expected);
      }
    }
  }
}

TEST(MakeSetup, UnionOfGroupsAndNoYInTraining) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Catalog c = random_catalog(rng, 80, 12, 4);
    const SplitManifest m = partition_instances(c, split_labels(c, 0.3, trial));
    const auto ids = [&](InstanceGroup ig) {
      return as_set(make_setup(m, c, ig, LabelGroup::kX).instance_ids);
    };
    std::set<std::string> a_or_b = ids(InstanceGroup::kA);
    const auto b = ids(InstanceGroup::kB);
    a_or_b.insert(b.begin(), b.end());
    EXPECT_EQ(ids(InstanceGroup::kAB), a_or_b);

    // Under a label-first split, A carries no Y annotation at all.
    for (const auto& id : m.group_a) {
      for (LabelId l : c.positives(*c.find_instance(id))) {
        EXPECT_EQ(m.unseen.count(l), 0u);
      }
    }
    const SetupView bx = make_setup(m, c, InstanceGroup::kB, LabelGroup::kX);
    for (const auto& row : bx.positives) {
      for (LabelId l : row) EXPECT_EQ(m.seen.count(l), 1u);
    }
  }
}

TEST(ParseSetup, AcceptsSpellings) {
  EXPECT_EQ(parse_instance_group("A+B"), InstanceGroup::kAB);
  EXPECT_EQ(parse_instance_group("(B+C)"), InstanceGroup::kBC);
  EXPECT_EQ(parse_instance_group("ABC"), InstanceGroup::kABC);
  EXPECT_EQ(parse_label_group("X+Y"), LabelGroup::kXY);
  EXPECT_EQ(parse_label_group("XY"), LabelGroup::kXY);
  const auto [ig, lg] = parse_setup("(B+C)-(X+Y)");
  EXPECT_EQ(ig, InstanceGroup::kBC);
  EXPECT_EQ(lg, LabelGroup::kXY);
  EXPECT_THROW(parse_setup("D-X"), ConfigError);
  EXPECT_THROW(parse_setup("A"), ConfigError);
}

TEST(Holdout, SizesAndDisjointness) {
  std::vector<CatalogRecord> records;
  for (int i = 0; i < 100; ++i) {
    records.push_back(record("i" + std::to_string(i), {"x", "y"}));
  }
  records.push_back(record("only_z", {"z"}));
  const Catalog c = Catalog::from_records(records);
  const SplitManifest m = partition_instances(
      c, {{*c.find_label("x"), *c.find_label("y")}, {*c.find_label("z")}});
  const SetupView ax = make_setup(m, c, InstanceGroup::kA, LabelGroup::kX);
  ASSERT_EQ(ax.instance_ids.size(), 100u);
  const Holdout h = holdout_validation(ax, 0.1, 4);
  EXPECT_EQ(h.train_ids.size(), 90u);
  EXPECT_EQ(h.valid_ids.size(), 10u);
  std::set<std::string> all = as_set(h.train_ids);
  for (const auto& id : h.valid_ids) EXPECT_TRUE(all.insert(id).second);
  EXPECT_EQ(all.size(), 100u);
  const Holdout again = holdout_validation(ax, 0.1, 4);
  EXPECT_EQ(again.valid_ids, h.valid_ids);
}

TEST(Holdout, RoundsAndRejectsTinySets) {
  SetupView big;
  big.instance_group = InstanceGroup::kA;
  big.label_group = LabelGroup::kX;
  big.roles = static_cast<unsigned>(SetupRole::kTrain);
  for (int i = 0; i < 11606; ++i) big.instance_ids.push_back(std::to_string(i));
  EXPECT_EQ(holdout_validation(big, 0.1, 0).valid_ids.size(), 1161u);

  SetupView two = big;
  two.instance_ids = {"a", "b"};
  EXPECT_THROW(holdout_validation(two, 0.999, 0), DataError);
  EXPECT_THROW(holdout_validation(two, 0.0, 0), ConfigError);
}

TEST(Coverage, FlagsLabelsWithoutPositives) {
  const Fixture f;
  // B-Y: i2 carries g3, nothing carries g4.
  const SetupView by =
      make_setup(f.manifest, f.catalog, InstanceGroup::kB, LabelGroup::kY);
  const CoverageReport r = coverage_report(by);
  ASSERT_EQ(r.flagged.size(), 1u);
  EXPECT_EQ(f.catalog.label_name(r.flagged[0]), "g4");

  const SetupView bcy =
      make_setup(f.manifest, f.catalog, InstanceGroup::kBC, LabelGroup::kY);
  EXPECT_TRUE(coverage_report(bcy).flagged.empty());
}

TEST(Coverage, CountsMatchColumnSums) {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Catalog c = random_catalog(rng, 70, 14, 4);
    const SplitManifest m = partition_instances(c, split_labels(c, 0.3, trial));
    const SetupView v = make_setup(m, c, InstanceGroup::kABC, LabelGroup::kY);
    const CoverageReport r = coverage_report(v);
    ASSERT_EQ(r.counts.size(), v.label_ids.size());
    for (const auto& lc : r.counts) {
      std::size_t n = 0;
      for (const auto& id : v.instance_ids) {
        const auto& pos = c.positives(*c.find_instance(id));
        n += std::count(pos.begin(), pos.end(), lc.label);
      }
      EXPECT_EQ(lc.n_positives, n);
    }
  }
}

TEST(Manifest, JsonRoundTrip) {
  const Fixture f;
  const std::string text = serialize_manifest(f.manifest);
  const SplitManifest back = parse_manifest(text);
  EXPECT_EQ(back.seen, f.manifest.seen);
  EXPECT_EQ(back.unseen, f.manifest.unseen);
  EXPECT_EQ(back.group_a, f.manifest.group_a);
  EXPECT_EQ(back.group_b, f.manifest.group_b);
  EXPECT_EQ(back.group_c, f.manifest.group_c);
  EXPECT_EQ(back.seed, f.manifest.seed);
  EXPECT_EQ(back.catalog_hash, f.manifest.catalog_hash);
  EXPECT_EQ(serialize_manifest(back), text);
  for (const char* key : {"\"X\"", "\"Y\"", "\"A\"", "\"B\"", "\"C\"",
                          "\"seed\"", "\"catalog_hash\""}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
  EXPECT_THROW(parse_manifest("{\"X\": 3}"), DataError);
}

}  // namespace
}  // namespace zstag
