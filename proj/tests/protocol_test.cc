/*
 * Copyright 2026 The SpotDiff Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "spotdiff/protocol.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "spotdiff/error.h"
#include "spotdiff/rng.h"

namespace spotdiff {
namespace {

namespace fs = std::filesystem;

// Normals get ids [0, n_normal), anomalies follow; a second object is mixed
// in so filtering by object is exercised.
DatasetManifest Manifest(int64_t n_normal, int64_t n_anomaly, const std::string& object = "pcb1") {
  DatasetManifest m;
  int64_t id = 0;
  for (int64_t i = 0; i < n_normal; ++i)
    m.records.push_back({id++, object + "/normal/" + std::to_string(i) + ".png", object,
                         SampleLabel::kNormal, std::nullopt, std::nullopt});
  for (int64_t i = 0; i < n_anomaly; ++i)
    m.records.push_back({id++, object + "/anomaly/" + std::to_string(i) + ".png", object,
                         SampleLabel::kAnomaly, object + "/masks/" + std::to_string(i) + ".png",
                         "scratch"});
  for (int64_t i = 0; i < 3; ++i)
    m.records.push_back({id++, "other/normal/" + std::to_string(i) + ".png", "other",
                         SampleLabel::kNormal, std::nullopt, std::nullopt});
  return m;
}

struct Tally {
  int64_t train_normal = 0, train_anomaly = 0, test_normal = 0, test_anomaly = 0;
};

Tally Count(const DatasetManifest& m, const SplitManifest& s) {
  Tally t;
  for (int64_t id : s.train_ids) {
    const auto& r = m.ById(id);
    EXPECT_EQ(r.object, s.object);
    (r.label == SampleLabel::kNormal ? t.train_normal : t.train_anomaly)++;
  }
  for (int64_t id : s.test_ids) {
    const auto& r = m.ById(id);
    EXPECT_EQ(r.object, s.object);
    (r.label == SampleLabel::kNormal ? t.test_normal : t.test_anomaly)++;
  }
  return t;
}

bool Disjoint(const SplitManifest& s) {
  std::set<int64_t> train(s.train_ids.begin(), s.train_ids.end());
  if (train.size() != s.train_ids.size()) return false;
  std::set<int64_t> test(s.test_ids.begin(), s.test_ids.end());
  if (test.size() != s.test_ids.size()) return false;
  return std::none_of(s.test_ids.begin(), s.test_ids.end(),
                      [&](int64_t id) { return train.count(id) > 0; });
}

void ExpectCounts(const Tally& t, int64_t tn, int64_t ta, int64_t sn, int64_t sa) {
  EXPECT_EQ(t.train_normal, tn);
  EXPECT_EQ(t.train_anomaly, ta);
  EXPECT_EQ(t.test_normal, sn);
  EXPECT_EQ(t.test_anomaly, sa);
}

TEST(OneClassSplitTest, Pcb1Counts) {
  const auto m = Manifest(1004, 100);
  const auto s = OneClassSplit(m, "pcb1", 1);
  ExpectCounts(Count(m, s), 903, 0, 101, 100);
  EXPECT_TRUE(Disjoint(s));
  EXPECT_EQ(s.kind, ProtocolKind::kOneClass);
}

TEST(OneClassSplitTest, SmallAndDeterministic) {
  const auto m = Manifest(10, 0);
  const auto a = OneClassSplit(m, "pcb1", 4);
  ExpectCounts(Count(m, a), 9, 0, 1, 0);
  const auto b = OneClassSplit(m, "pcb1", 4);
  EXPECT_EQ(a.train_ids, b.train_ids);
  EXPECT_EQ(a.test_ids, b.test_ids);
  EXPECT_THROW(OneClassSplit(Manifest(0, 5), "pcb1", 1), InvalidInput);
  EXPECT_THROW(OneClassSplit(m, "capsules", 1), InvalidInput);
}

TEST(OneClassSplitTest, SeedChangesSelection) {
  const auto m = Manifest(200, 20);
  EXPECT_NE(OneClassSplit(m, "pcb1", 1).test_ids, OneClassSplit(m, "pcb1", 2).test_ids);
}

TEST(HighShotSplitTest, Counts) {
  const auto m = Manifest(10, 10);
  const auto s = HighShotSplit(m, "pcb1", 3);
  ExpectCounts(Count(m, s), 6, 6, 4, 4);
  EXPECT_TRUE(Disjoint(s));
  const auto pcb = Manifest(1004, 100);
  ExpectCounts(Count(pcb, HighShotSplit(pcb, "pcb1", 3)), 602, 60, 402, 40);
  EXPECT_THROW(HighShotSplit(Manifest(10, 0), "pcb1", 1), InvalidInput);
  EXPECT_EQ(HighShotSplit(m, "pcb1", 3).train_ids, s.train_ids);
}

TEST(KShotSplitTest, TrainIsKPerClassFromFixedPool) {
  const auto m = Manifest(100, 40);
  const auto pool = KShotPool(m, "pcb1");
  const std::set<int64_t> pool_set(pool.begin(), pool.end());
  EXPECT_EQ(pool.size(), 20u + 8u);
  std::set<std::vector<int64_t>> distinct;
  for (uint64_t run = 1; run <= 5; ++run) {
    const auto s = KShotSplit(m, "pcb1", 5, run);
    ExpectCounts(Count(m, s), 5, 5, 80, 32);
    EXPECT_TRUE(Disjoint(s));
    for (int64_t id : s.train_ids) EXPECT_TRUE(pool_set.count(id)) << id;
    for (int64_t id : s.test_ids) EXPECT_FALSE(pool_set.count(id)) << id;
    EXPECT_EQ(KShotPool(m, "pcb1"), pool);
    distinct.insert(s.train_ids);
  }
  EXPECT_EQ(distinct.size(), 5u);
  EXPECT_NE(KShotPool(m, "pcb1", 7), pool);
  EXPECT_THROW(KShotSplit(m, "pcb1", 9, 1), InvalidInput);
  EXPECT_THROW(KShotSplit(m, "pcb1", 0, 1), InvalidInput);
}

// Pool rebuilt by hand: each class shuffled with the pool stream, first
// floor(0.2 n) kept. The construction follows the documented seeding; a
// mismatch means the documented contract changed.
TEST(KShotSplitTest, PoolMatchesBruteForceMembership) {
  const auto m = Manifest(57, 23);
  const auto pool = KShotPool(m, "pcb1", 99);
  std::set<int64_t> normals, anomalies;
  for (int64_t id : pool) (m.ById(id).label == SampleLabel::kNormal ? normals : anomalies).insert(id);
  EXPECT_EQ(normals.size(), 11u);
  EXPECT_EQ(anomalies.size(), 4u);
  // Every k-shot train set over many runs stays inside the pool, and the
  // union of those sets covers the pool.
  std::set<int64_t> seen;
  for (uint64_t run = 0; run < 200; ++run) {
    const auto s = KShotSplit(m, "pcb1", 2, run, 99);
    seen.insert(s.train_ids.begin(), s.train_ids.end());
  }
  EXPECT_EQ(seen, std::set<int64_t>(pool.begin(), pool.end()));
}

TEST(ProtocolArithmeticTest, ExhaustiveCountsUpTo500) {
  for (int64_t n = 1; n <= 500; ++n) {
    const int64_t na = (n * 37) % 61 + 1;
    const auto m = Manifest(n, na);
    {
      const auto s = OneClassSplit(m, "pcb1", n);
      const int64_t tr = n * 9 / 10;
      ExpectCounts(Count(m, s), tr, 0, n - tr, na);
      ASSERT_TRUE(Disjoint(s)) << n;
      const auto e = ExpectedCounts(ProtocolKind::kOneClass, n, na);
      EXPECT_EQ(e.train_normal, tr);
      EXPECT_EQ(e.test_anomaly, na);
    }
    {
      const auto s = HighShotSplit(m, "pcb1", n);
      const int64_t tn = n * 6 / 10, ta = na * 6 / 10;
      ExpectCounts(Count(m, s), tn, ta, n - tn, na - ta);
      ASSERT_TRUE(Disjoint(s)) << n;
      const auto e = ExpectedCounts(ProtocolKind::kHighShot, n, na);
      EXPECT_EQ(e.train_normal, tn);
      EXPECT_EQ(e.train_anomaly, ta);
      EXPECT_EQ(e.test_normal, n - tn);
      EXPECT_EQ(e.test_anomaly, na - ta);
    }
    const int64_t pn = n / 5, pa = na / 5;
    const int k = static_cast<int>(std::min(pn, pa));
    if (k == 0) {
      EXPECT_THROW(KShotSplit(m, "pcb1", 1, n), InvalidInput) << n;
      continue;
    }
    for (int kk : {1, k}) {
      const auto s = KShotSplit(m, "pcb1", kk, n);
      ExpectCounts(Count(m, s), kk, kk, n - pn, na - pa);
      ASSERT_TRUE(Disjoint(s)) << n;
      const auto e = ExpectedCounts(ProtocolKind::kKShot, n, na, kk);
      EXPECT_EQ(e.train_normal, kk);
      EXPECT_EQ(e.test_normal, n - pn);
      EXPECT_EQ(e.test_anomaly, na - pa);
    }
  }
}

TEST(ProtocolNamesTest, RoundTrip) {
  for (auto k : {ProtocolKind::kOneClass, ProtocolKind::kHighShot, ProtocolKind::kKShot})
    EXPECT_EQ(ParseProtocol(ToString(k)), k);
  EXPECT_EQ(ToString(ProtocolKind::kKShot), "k-shot");
  EXPECT_THROW(ParseProtocol("two-class"), InvalidInput);
}

TEST(ManifestTest, ValidateAndLookup) {
  auto m = Manifest(3, 1);
  EXPECT_NO_THROW(m.Validate());
  EXPECT_EQ(m.ById(3).label, SampleLabel::kAnomaly);
  EXPECT_THROW(m.ById(1000), InvalidInput);
  EXPECT_EQ(m.Objects(), (std::vector<std::string>{"other", "pcb1"}));
  auto dup_path = m;
  dup_path.records[1].path = dup_path.records[0].path;
  EXPECT_THROW(dup_path.Validate(), InvalidInput);
  auto dup_id = m;
  dup_id.records[1].id = 0;
  EXPECT_THROW(dup_id.Validate(), InvalidInput);
}

TEST(ManifestCsvTest, RoundTripAndByteStable) {
  const auto m = Manifest(5, 2);
  std::ostringstream a, b;
  WriteManifestCsv(m, a);
  WriteManifestCsv(m, b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "id,path,object,label,mask_path,split,run");
  EXPECT_EQ(a.str().find('\r'), std::string::npos);
  std::istringstream in(a.str());
  const auto back = ReadManifestCsv(in);
  ASSERT_EQ(back.records.size(), m.records.size());
  for (size_t i = 0; i < m.records.size(); ++i) {
    EXPECT_EQ(back.records[i].id, m.records[i].id);
    EXPECT_EQ(back.records[i].path, m.records[i].path);
    EXPECT_EQ(back.records[i].label, m.records[i].label);
    EXPECT_EQ(back.records[i].mask_path, m.records[i].mask_path);
  }
  std::istringstream bad_header("id,path\n");
  EXPECT_THROW(ReadManifestCsv(bad_header), InvalidInput);
  std::istringstream empty("");
  EXPECT_THROW(ReadManifestCsv(empty), InvalidInput);
}

TEST(SplitCsvTest, ByteIdenticalOnRerun) {
  const auto m = Manifest(60, 30);
  auto render = [&](uint64_t seed) {
    std::vector<SplitManifest> splits;
    for (int run = 0; run < 5; ++run) {
      auto s = KShotSplit(m, "pcb1", 3, seed + run);
      s.run = run;
      splits.push_back(std::move(s));
    }
    std::ostringstream out;
    WriteSplitCsv(m, splits, out);
    return out.str();
  };
  const std::string a = render(10);
  EXPECT_EQ(a, render(10));
  EXPECT_NE(a, render(11));
  // Header plus (6 train + 60 test) rows per run.
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 1 + 5 * (6 + 48 + 24));
  EXPECT_NE(a.find(",train,4\n"), std::string::npos);
}

TEST(FiveRunAverageTest, MeanAndSampleStd) {
  const std::map<std::string, double> r{{"auroc", 0.9}, {"aupr", 0.4}};
  const auto same = FiveRunAverage({r, r, r});
  EXPECT_EQ(same.mean.at("auroc"), 0.9);
  EXPECT_EQ(same.stddev.at("aupr"), 0.0);
  EXPECT_EQ(same.runs, 3);
  const auto two = FiveRunAverage({{{"x", 0.4}}, {{"x", 0.6}}});
  EXPECT_DOUBLE_EQ(two.mean.at("x"), 0.5);
  EXPECT_NEAR(two.stddev.at("x"), std::sqrt(0.02), 1e-15);
  EXPECT_EQ(FiveRunAverage({{{"x", 0.7}}}).stddev.at("x"), 0.0);

  RngStream rng(4, 4);
  std::vector<std::map<std::string, double>> runs(5);
  for (auto& run : runs)
    for (const char* key : {"a", "b", "c"}) run[key] = rng.Uniform01();
  const auto agg = FiveRunAverage(runs);
  for (const char* key : {"a", "b", "c"}) {
    long double s = 0, ss = 0;
    for (const auto& run : runs) s += run.at(key);
    const long double mean = s / 5;
    for (const auto& run : runs) ss += (run.at(key) - mean) * (run.at(key) - mean);
    EXPECT_NEAR(agg.mean.at(key), static_cast<double>(mean), 1e-15);
    EXPECT_NEAR(agg.stddev.at(key), static_cast<double>(std::sqrt(ss / 4)), 1e-14);
  }
  EXPECT_THROW(FiveRunAverage({}), InvalidInput);
  EXPECT_THROW(FiveRunAverage({{{"x", 1.0}}, {{"y", 1.0}}}), InvalidInput);
}

class ScanTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("spotdiff_scan_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  void Touch(const fs::path& rel) {
    fs::create_directories((root_ / rel).parent_path());
    std::ofstream(root_ / rel) << "x";
  }
  fs::path root_;
};

TEST_F(ScanTest, EmptyRoot) {
  EXPECT_TRUE(ScanDataset(root_).records.empty());
  EXPECT_THROW(ScanDataset(root_ / "missing"), InvalidInput);
}

TEST_F(ScanTest, ThreeFileTree) {
  Touch("cable/normal/b.png");
  Touch("cable/normal/a.png");
  Touch("cable/normal/notes.txt");
  Touch("cable/anomaly/bent/c.png");
  Touch("cable/masks/bent/c.png");
  const auto m = ScanDataset(root_);
  ASSERT_EQ(m.records.size(), 3u);
  std::vector<std::string> names;
  for (const auto& r : m.records) names.push_back(fs::path(r.path).filename().string());
  EXPECT_EQ(names, (std::vector<std::string>{"c.png", "a.png", "b.png"}));
  EXPECT_EQ(m.records[0].label, SampleLabel::kAnomaly);
  EXPECT_EQ(m.records[0].anomaly_class, "bent");
  ASSERT_TRUE(m.records[0].mask_path.has_value());
  EXPECT_NE(m.records[0].mask_path->find("masks/bent/c.png"), std::string::npos);
  EXPECT_EQ(m.records[1].label, SampleLabel::kNormal);
  EXPECT_FALSE(m.records[1].mask_path.has_value());
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(m.records[i].id, static_cast<int64_t>(i));
    EXPECT_EQ(m.records[i].object, "cable");
  }
  EXPECT_EQ(ScanDataset(root_), m);
}

TEST_F(ScanTest, MissingMasksCollected) {
  Touch("pcb/normal/a.png");
  Touch("pcb/anomaly/x.png");
  Touch("pcb/anomaly/y.png");
  Touch("pcb/anomaly/z.png");
  Touch("pcb/masks/y.pgm");
  try {
    ScanDataset(root_);
    FAIL() << "expected DatasetScanError";
  } catch (const DatasetScanError& e) {
    ASSERT_EQ(e.issues().size(), 2u);
    EXPECT_NE(e.issues()[0].find("x.png"), std::string::npos);
    EXPECT_NE(e.issues()[1].find("z.png"), std::string::npos);
  }
}

TEST_F(ScanTest, NoMasksDirectoryIsFine) {
  Touch("pcb/anomaly/x.png");
  const auto m = ScanDataset(root_);
  ASSERT_EQ(m.records.size(), 1u);
  EXPECT_FALSE(m.records[0].mask_path.has_value());
}

}  // namespace
}  // namespace spotdiff
