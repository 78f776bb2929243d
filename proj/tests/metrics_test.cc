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

#include "spotdiff/metrics.h"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "oracles.h"
#include "spotdiff/error.h"

namespace spotdiff {
namespace {

std::vector<std::pair<int64_t, int64_t>> TpFp(const std::vector<SweepPoint>& pts) {
  std::vector<std::pair<int64_t, int64_t>> out;
  for (const auto& p : pts) out.emplace_back(p.tp, p.fp);
  return out;
}

TEST(SweepTest, SeparatedPair) {
  const std::vector<ScoredSample> s = {{1.0, 1}, {0.0, 0}};
  const auto pts = Sweep(s);
  EXPECT_EQ(TpFp(pts), (std::vector<std::pair<int64_t, int64_t>>{{0, 0}, {1, 0}, {1, 1}}));
}

TEST(SweepTest, TiedScoresFormOneBatch) {
  const std::vector<ScoredSample> s = {{1.0, 1}, {1.0, 0}};
  const auto pts = Sweep(s);
  EXPECT_EQ(TpFp(pts), (std::vector<std::pair<int64_t, int64_t>>{{0, 0}, {1, 1}}));
}

TEST(SweepTest, MatchesThresholdEnumeration) {
  RngStream rng(11, 0);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = oracle::RandomTiedSamples(rng, 50);
    const auto pts = Sweep(s);
    const auto ref = oracle::EnumerateThresholds(s);
    ASSERT_EQ(pts.size(), ref.size());
    for (size_t k = 0; k < pts.size(); ++k) {
      EXPECT_EQ(pts[k].tp, ref[k].tp);
      EXPECT_EQ(pts[k].fp, ref[k].fp);
      EXPECT_EQ(pts[k].tp + pts[k].fn, ref[k].pos);
      EXPECT_EQ(pts[k].fp + pts[k].tn, ref[k].neg);
    }
  }
}

TEST(SweepTest, RejectsBadInput) {
  const std::vector<ScoredSample> nan = {{std::nan(""), 1}};
  EXPECT_THROW(Sweep(nan), InvalidInput);
  const std::vector<ScoredSample> label = {{0.5, 2}};
  EXPECT_THROW(Sweep(label), InvalidInput);
}

TEST(PointMetricsTest, Formulas) {
  SweepPoint a{0, 100, 1000, 0, 0};
  EXPECT_NEAR(Precision(a), 100.0 / 1100.0, 1e-15);
  SweepPoint perfect{0, 10, 0, 5, 0};
  EXPECT_EQ(Precision(perfect), 1.0);
  EXPECT_EQ(Recall(perfect), 1.0);
  EXPECT_EQ(F1(perfect), 1.0);
  SweepPoint b{0, 90, 0, 100, 10};
  EXPECT_NEAR(F1(b), 90.0 / 95.0, 1e-15);
  EXPECT_NEAR(FalsePositiveRate(SweepPoint{0, 0, 3, 7, 0}), 0.3, 1e-15);
  EXPECT_EQ(Precision(SweepPoint{0, 0, 0, 5, 5}), 1.0);
}

TEST(ToyModelTest, ModelAGolden) {
  const auto s = ToyModelA();
  const auto pts = Sweep(s);
  EXPECT_EQ(pts.back().positives(), 100);
  EXPECT_EQ(pts.back().negatives(), 100000);
  // Each TP arrives alone, then its ten false positives.
  for (int k = 1; k <= 100; ++k) {
    EXPECT_EQ(pts[2 * k - 1].tp, k);
    EXPECT_EQ(pts[2 * k - 1].fp, 10 * (k - 1));
    EXPECT_EQ(pts[2 * k].tp, k);
    EXPECT_EQ(pts[2 * k].fp, 10 * k);
  }
  const auto r = Evaluate(s);
  EXPECT_NEAR(r.auroc, 0.995, 0.001);
  EXPECT_NEAR(r.aupr, 0.105, 0.002);
  EXPECT_NEAR(r.max_f1, 100.0 / 595.0, 1e-12);
}

TEST(ToyModelTest, ModelBGolden) {
  const auto s = ToyModelB();
  const auto pts = Sweep(s);
  EXPECT_EQ(pts.back().positives(), 100);
  EXPECT_EQ(pts.back().negatives(), 100000);
  bool saw_90 = false, saw_91 = false;
  for (const auto& p : pts) {
    saw_90 = saw_90 || (p.tp == 90 && p.fp == 0);
    saw_91 = saw_91 || (p.tp == 91 && p.fp == 3000);
  }
  EXPECT_TRUE(saw_90);
  EXPECT_TRUE(saw_91);
  const auto r = Evaluate(s);
  EXPECT_NEAR(r.auroc, 0.985, 0.001);
  EXPECT_NEAR(r.max_f1, 0.947, 0.001);
  EXPECT_NEAR(r.aupr, 0.901, 0.002);
  const auto best = MaxF1(s);
  EXPECT_EQ(best.point.tp, 90);
  EXPECT_EQ(best.point.fp, 0);
}

TEST(ToyModelTest, FrozenOracleValues) {
  // Brute-force threshold enumeration, computed once and pinned.
  EXPECT_NEAR(oracle::AveragePrecision(ToyModelB()), 0.900898, 5e-6);
  EXPECT_NEAR(oracle::MaxF1(ToyModelA()), 0.16807, 5e-6);
}

TEST(CurveMetricsTest, PerfectSeparation) {
  const std::vector<ScoredSample> s = {{3, 1}, {2, 1}, {1, 0}, {0, 0}};
  EXPECT_EQ(Auroc(s), 1.0);
  EXPECT_EQ(Aupr(s), 1.0);
  EXPECT_EQ(MaxF1(s).value, 1.0);
}

TEST(CurveMetricsTest, AllPositiveAuprIsOne) {
  const std::vector<ScoredSample> s = {{0.3, 1}, {0.9, 1}, {0.3, 1}};
  EXPECT_EQ(Aupr(s), 1.0);
  EXPECT_THROW(Auroc(s), CurveMetricsError);
}

TEST(CurveMetricsTest, OneClassRejected) {
  const std::vector<ScoredSample> s = {{0.3, 0}, {0.9, 0}};
  EXPECT_THROW(Auroc(s), CurveMetricsError);
  EXPECT_THROW(Aupr(s), CurveMetricsError);
  EXPECT_THROW(MaxF1(s), CurveMetricsError);
  EXPECT_THROW(Evaluate(s), CurveMetricsError);
  EXPECT_NO_THROW(Sweep(s));
}

TEST(CurveMetricsTest, BruteForceEquivalence) {
  RngStream rng(2024, 7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = oracle::RandomTiedSamples(rng, 200);
    EXPECT_EQ(Auroc(s), oracle::Auroc(s));
    EXPECT_EQ(Aupr(s), oracle::AveragePrecision(s));
    EXPECT_EQ(MaxF1(s).value, oracle::MaxF1(s));
  }
}

TEST(CurveMetricsTest, MonotoneTransformInvariance) {
  RngStream rng(5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = oracle::RandomTiedSamples(rng, 100);
    auto t = s;
    for (auto& x : t) x.score = std::exp(3.0 * x.score) - 7.0;
    const auto a = Evaluate(s), b = Evaluate(t);
    EXPECT_EQ(a.auroc, b.auroc);
    EXPECT_EQ(a.aupr, b.aupr);
    EXPECT_EQ(a.max_f1, b.max_f1);
  }
}

TEST(CurveMetricsTest, FlipSymmetryAndBounds) {
  RngStream rng(6, 6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = oracle::RandomTiedSamples(rng, 100);
    auto f = s;
    for (auto& x : f) {
      x.score = -x.score;
      x.label = 1 - x.label;
    }
    const auto r = Evaluate(s);
    EXPECT_DOUBLE_EQ(Auroc(f), r.auroc);
    for (double v : {r.auroc, r.aupr, r.aupr_trapezoid, r.max_f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(CurveMetricsTest, SweepIncrementsTelescope) {
  RngStream rng(8, 1);
  const auto s = oracle::RandomTiedSamples(rng, 150);
  const auto pts = Sweep(s);
  int64_t dtp = 0, dfp = 0;
  for (size_t k = 1; k < pts.size(); ++k) {
    EXPECT_GE(pts[k].tp, pts[k - 1].tp);
    EXPECT_GE(pts[k].fp, pts[k - 1].fp);
    dtp += pts[k].tp - pts[k - 1].tp;
    dfp += pts[k].fp - pts[k - 1].fp;
  }
  EXPECT_EQ(dtp, pts.back().positives());
  EXPECT_EQ(dfp, pts.back().negatives());
}

TEST(PixelMetricsTest, SingleTopPixel) {
  AnomalyMap m{8, 8, std::vector<double>(64, 0.1)};
  m.values[9] = 5.0;
  AlphaMask mask(8, 8);
  mask.at(1, 1) = 1.0f;
  const std::vector<AnomalyMap> maps = {m};
  const std::vector<AlphaMask> masks = {mask};
  EXPECT_EQ(PixelMetrics(maps, masks).aupr, 1.0);
}

TEST(PixelMetricsTest, AllNormalMasksRejected) {
  const std::vector<AnomalyMap> maps = {AnomalyMap{8, 8, std::vector<double>(64, 0.0)}};
  const std::vector<AlphaMask> masks = {AlphaMask(8, 8)};
  EXPECT_THROW(PixelMetrics(maps, masks), CurveMetricsError);
  EXPECT_EQ(FlattenPixels(maps, masks).size(), 64u);
}

TEST(PixelMetricsTest, SizeMismatchRejected) {
  const std::vector<AnomalyMap> maps = {AnomalyMap{8, 8, std::vector<double>(64, 0.0)}};
  const std::vector<AlphaMask> masks = {AlphaMask(8, 9)};
  EXPECT_THROW(PixelMetrics(maps, masks), InvalidInput);
}

TEST(PixelMetricsTest, MatchesFlattenedOracle) {
  RngStream rng(9, 9);
  std::vector<AnomalyMap> maps;
  std::vector<AlphaMask> masks;
  std::vector<ScoredSample> flat;
  for (int i = 0; i < 3; ++i) {
    AnomalyMap m{8, 8, std::vector<double>(64)};
    AlphaMask mask(8, 8);
    for (int p = 0; p < 64; ++p) {
      m.values[p] = static_cast<double>(rng.UniformInt(0, 9));
      const bool anomalous = rng.Bernoulli(0.2);
      mask.data()[p] = anomalous ? 1.0f : 0.0f;
      flat.push_back({m.values[p], anomalous ? 1 : 0});
    }
    maps.push_back(m);
    masks.push_back(mask);
  }
  const auto r = PixelMetrics(maps, masks);
  EXPECT_EQ(r.auroc, oracle::Auroc(flat));
  EXPECT_EQ(r.aupr, oracle::AveragePrecision(flat));
  EXPECT_EQ(r.max_f1, oracle::MaxF1(flat));
}

TEST(ReportTest, JsonSchema) {
  const auto r = Evaluate(ToyModelB());
  const auto j = nlohmann::json::parse(r.ToJson());
  for (const char* key :
       {"auroc", "aupr", "aupr_trapezoid", "max_f1", "threshold", "n_pos", "n_neg"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["n_pos"], 100);
}

TEST(ReportTest, CurveCsv) {
  const std::vector<ScoredSample> s = {{1.0, 1}, {0.0, 0}};
  std::ostringstream os;
  WriteCurveCsv(Sweep(s), os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "threshold,tp,fp,tn,fn,precision,recall,fpr,f1");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

}  // namespace
}  // namespace spotdiff
