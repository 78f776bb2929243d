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

// Threshold sweeps and the curve metrics built on them.
//
// All metrics are computed from integer confusion counts at the distinct
// score thresholds, so they depend only on the ordering and tie structure of
// the scores. Equal scores enter the sweep as one batch.

#ifndef SPOTDIFF_METRICS_H_
#define SPOTDIFF_METRICS_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spotdiff/image.h"

namespace spotdiff {

struct ScoredSample {
  double score = 0.0;
  int label = 0;  // 0 normal, 1 anomalous
};

struct SweepPoint {
  double threshold = 0.0;  // predict positive when score >= threshold
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t tn = 0;
  int64_t fn = 0;

  int64_t positives() const { return tp + fn; }
  int64_t negatives() const { return fp + tn; }
};

// Descending distinct thresholds, preceded by a point with TP = FP = 0
// (threshold +inf). Throws InvalidInput on non-finite scores or labels
// outside {0, 1}. One-class input is allowed here.
std::vector<SweepPoint> Sweep(std::span<const ScoredSample> samples);

// TP / (TP + FP); 1 when nothing is predicted positive.
double Precision(const SweepPoint& pt);
// TP / P; 0 when P == 0.
double Recall(const SweepPoint& pt);
// FP / N; 0 when N == 0.
double FalsePositiveRate(const SweepPoint& pt);
// TP / (TP + 0.5 (FP + FN)); 0 when the denominator is 0.
double F1(const SweepPoint& pt);

enum class AuprMode { kAveragePrecision, kTrapezoid };

// Trapezoidal area under TPR(FPR); tied batches give diagonal segments.
// Needs both classes, else CurveMetricsError.
double Auroc(std::span<const ScoredSample> samples);
double AurocFromSweep(std::span<const SweepPoint> sweep);

// Average precision: sum of dRecall * Precision over the sweep (default).
// Trapezoid: trapezoidal rule over the recall-advancing points, starting
// from (recall 0, precision 1). Needs at least one positive.
double Aupr(std::span<const ScoredSample> samples,
            AuprMode mode = AuprMode::kAveragePrecision);
double AuprFromSweep(std::span<const SweepPoint> sweep, AuprMode mode);

struct MaxF1Result {
  double value = 0.0;
  double threshold = 0.0;
  SweepPoint point;
};
// First (highest-threshold) point achieving the maximum F1.
MaxF1Result MaxF1(std::span<const ScoredSample> samples);
MaxF1Result MaxF1FromSweep(std::span<const SweepPoint> sweep);

struct MetricReport {
  double auroc = 0.0;
  double aupr = 0.0;
  double aupr_trapezoid = 0.0;
  double max_f1 = 0.0;
  double threshold = 0.0;
  int64_t n_pos = 0;
  int64_t n_neg = 0;

  // {auroc, aupr, aupr_trapezoid, max_f1, threshold, n_pos, n_neg}
  std::string ToJson(int indent = 2) const;
};

MetricReport Evaluate(std::span<const ScoredSample> samples);

// One row per sweep point:
// threshold,tp,fp,tn,fn,precision,recall,fpr,f1
void WriteCurveCsv(std::span<const SweepPoint> sweep, std::ostream& out);

// Golden toy test sets: 100 positives, 100,000 negatives each.
// Model A: positive k (1..100) scores 2(101-k); its 10 negatives score just
// below it; the rest score 0. Sweep visits (k, 10(k-1)) and (k, 10k).
std::vector<ScoredSample> ToyModelA();
// Model B: positives 1..90 outrank every negative; positive k in 91..100
// shares its score with 3,000 negatives, so the sweep goes (90, 0),
// (91, 3000), ..., (100, 30000). The remaining 70,000 negatives score 0.
std::vector<ScoredSample> ToyModelB();

// Flattens every pixel of every map into samples; mask > 0.5 is anomalous.
std::vector<ScoredSample> FlattenPixels(std::span<const AnomalyMap> maps,
                                        std::span<const AlphaMask> masks);
MetricReport PixelMetrics(std::span<const AnomalyMap> maps,
                          std::span<const AlphaMask> masks);

}  // namespace spotdiff

#endif  // SPOTDIFF_METRICS_H_
