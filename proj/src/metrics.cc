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

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "json.hpp"
#include "spotdiff/error.h"

namespace spotdiff {
namespace {

void RequirePositives(const SweepPoint& last) {
  if (last.positives() == 0) {
    throw CurveMetricsError("curve metric needs at least one positive sample");
  }
}

void RequireBothClasses(const SweepPoint& last) {
  RequirePositives(last);
  if (last.negatives() == 0) {
    throw CurveMetricsError("curve metric needs at least one negative sample");
  }
}

}  // namespace

std::vector<SweepPoint> Sweep(std::span<const ScoredSample> samples) {
  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  int64_t total_pos = 0;
  for (const auto& s : sorted) {
    if (!std::isfinite(s.score)) throw InvalidInput("non-finite score");
    if (s.label != 0 && s.label != 1) throw InvalidInput("label must be 0 or 1");
    total_pos += s.label;
  }
  const auto total_neg = static_cast<int64_t>(sorted.size()) - total_pos;
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) {
              return a.score > b.score;
            });

  std::vector<SweepPoint> points;
  points.push_back({std::numeric_limits<double>::infinity(), 0, 0, total_neg,
                    total_pos});
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    const double threshold = sorted[i].score;
    while (i < sorted.size() && sorted[i].score == threshold) {
      (sorted[i].label == 1 ? tp : fp) += 1;
      ++i;
    }
    points.push_back({threshold, tp, fp, total_neg - fp, total_pos - tp});
  }
  return points;
}

double Precision(const SweepPoint& pt) {
  const int64_t predicted = pt.tp + pt.fp;
  return predicted == 0 ? 1.0 : static_cast<double>(pt.tp) / predicted;
}

double Recall(const SweepPoint& pt) {
  const int64_t p = pt.positives();
  return p == 0 ? 0.0 : static_cast<double>(pt.tp) / p;
}

double FalsePositiveRate(const SweepPoint& pt) {
  const int64_t n = pt.negatives();
  return n == 0 ? 0.0 : static_cast<double>(pt.fp) / n;
}

double F1(const SweepPoint& pt) {
  const double denom = pt.tp + 0.5 * static_cast<double>(pt.fp + pt.fn);
  return denom == 0.0 ? 0.0 : pt.tp / denom;
}

double AurocFromSweep(std::span<const SweepPoint> sweep) {
  if (sweep.empty()) throw CurveMetricsError("empty sweep");
  RequireBothClasses(sweep.back());
  // Twice the trapezoid area in count units, exact in integers.
  int64_t twice_area = 0;
  for (size_t k = 1; k < sweep.size(); ++k) {
    twice_area += (sweep[k].fp - sweep[k - 1].fp) * (sweep[k].tp + sweep[k - 1].tp);
  }
  const auto p = static_cast<double>(sweep.back().positives());
  const auto n = static_cast<double>(sweep.back().negatives());
  return static_cast<double>(twice_area) / (2.0 * p * n);
}

double Auroc(std::span<const ScoredSample> samples) {
  return AurocFromSweep(Sweep(samples));
}

double AuprFromSweep(std::span<const SweepPoint> sweep, AuprMode mode) {
  if (sweep.empty()) throw CurveMetricsError("empty sweep");
  RequirePositives(sweep.back());
  const auto p = static_cast<double>(sweep.back().positives());
  double area = 0.0;
  if (mode == AuprMode::kAveragePrecision) {
    for (size_t k = 1; k < sweep.size(); ++k) {
      const int64_t dtp = sweep[k].tp - sweep[k - 1].tp;
      if (dtp == 0) continue;
      area += static_cast<double>(dtp) / p * Precision(sweep[k]);
    }
  } else {
    double prev_recall = 0.0;
    double prev_precision = 1.0;
    for (size_t k = 1; k < sweep.size(); ++k) {
      if (sweep[k].tp == sweep[k - 1].tp) continue;
      const double r = Recall(sweep[k]);
      const double pr = Precision(sweep[k]);
      area += (r - prev_recall) * (pr + prev_precision) * 0.5;
      prev_recall = r;
      prev_precision = pr;
    }
  }
  return area;
}

double Aupr(std::span<const ScoredSample> samples, AuprMode mode) {
  return AuprFromSweep(Sweep(samples), mode);
}

MaxF1Result MaxF1FromSweep(std::span<const SweepPoint> sweep) {
  if (sweep.empty()) throw CurveMetricsError("empty sweep");
  RequirePositives(sweep.back());
  MaxF1Result best;
  best.value = -1.0;
  for (const auto& pt : sweep) {
    const double f = F1(pt);
    if (f > best.value) {
      best.value = f;
      best.threshold = pt.threshold;
      best.point = pt;
    }
  }
  return best;
}

MaxF1Result MaxF1(std::span<const ScoredSample> samples) {
  return MaxF1FromSweep(Sweep(samples));
}

std::string MetricReport::ToJson(int indent) const {
  nlohmann::ordered_json j;
  j["auroc"] = auroc;
  j["aupr"] = aupr;
  j["aupr_trapezoid"] = aupr_trapezoid;
  j["max_f1"] = max_f1;
  j["threshold"] = threshold;
  j["n_pos"] = n_pos;
  j["n_neg"] = n_neg;
  return j.dump(indent);
}

MetricReport Evaluate(std::span<const ScoredSample> samples) {
  const auto sweep = Sweep(samples);
  RequireBothClasses(sweep.back());
  MetricReport r;
  r.auroc = AurocFromSweep(sweep);
  r.aupr = AuprFromSweep(sweep, AuprMode::kAveragePrecision);
  r.aupr_trapezoid = AuprFromSweep(sweep, AuprMode::kTrapezoid);
  const auto f1 = MaxF1FromSweep(sweep);
  r.max_f1 = f1.value;
  r.threshold = f1.threshold;
  r.n_pos = sweep.back().positives();
  r.n_neg = sweep.back().negatives();
  return r;
}

void WriteCurveCsv(std::span<const SweepPoint> sweep, std::ostream& out) {
  out << "threshold,tp,fp,tn,fn,precision,recall,fpr,f1\n";
  out.precision(17);
  for (const auto& pt : sweep) {
    out << pt.threshold << ',' << pt.tp << ',' << pt.fp << ',' << pt.tn << ','
        << pt.fn << ',' << Precision(pt) << ',' << Recall(pt) << ','
        << FalsePositiveRate(pt) << ',' << F1(pt) << '\n';
  }
}

std::vector<ScoredSample> ToyModelA() {
  std::vector<ScoredSample> s;
  s.reserve(100100);
  for (int k = 1; k <= 100; ++k) {
    const double score = 2.0 * (101 - k);
    s.push_back({score, 1});
    for (int j = 0; j < 10; ++j) s.push_back({score - 1.0, 0});
  }
  for (int j = 0; j < 99000; ++j) s.push_back({0.0, 0});
  return s;
}

std::vector<ScoredSample> ToyModelB() {
  std::vector<ScoredSample> s;
  s.reserve(100100);
  for (int k = 1; k <= 90; ++k) s.push_back({1000.0 - k, 1});
  for (int k = 91; k <= 100; ++k) {
    const double score = 101.0 - k;  // 10 down to 1
    s.push_back({score, 1});
    for (int j = 0; j < 3000; ++j) s.push_back({score, 0});
  }
  for (int j = 0; j < 70000; ++j) s.push_back({0.0, 0});
  return s;
}

std::vector<ScoredSample> FlattenPixels(std::span<const AnomalyMap> maps,
                                        std::span<const AlphaMask> masks) {
  if (maps.size() != masks.size()) {
    throw InvalidInput("map count differs from mask count");
  }
  std::vector<ScoredSample> out;
  for (size_t i = 0; i < maps.size(); ++i) {
    const auto& m = maps[i];
    const auto& g = masks[i];
    if (m.height != g.height() || m.width != g.width() ||
        m.values.size() != static_cast<size_t>(m.height) * m.width) {
      throw InvalidInput("anomaly map " + std::to_string(i) +
                         " does not match its mask size");
    }
    const auto gd = g.data();
    for (size_t p = 0; p < m.values.size(); ++p) {
      out.push_back({m.values[p], gd[p] > 0.5f ? 1 : 0});
    }
  }
  return out;
}

MetricReport PixelMetrics(std::span<const AnomalyMap> maps,
                          std::span<const AlphaMask> masks) {
  const auto samples = FlattenPixels(maps, masks);
  return Evaluate(samples);
}

}  // namespace spotdiff
