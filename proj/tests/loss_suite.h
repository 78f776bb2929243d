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

// Every training loss wired through the full encoder and projector, for
// finite-difference checks in 64-bit.

#ifndef SPOTDIFF_TESTS_LOSS_SUITE_H_
#define SPOTDIFF_TESTS_LOSS_SUITE_H_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "spotdiff/model.h"
#include "spotdiff/objectives.h"
#include "spotdiff/rng.h"
#include "spotdiff/synthetic.h"

namespace spotdiff::testing {

struct NamedLoss {
  std::string name;
  std::function<nn::Var<double>()> loss;
};

// Eight mixed-texture images: rows 0-3 anchors, 4-7 their partners. The SPD
// loss uses rows 0-3 as anchors, 4-7 as negatives and 2-5 as positives.
inline nn::Var<double> TextureInput(const ModelConfig& cfg, uint64_t seed) {
  SyntheticCorpusConfig sc;
  sc.texture = TextureFamily::kMixed;
  sc.image_count = 8;
  sc.size = cfg.input_size;
  sc.min_defect = 2;
  sc.max_defect = 4;
  sc.seed = seed;
  return nn::Var<double>::Constant(ImagesToTensor<double>(GenerateSyntheticCorpus(sc).images, cfg));
}

inline std::vector<NamedLoss> LossSuite(std::shared_ptr<const Model<double>> m,
                                        nn::Var<double> x) {
  auto z = [m, x] { return m->Forward(x).z; };
  auto rows = [](const nn::Var<double>& v, int a, int b) { return nn::Slice0(v, a, b); };
  static const std::vector<int> kLabels = {0, 1, 1, 0, 1, 0, 0, 1};
  std::vector<NamedLoss> out;
  out.push_back({"info_nce", [=] {
                   const auto zz = z();
                   return InfoNce(rows(zz, 0, 4), rows(zz, 4, 8), 0.2);
                 }});
  out.push_back({"spd_loss", [=] {
                   const auto zz = z();
                   return SpdLoss(rows(zz, 0, 4), rows(zz, 4, 8), rows(zz, 2, 6));
                 }});
  out.push_back({"combined_eta_0.1", [=] {
                   const auto zz = z();
                   const auto base = InfoNce(rows(zz, 0, 4), rows(zz, 4, 8), 0.2);
                   const auto spd = SpdLoss(rows(zz, 0, 4), rows(zz, 4, 8), rows(zz, 2, 6));
                   return CombinedLoss(base, spd, 0.1);
                 }});
  // Targets frozen at the starting parameters: the stopped branch is a
  // constant, which is what finite differences must see as well.
  const auto target = nn::Var<double>::Constant(m->Forward(x).z.value());
  out.push_back({"simsiam_positive", [=] {
                   const auto p = m->Predict(z());
                   return SimSiamPositiveLoss(rows(p, 0, 4), rows(target, 4, 8), rows(p, 4, 8),
                                              rows(target, 0, 4));
                 }});
  out.push_back({"focal", [=] {
                   const auto h = m->Encode(x, nullptr);
                   return FocalLoss(m->AuxLogits(h), std::span<const int>(kLabels), 2.0, 0.25);
                 }});
  out.push_back({"cross_entropy", [=] {
                   const auto h = m->Encode(x, nullptr);
                   return CrossEntropy(m->AuxLogits(h), std::span<const int>(kLabels));
                 }});
  return out;
}

}  // namespace spotdiff::testing

#endif  // SPOTDIFF_TESTS_LOSS_SUITE_H_
