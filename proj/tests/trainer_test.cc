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

#include "spotdiff/trainer.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "loss_suite.h"
#include "spotdiff/checkpoint.h"
#include "spotdiff/error.h"
#include "spotdiff/synthetic.h"

namespace spotdiff {
namespace {

TrainConfig TinyConfig() {
  TrainConfig cfg;
  cfg.model.input_size = 16;
  cfg.model.widths = {4, 6, 8};
  cfg.model.proj_hidden = 8;
  cfg.model.proj_dim = 6;
  cfg.aug.output_size = 16;
  // Patch areas of 0.5-1% need a larger canvas than 16x16.
  cfg.aug.smoothblend.min_area = 0.02;
  cfg.aug.smoothblend.max_area = 0.04;
  cfg.batch = 4;
  cfg.steps = 6;
  cfg.seed = 3;
  return cfg;
}

std::vector<Image> TinyCorpus(int n = 8) {
  SyntheticCorpusConfig sc;
  sc.texture = TextureFamily::kMixed;
  sc.image_count = n;
  sc.size = 16;
  sc.min_defect = 2;
  sc.max_defect = 4;
  sc.seed = 9;
  return GenerateSyntheticCorpus(sc).images;
}

TEST(GradCheckTest, EveryLossThroughFullNetwork) {
  ModelConfig cfg;
  cfg.input_size = 16;
  auto m = std::make_shared<Model<double>>(cfg, 1);
  const auto x = testing::TextureInput(cfg, 1);
  for (const auto& l : testing::LossSuite(m, x)) {
    const auto r = GradCheck(m->NamedParameters(), l.loss, 200, 1e-5, 7);
    EXPECT_EQ(r.checked, 200) << l.name;
    EXPECT_LT(r.max_rel_error, 1e-4) << l.name << " worst " << r.worst;
  }
}

TEST(GradCheckTest, LinearLossHasNoError) {
  auto p = nn::Var<double>::Parameter(nn::Tensor<double>({3, 4}, 0.25));
  const auto r = GradCheck({{"p", p}}, [&] { return nn::Mean(p); }, 12);
  EXPECT_EQ(r.checked, 12);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheckTest, DetectsWrongGradient) {
  auto p = nn::Var<double>::Parameter(nn::Tensor<double>({4}, 0.5));
  auto broken = [&] {
    double s = 0.0;
    for (double v : p.value().data()) s += v * v;
    return nn::MakeOp<double>(nn::Tensor<double>({1}, s), {p}, [](nn::Node<double>& self) {
      std::vector<double> g(self.parents[0]->value.numel());
      for (size_t i = 0; i < g.size(); ++i) g[i] = self.parents[0]->value[i];  // missing factor 2
      self.parents[0]->Accumulate(g);
    });
  };
  EXPECT_NEAR(GradCheck({{"p", p}}, broken, 4).max_rel_error, 0.5, 1e-6);
}

TEST(GradCheckTest, SkipsEntriesAcrossReluKink) {
  // relu(p) at p = 0.5e-5 with step 1e-5 straddles the kink.
  auto p = nn::Var<double>::Parameter(nn::Tensor<double>({2}, std::vector<double>{0.5e-5, 1.0}));
  const auto r = GradCheck({{"p", p}}, [&] { return nn::Mean(nn::Relu(p)); }, 2);
  EXPECT_EQ(r.skipped_kinks, 1);
  EXPECT_EQ(r.checked, 1);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(TrainerTest, ZeroEtaEqualsBaseOnly) {
  const auto corpus = TinyCorpus();
  TrainConfig a = TinyConfig();
  a.eta = 0.0;
  TrainConfig b = TinyConfig();
  b.spd_enabled = false;
  EXPECT_EQ(TrainSpd(a, corpus).loss_history, TrainSpd(b, corpus).loss_history);
  TrainConfig c = TinyConfig();
  EXPECT_NE(TrainSpd(c, corpus).loss_history, TrainSpd(b, corpus).loss_history);
}

TEST(TrainerTest, FixedSeedReproducible) {
  const auto corpus = TinyCorpus();
  const TrainConfig cfg = TinyConfig();
  const Checkpoint a = TrainSpd(cfg, corpus);
  const Checkpoint b = TrainSpd(cfg, corpus);
  EXPECT_EQ(a.loss_history, b.loss_history);
  ASSERT_EQ(a.params.size(), b.params.size());
  for (size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.params[i].data, b.params[i].data);
  TrainConfig other = cfg;
  other.seed = 4;
  EXPECT_NE(TrainSpd(other, corpus).loss_history, a.loss_history);
}

TEST(TrainerTest, CheckpointCarriesHistoryAndConfig) {
  const auto corpus = TinyCorpus();
  const TrainConfig cfg = TinyConfig();
  int calls = 0;
  const Checkpoint ck = TrainSpd(cfg, corpus, [&](int step, double loss) {
    EXPECT_EQ(step, ++calls);
    EXPECT_TRUE(std::isfinite(loss));
  });
  EXPECT_EQ(calls, cfg.steps);
  EXPECT_EQ(ck.loss_history.size(), static_cast<size_t>(cfg.steps));
  EXPECT_EQ(ck.seed, cfg.seed);
  EXPECT_EQ(ck.train_config["eta"], 0.1);
  EXPECT_EQ(ck.train_config["objective"], "simclr");
  EXPECT_EQ(ck.model, cfg.model);
}

TEST(TrainerTest, SimSiamAndDoublePrecisionRun) {
  const auto corpus = TinyCorpus();
  TrainConfig cfg = TinyConfig();
  cfg.objective = Objective::kSimSiam;
  cfg.steps = 3;
  const auto a = TrainSpd(cfg, corpus);
  for (double v : a.loss_history) {
    EXPECT_GE(v, -1.0 - 2.0 * cfg.eta);
    EXPECT_LE(v, 1.0 + 2.0 * cfg.eta);
  }
  cfg.precision = FloatPrecision::kF64;
  const auto b = TrainSpd(cfg, corpus);
  ASSERT_EQ(b.loss_history.size(), 3u);
  EXPECT_NEAR(a.loss_history[0], b.loss_history[0], 1e-4);
}

TEST(TrainerTest, NonFiniteLossReportsStep) {
  auto corpus = TinyCorpus();
  for (auto& img : corpus) img.data()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    TrainSpd(TinyConfig(), corpus);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.step(), 1);
  }
}

TEST(TrainerTest, ConfigValidation) {
  const auto corpus = TinyCorpus();
  TrainConfig cfg = TinyConfig();
  cfg.eta = -0.1;
  EXPECT_THROW(TrainSpd(cfg, corpus), InvalidInput);
  cfg = TinyConfig();
  cfg.tau = 0.0;
  EXPECT_THROW(TrainSpd(cfg, corpus), InvalidInput);
  cfg = TinyConfig();
  cfg.batch = 0;
  EXPECT_THROW(TrainSpd(cfg, corpus), InvalidInput);
  cfg = TinyConfig();
  cfg.aug.output_size = 32;
  EXPECT_THROW(TrainSpd(cfg, corpus), InvalidInput);
  EXPECT_THROW(TrainSpd(TinyConfig(), {}), InvalidInput);
  EXPECT_EQ(ParseObjective("simsiam"), Objective::kSimSiam);
  EXPECT_EQ(ParsePrecision("f64"), FloatPrecision::kF64);
  EXPECT_THROW(ParseObjective("moco"), InvalidInput);
}

TEST(SupervisedAuxTest, ZeroEtaIsPlainClassifier) {
  const auto corpus = TinyCorpus();
  const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
  TrainConfig a = TinyConfig();
  a.eta = 0.0;
  TrainConfig b = TinyConfig();
  b.spd_enabled = false;
  const auto ca = TrainSupervisedAux(a, corpus, labels);
  EXPECT_EQ(ca.loss_history, TrainSupervisedAux(b, corpus, labels).loss_history);
  EXPECT_EQ(ca.model.num_classes, 3);
  EXPECT_EQ(ca.train_config["objective"], "supervised");
  const std::vector<int> short_labels{0, 1};
  EXPECT_THROW(TrainSupervisedAux(a, corpus, short_labels), InvalidInput);
  EXPECT_THROW(TrainSpd(TrainConfig{.objective = Objective::kSupervisedAux}, corpus), InvalidInput);
}

TEST(SupervisedAuxTest, WithSpdTermRuns) {
  const auto corpus = TinyCorpus();
  const std::vector<int> labels{0, 1, 0, 1, 0, 1, 0, 1};
  TrainConfig cfg = TinyConfig();
  cfg.supervised_spd_cosine = true;
  const auto ck = TrainSupervisedAux(cfg, corpus, labels);
  ASSERT_EQ(ck.loss_history.size(), static_cast<size_t>(cfg.steps));
  for (double v : ck.loss_history) EXPECT_TRUE(std::isfinite(v));
}

// Aux head trained alone on fixed, linearly separable features.
struct AuxRun {
  double final_loss;
  double accuracy_vs_true;
};

AuxRun TrainAuxHead(bool flip) {
  ModelConfig cfg;
  cfg.input_size = 16;
  cfg.widths = {4, 6, 8};
  Model<double> m(cfg, 5);
  RngStream rng(6, 6);
  const int n = 32;
  nn::Tensor<double> h({n, 8});
  std::vector<int> truth(n), target(n);
  for (int i = 0; i < n; ++i) {
    truth[i] = i % 2;
    target[i] = flip ? 1 - truth[i] : truth[i];
    for (int d = 0; d < 8; ++d) h[i * 8 + d] = rng.Uniform(-1, 1);
    h[i * 8] = truth[i] ? rng.Uniform(0.5, 1.5) : rng.Uniform(-1.5, -0.5);
  }
  const auto hv = nn::Var<double>::Constant(h);
  std::vector<nn::Var<double>> aux;
  for (auto& p : m.NamedParameters())
    if (p.name.rfind("aux", 0) == 0) aux.push_back(p.var);
  Sgd<double> opt(aux, 0.5, 0.9);
  double loss = 0.0;
  for (int step = 1; step <= 400; ++step) {
    for (auto& p : aux) p.ZeroGrad();
    const auto l = CrossEntropy(m.AuxLogits(hv), std::span<const int>(target));
    loss = l.item();
    nn::Backward(l);
    opt.Step(step);
  }
  const auto logits = m.AuxLogits(hv).value();
  int correct = 0;
  for (int i = 0; i < n; ++i) correct += (logits[i * 2 + 1] > logits[i * 2]) == (truth[i] == 1);
  return {loss, static_cast<double>(correct) / n};
}

TEST(SupervisedAuxTest, AuxHeadConvergesOnSeparableFeatures) {
  const AuxRun r = TrainAuxHead(false);
  EXPECT_LT(r.final_loss, 0.05);
  EXPECT_EQ(r.accuracy_vs_true, 1.0);
}

TEST(SupervisedAuxTest, FlippedTargetsFlipAccuracy) {
  const AuxRun a = TrainAuxHead(false), b = TrainAuxHead(true);
  EXPECT_NEAR(b.accuracy_vs_true, 1.0 - a.accuracy_vs_true, 1e-12);
}

}  // namespace
}  // namespace spotdiff
