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

#include "spotdiff/imageops.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "spotdiff/error.h"
#include "spotdiff/synthetic.h"

namespace spotdiff {
namespace {

Image RandomImage(int h, int w, uint64_t seed) {
  RngStream r(seed, 1);
  Image img(h, w, 3);
  for (float& v : img.data()) v = static_cast<float>(r.Uniform01());
  return img;
}

Image NaturalImage() {
  SyntheticCorpusConfig cfg;
  cfg.texture = TextureFamily::kBlobs;
  cfg.seed = 17;
  return RenderNormal(cfg, 0);
}

AugConfig IdentityAug(int size) {
  AugConfig cfg;
  cfg.output_size = size;
  cfg.weak.min_scale = cfg.weak.max_scale = 1.0;
  cfg.weak.jitter_prob = cfg.weak.blur_prob = cfg.weak.hflip_prob = 0.0;
  cfg.strong.min_scale = cfg.strong.max_scale = 1.0;
  cfg.strong.min_aspect = cfg.strong.max_aspect = 1.0;
  cfg.strong.jitter_prob = cfg.strong.grayscale_prob = 0.0;
  cfg.strong.blur_prob = cfg.strong.hflip_prob = 0.0;
  return cfg;
}

// Foreground layer rebuilt outside the library: cut, jitter, paste on zeros.
Image Foreground(const Image& img, const BlendPlacement& p) {
  const int ch = img.channels();
  std::vector<float> patch;
  for (int y = 0; y < p.source.box_h; ++y)
    for (int x = 0; x < p.source.box_w; ++x)
      for (int c = 0; c < ch; ++c) patch.push_back(img.at(p.source.top + y, p.source.left + x, c));
  ApplyJitterPixels(patch, ch, p.jitter);
  Image u(img.height(), img.width(), ch);
  size_t k = 0;
  for (int y = 0; y < p.dest.box_h; ++y)
    for (int x = 0; x < p.dest.box_w; ++x)
      for (int c = 0; c < ch; ++c) u.at(p.dest.top + y, p.dest.left + x, c) = patch[k++];
  return u;
}

// ---------------------------------------------------------------------------
// SmoothBlend / CutPaste

TEST(SmoothBlendTest, PatchStatisticsOverManyDraws) {
  const Image img = RandomImage(64, 64, 1);
  AugConfig cfg;
  double min_area = 1.0, max_area = 0.0, min_ar = 10.0, max_ar = 0.0;
  for (int i = 0; i < 1000; ++i) {
    RngStream rng(5, static_cast<uint64_t>(i));
    const auto r = SmoothBlend(img, rng, cfg);
    const PatchBox& b = r.placement.dest;
    const double area = b.AreaFraction(64, 64), ar = b.AspectRatio();
    ASSERT_GE(area, 0.005);
    ASSERT_LE(area, 0.01);
    ASSERT_GE(ar, 0.3);
    ASSERT_LE(ar, 3.0);
    ASSERT_TRUE(b.top >= 0 && b.left >= 0 && b.top + b.box_h <= 64 && b.left + b.box_w <= 64);
    min_area = std::min(min_area, area);
    max_area = std::max(max_area, area);
    min_ar = std::min(min_ar, ar);
    max_ar = std::max(max_ar, ar);
  }
  // Integer sides at 64x64 allow 21..40 pixels of area.
  EXPECT_LE(min_area, 22.0 / 4096.0);
  EXPECT_GE(max_area, 39.0 / 4096.0);
  EXPECT_LE(min_ar, 0.4);
  EXPECT_GE(max_ar, 2.5);
}

TEST(SmoothBlendTest, OutsideMaskIsBitIdentical) {
  const Image img = RandomImage(64, 64, 2);
  AugConfig cfg;
  for (int i = 0; i < 50; ++i) {
    RngStream rng(6, static_cast<uint64_t>(i));
    const auto r = SmoothBlend(img, rng, cfg);
    const Image u = Foreground(img, r.placement);
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const float a = r.mask.at(y, x);
        ASSERT_GE(a, 0.0f);
        ASSERT_LE(a, 1.0f);
        for (int c = 0; c < 3; ++c) {
          const float o = r.image.at(y, x, c);
          if (a == 0.0f) {
            ASSERT_EQ(o, img.at(y, x, c));
          }
          const float lo = std::min(img.at(y, x, c), u.at(y, x, c));
          const float hi = std::max(img.at(y, x, c), u.at(y, x, c));
          ASSERT_GE(o, lo - 1e-6f);
          ASSERT_LE(o, hi + 1e-6f);
        }
      }
    }
  }
}

TEST(SmoothBlendTest, BlendMatchesScalarOracle) {
  // Constant grey, patch brightened to 0.7, mask blurred with sigma 8.
  const Image img(256, 256, 3, 0.5f);
  BlendPlacement p;
  p.source = {10, 10, 24, 24};
  p.dest = {100, 120, 24, 24};
  p.jitter.brightness = 1.4;
  const auto r = ApplyBlend(img, p, 8.0, 8.0);
  double closest = 1.0;
  int cy = 0, cx = 0;
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 256; ++x) {
      const double a = r.mask.at(y, x);
      const double u = p.dest.Contains(y, x) ? 0.5 * 1.4 : 0.0;
      const double want = std::clamp((1.0 - a) * 0.5 + a * u, 0.0, 1.0);
      ASSERT_NEAR(r.image.at(y, x, 0), want, 1e-6);
      if (p.dest.Contains(y, x) && std::abs(a - 0.5) < closest) {
        closest = std::abs(a - 0.5);
        cy = y;
        cx = x;
      }
    }
  }
  ASSERT_LT(closest, 0.05);
  EXPECT_NEAR(r.image.at(cy, cx, 1), 0.5 + 0.2 * r.mask.at(cy, cx), 1e-6);

  // The same pixel arithmetic at exactly alpha = 0.5.
  AlphaMask half(8, 8);
  half.at(4, 4) = 0.5f;
  const Image grey(8, 8, 3, 0.5f), bright(8, 8, 3, 0.7f);
  EXPECT_NEAR(AlphaBlend(grey, bright, half).at(4, 4, 2), 0.6, 1e-6);
}

TEST(SmoothBlendTest, ForcedIdentity) {
  const Image img = RandomImage(64, 64, 3);
  BlendPlacement p;
  p.source = p.dest = {20, 30, 5, 6};
  // Unblurred alpha with zero jitter pasted onto its own source.
  EXPECT_EQ(ApplyBlend(img, p, 0.0, 0.0).image, img);
  // With blur, every pixel inside the box keeps its value up to rounding;
  // the zero foreground darkens the surrounding ring.
  const auto blurred = ApplyBlend(img, p, 8.0, 8.0);
  for (int y = 20; y < 25; ++y)
    for (int x = 30; x < 36; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(blurred.image.at(y, x, c), img.at(y, x, c), 1e-6);
}

TEST(SmoothBlendTest, Deterministic) {
  const Image img = RandomImage(64, 64, 4);
  AugConfig cfg;
  RngStream a(9, 9), b(9, 9);
  const auto ra = SmoothBlend(img, a, cfg);
  const auto rb = SmoothBlend(img, b, cfg);
  EXPECT_EQ(ra.image, rb.image);
  EXPECT_EQ(ra.mask, rb.mask);
}

TEST(SmoothBlendTest, TooSmallImageRejected) {
  const Image img(8, 8, 3, 0.5f);
  AugConfig cfg;
  RngStream rng(1, 1);
  EXPECT_THROW(SmoothBlend(img, rng, cfg), InvalidInput);
  EXPECT_THROW(CutPaste(img, rng, cfg), InvalidInput);
}

TEST(SmoothBlendTest, DisjointStreamsGiveIndependentLocations) {
  // 4x4 contingency table of paste quadrants for stream pairs (2k, 2k+1).
  AugConfig cfg;
  const int pairs = 2000;
  std::array<std::array<double, 4>, 4> table{};
  for (int k = 0; k < pairs; ++k) {
    RngStream a(77, 2 * k), b(77, 2 * k + 1);
    const auto pa = SampleBlendPlacement(64, 64, a, cfg.smoothblend).dest;
    const auto pb = SampleBlendPlacement(64, 64, b, cfg.smoothblend).dest;
    auto quad = [](const PatchBox& p) {
      return (p.top + p.box_h / 2 >= 32 ? 2 : 0) + (p.left + p.box_w / 2 >= 32 ? 1 : 0);
    };
    table[quad(pa)][quad(pb)] += 1.0;
  }
  std::array<double, 4> rows{}, cols{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      rows[i] += table[i][j];
      cols[j] += table[i][j];
    }
  double chi2 = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double e = rows[i] * cols[j] / pairs;
      chi2 += (table[i][j] - e) * (table[i][j] - e) / e;
    }
  // 9 degrees of freedom; 27.88 is the 0.999 quantile.
  EXPECT_LT(chi2, 27.88);
}

TEST(CutPasteTest, MaskIsBinaryAndQuantizesSmoothBlend) {
  const Image img = RandomImage(64, 64, 5);
  AugConfig cfg;
  for (int i = 0; i < 200; ++i) {
    RngStream a(3, static_cast<uint64_t>(i)), b(3, static_cast<uint64_t>(i));
    const auto cut = CutPaste(img, a, cfg);
    const auto smooth = SmoothBlend(img, b, cfg);
    ASSERT_TRUE(cut.mask.IsBinary());
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        ASSERT_EQ(cut.mask.at(y, x), smooth.placement.dest.Contains(y, x) ? 1.0f : 0.0f);
  }
}

TEST(CutPasteTest, ConstantImageOracle) {
  const Image img(64, 64, 3, 0.5f);
  BlendPlacement p;
  p.source = {2, 3, 5, 6};
  p.dest = {40, 41, 5, 6};
  p.jitter.brightness = 1.4;
  const auto r = ApplyBlend(img, p, 0.0, 0.0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c)
        ASSERT_FLOAT_EQ(r.image.at(y, x, c), p.dest.Contains(y, x) ? 0.7f : 0.5f);
}

TEST(CutPasteTest, ForcedIdentity) {
  const Image img = RandomImage(32, 32, 6);
  BlendPlacement p;
  p.source = p.dest = {4, 4, 3, 3};
  EXPECT_EQ(ApplyBlend(img, p, 0.0, 0.0).image, img);
}

// ---------------------------------------------------------------------------
// Blur

TEST(GaussianBlurTest, KernelNormalizedWithThreeSigmaRadius) {
  for (double s : {0.3, 1.0, 2.5, 8.0}) {
    const auto k = GaussianKernel(s);
    EXPECT_EQ(k.size(), 2 * static_cast<size_t>(std::ceil(3.0 * s)) + 1);
    double sum = 0.0;
    for (double v : k) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
  EXPECT_EQ(GaussianKernel(0.0), std::vector<double>{1.0});
  EXPECT_THROW(GaussianKernel(-1.0), InvalidInput);
}

TEST(GaussianBlurTest, ConstantImageUnchanged) {
  const Image img(20, 17, 3, 0.3f);
  const Image out = GaussianBlur(img, 2.0, 1.5);
  for (float v : out.data()) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(GaussianBlurTest, ImpulseMatchesDenseConvolution) {
  Image img(15, 15, 1);
  img.at(7, 7, 0) = 1.0f;
  const Image out = GaussianBlur(img, 1.0, 1.0);
  // Independent 2-D kernel, radius 3, normalized over the full window.
  double w[7][7], sum = 0.0;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j) sum += w[i + 3][j + 3] = std::exp(-(i * i + j * j) / 2.0);
  for (int y = 0; y < 15; ++y) {
    for (int x = 0; x < 15; ++x) {
      const int dy = y - 7, dx = x - 7;
      const double want = (std::abs(dy) <= 3 && std::abs(dx) <= 3) ? w[dy + 3][dx + 3] / sum : 0.0;
      EXPECT_NEAR(out.at(y, x, 0), want, 1e-7);
    }
  }
}

TEST(GaussianBlurTest, ZeroSigmaIsIdentityAndNegativeRejected) {
  const Image img = RandomImage(16, 16, 7);
  EXPECT_EQ(GaussianBlur(img, 0.0, 0.0), img);
  EXPECT_THROW(GaussianBlur(img, -0.5, 1.0), InvalidInput);
}

TEST(GaussianBlurTest, PreservesMeanWithConstantBorder) {
  Image img(32, 32, 1, 0.2f);
  for (int y = 12; y < 20; ++y)
    for (int x = 13; x < 18; ++x) img.at(y, x, 0) = 0.9f;
  const Image out = GaussianBlur(img, 1.5, 1.5);
  double a = 0.0, b = 0.0;
  for (size_t i = 0; i < img.size(); ++i) {
    a += img.data()[i];
    b += out.data()[i];
  }
  EXPECT_NEAR(a / img.size(), b / img.size(), 1e-5);
}

TEST(GaussianBlurTest, ReflectPadding) {
  // Edge impulse: padding mirrors around the edge pixel without repeating it.
  std::vector<double> plane(16, 0.0);
  plane[0] = 1.0;
  GaussianBlurPlane(plane, 1, 16, 0.0, 1.0);
  const auto k = GaussianKernel(1.0);
  EXPECT_NEAR(plane[0], k[3], 1e-12);
  EXPECT_NEAR(plane[1], k[2], 1e-12);
  EXPECT_NEAR(plane[3], k[0], 1e-12);
  EXPECT_NEAR(plane[4], 0.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Colour jitter

TEST(ColorJitterTest, ZeroStrengthIsIdentity) {
  const Image img = RandomImage(16, 16, 8);
  RngStream rng(1, 2);
  EXPECT_EQ(ColorJitter(img, rng, JitterStrengths{}), img);
}

TEST(ColorJitterTest, BrightnessOracle) {
  const Image img(8, 8, 3, 0.5f);
  JitterParams p;
  p.brightness = 1.2;
  const Image out = ApplyJitter(img, p);
  for (float v : out.data()) EXPECT_NEAR(v, 0.6f, 1e-6);
}

TEST(ColorJitterTest, OutputInRange) {
  const Image img = RandomImage(16, 16, 9);
  for (int i = 0; i < 200; ++i) {
    RngStream rng(4, static_cast<uint64_t>(i));
    const Image out = ColorJitter(img, rng, {0.9, 0.9, 0.9, 0.5});
    for (float v : out.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(ColorJitterTest, FactorsWithinStrength) {
  const JitterStrengths s{0.1, 0.2, 0.3, 0.05};
  for (int i = 0; i < 500; ++i) {
    RngStream rng(5, static_cast<uint64_t>(i));
    const auto p = SampleJitter(rng, s);
    ASSERT_GE(p.brightness, 0.9);
    ASSERT_LE(p.brightness, 1.1);
    ASSERT_GE(p.contrast, 0.8);
    ASSERT_LE(p.contrast, 1.2);
    ASSERT_GE(p.saturation, 0.7);
    ASSERT_LE(p.saturation, 1.3);
    ASSERT_LE(std::abs(p.hue), 0.05);
    auto order = p.order;
    std::sort(order.begin(), order.end());
    ASSERT_EQ(order, (std::array<int, 4>{0, 1, 2, 3}));
  }
  RngStream rng(1, 1);
  EXPECT_THROW(SampleJitter(rng, {-0.1, 0, 0, 0}), InvalidInput);
}

// ---------------------------------------------------------------------------
// Crops and global pipelines

TEST(RandomResizedCropTest, FullScaleSameSizeIsIdentity) {
  const Image img = RandomImage(32, 32, 10);
  RngStream rng(1, 1);
  EXPECT_EQ(RandomResizedCrop(img, rng, 1.0, 1.0, 32), img);
}

TEST(RandomResizedCropTest, QuarterCropOfCheckerboard) {
  // 2x2-pixel checkerboard; a quarter-area crop is the 8x8 top-left corner.
  Image img(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) img.at(y, x, 0) = ((y / 2 + x / 2) & 1) ? 1.0f : 0.0f;
  RngStream rng(2, 2);
  const auto win = SampleCropPreservingAspect(16, 16, rng, 0.25, 0.25);
  EXPECT_EQ(win.height, 8);
  EXPECT_EQ(win.width, 8);
  const Image out = ApplyCrop(img, CropWindow{0, 0, 8, 8}, 16);
  // Half-pixel centres: output o samples source (o + 0.5) / 2 - 0.5; taps
  // past the window read the neighbouring image pixels.
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const double sy = std::clamp((y + 0.5) / 2.0 - 0.5, 0.0, 15.0);
      const double sx = std::clamp((x + 0.5) / 2.0 - 0.5, 0.0, 15.0);
      const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
      const int y1 = std::min(y0 + 1, 15), x1 = std::min(x0 + 1, 15);
      const double fy = sy - y0, fx = sx - x0;
      auto v = [&](int yy, int xx) { return static_cast<double>(img.at(yy, xx, 0)); };
      const double want = (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) +
                          fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
      EXPECT_NEAR(out.at(y, x, 0), want, 1e-6);
    }
  }
}

TEST(RandomResizedCropTest, RealizedScaleWithinRange) {
  for (int i = 0; i < 1000; ++i) {
    RngStream rng(3, static_cast<uint64_t>(i));
    const auto win = SampleCropPreservingAspect(64, 64, rng, 0.9, 1.0);
    const double f = win.AreaFraction(64, 64);
    ASSERT_GE(f, 0.9);
    ASSERT_LE(f, 1.0);
    ASSERT_LE(win.top + win.height, 64);
    ASSERT_LE(win.left + win.width, 64);
  }
}

TEST(WeakAugmentTest, ForcedIdentity) {
  const Image img = RandomImage(32, 32, 11);
  RngStream rng(1, 1);
  EXPECT_EQ(WeakAugment(img, rng, IdentityAug(32)), img);
}

TEST(WeakAugmentTest, Deterministic) {
  const Image img = NaturalImage();
  AugConfig cfg;
  RngStream a(4, 4), b(4, 4);
  EXPECT_EQ(WeakAugment(img, a, cfg), WeakAugment(img, b, cfg));
}

TEST(WeakAugmentTest, StaysCloseToInput) {
  // Empirical bound, frozen from a reference run: mean |diff| ~ 0.05.
  const Image img = NaturalImage();
  AugConfig cfg;
  double total = 0.0;
  for (int i = 0; i < 100; ++i) {
    RngStream rng(12, static_cast<uint64_t>(i));
    const Image out = WeakAugment(img, rng, cfg);
    double mad = 0.0;
    for (size_t k = 0; k < out.size(); ++k) mad += std::abs(out.data()[k] - img.data()[k]);
    total += mad / out.size();
  }
  EXPECT_LT(total / 100.0, 0.15);
}

TEST(StrongAugmentTest, ForcedIdentity) {
  const Image img = RandomImage(32, 32, 12);
  RngStream rng(1, 1);
  EXPECT_EQ(StrongAugment(img, rng, IdentityAug(32)), img);
}

TEST(StrongAugmentTest, GrayscaleBranchEqualizesChannels) {
  const Image img = RandomImage(32, 32, 13);
  AugConfig cfg;
  cfg.output_size = 32;
  cfg.strong.grayscale_prob = 1.0;
  cfg.strong.blur_prob = 0.0;
  for (int i = 0; i < 20; ++i) {
    RngStream rng(5, static_cast<uint64_t>(i));
    const Image out = StrongAugment(img, rng, cfg);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        ASSERT_EQ(out.at(y, x, 0), out.at(y, x, 1));
        ASSERT_EQ(out.at(y, x, 1), out.at(y, x, 2));
      }
  }
}

TEST(StrongAugmentTest, Deterministic) {
  const Image img = NaturalImage();
  AugConfig cfg;
  RngStream a(6, 6), b(6, 6);
  EXPECT_EQ(StrongAugment(img, a, cfg), StrongAugment(img, b, cfg));
}

TEST(AugConfigTest, Validation) {
  AugConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.weak.jitter_prob = 1.5;
  EXPECT_THROW(cfg.Validate(), InvalidInput);
  cfg = AugConfig{};
  cfg.smoothblend.min_area = 0.02;
  EXPECT_THROW(cfg.Validate(), InvalidInput);
  cfg = AugConfig{};
  cfg.output_size = 4;
  EXPECT_THROW(cfg.Validate(), InvalidInput);
}

// ---------------------------------------------------------------------------
// SPD triplets

TEST(SpdTripletTest, IdentityComponentsGiveEqualViews) {
  const Image img = RandomImage(64, 64, 14);
  const AugConfig cfg = IdentityAug(64);
  RngStream rng(1, 1);
  const auto weak = SampleWeak(64, 64, rng, cfg.weak);
  const Image positive = ApplyWeak(img, weak, 64);
  BlendPlacement p;
  p.source = p.dest = {10, 10, 5, 5};
  const Image negative = ApplyBlend(ApplyWeak(img, weak, 64), p, 0.0, 0.0).image;
  const Image anchor = ResizeBilinear(img, 64, 64);
  EXPECT_EQ(anchor, positive);
  EXPECT_EQ(positive, negative);
}

TEST(SpdTripletTest, NegativeDiffersOnlyInsideMask) {
  const Image img = NaturalImage();
  AugConfig cfg;
  for (int i = 0; i < 20; ++i) {
    RngStream rng(8, static_cast<uint64_t>(i));
    const auto t = MakeSpdTriplet(img, rng, cfg);
    EXPECT_EQ(t.anchor, ResizeBilinear(img, 64, 64));
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (t.mask.at(y, x) == 0.0f)
          for (int c = 0; c < 3; ++c) ASSERT_EQ(t.negative.at(y, x, c), t.negative_base.at(y, x, c));
  }
}

TEST(SpdTripletTest, Reproducible) {
  const Image img = NaturalImage();
  AugConfig cfg;
  RngStream a(3, 3), b(3, 3);
  const auto ta = MakeSpdTriplet(img, a, cfg);
  const auto tb = MakeSpdTriplet(img, b, cfg);
  EXPECT_EQ(ta.anchor, tb.anchor);
  EXPECT_EQ(ta.positive, tb.positive);
  EXPECT_EQ(ta.negative, tb.negative);
  EXPECT_EQ(ta.mask, tb.mask);
}

TEST(SpdTripletTest, CutPasteVariantHasBinaryMask) {
  const Image img = NaturalImage();
  AugConfig cfg;
  cfg.local = LocalAugmentation::kCutPaste;
  RngStream rng(2, 2);
  EXPECT_TRUE(MakeSpdTriplet(img, rng, cfg).mask.IsBinary());
}

}  // namespace
}  // namespace spotdiff
