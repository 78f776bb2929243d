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

// Seeded image augmentations for contrastive pre-training.
//
// Every random operation comes in two halves: a Sample* function that draws
// all parameters from an RngStream, and an Apply* function that is a pure
// function of the image and those parameters. The one-call wrappers
// (SmoothBlend, WeakAugment, ...) just chain the two. Tests force
// parameters through the Apply* half.

#ifndef SPOTDIFF_IMAGEOPS_H_
#define SPOTDIFF_IMAGEOPS_H_

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "spotdiff/image.h"
#include "spotdiff/rng.h"

namespace spotdiff {

struct JitterStrengths {
  double brightness = 0.0;
  double contrast = 0.0;
  double saturation = 0.0;
  double hue = 0.0;  // fraction of the hue circle
};

// Concrete jitter draw. Multiplicative factors, additive hue shift; `order`
// is a permutation of {0: brightness, 1: contrast, 2: saturation, 3: hue}.
struct JitterParams {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;
  std::array<int, 4> order = {0, 1, 2, 3};
};

enum class LocalAugmentation { kSmoothBlend, kCutPaste };

struct SmoothBlendConfig {
  double min_area = 0.005;  // fraction of the image area
  double max_area = 0.01;
  double min_aspect = 0.3;  // box_w / box_h
  double max_aspect = 3.0;
  double mask_sigma_y = 8.0;
  double mask_sigma_x = 8.0;
  JitterStrengths jitter = {0.1, 0.1, 0.1, 0.05};
};

struct WeakAugConfig {
  double min_scale = 0.9;
  double max_scale = 1.0;
  JitterStrengths jitter = {0.1, 0.1, 0.1, 0.05};
  double jitter_prob = 0.8;
  double min_blur_sigma = 0.1;
  double max_blur_sigma = 0.3;
  double blur_prob = 0.5;
  double hflip_prob = 0.5;
};

struct StrongAugConfig {
  double min_scale = 0.2;
  double max_scale = 1.0;
  double min_aspect = 3.0 / 4.0;
  double max_aspect = 4.0 / 3.0;
  JitterStrengths jitter = {0.4, 0.4, 0.4, 0.1};
  double jitter_prob = 0.8;
  double grayscale_prob = 0.2;
  double min_blur_sigma = 0.1;
  double max_blur_sigma = 2.0;
  double blur_prob = 0.5;
  double hflip_prob = 0.5;
};

struct AugConfig {
  SmoothBlendConfig smoothblend;
  WeakAugConfig weak;
  StrongAugConfig strong;
  LocalAugmentation local = LocalAugmentation::kSmoothBlend;
  int output_size = 64;

  // Throws InvalidInput on empty ranges or probabilities outside [0, 1].
  void Validate() const;
};

struct PatchBox {
  int top = 0;
  int left = 0;
  int box_h = 0;
  int box_w = 0;

  double AreaFraction(int image_h, int image_w) const {
    return static_cast<double>(box_h) * box_w /
           (static_cast<double>(image_h) * image_w);
  }
  double AspectRatio() const { return static_cast<double>(box_w) / box_h; }
  bool Contains(int y, int x) const {
    return y >= top && y < top + box_h && x >= left && x < left + box_w;
  }
  bool operator==(const PatchBox&) const = default;
};

struct BlendPlacement {
  PatchBox source;  // where the patch is cut from
  PatchBox dest;    // where it is pasted; same box_h/box_w as source
  JitterParams jitter;
};

struct BlendResult {
  Image image;
  AlphaMask mask;
  BlendPlacement placement;
};

// Integer box sizes satisfying the area and aspect constraints. Empty when
// the image is too small to hold any such box.
std::vector<std::pair<int, int>> ValidPatchSizes(int image_h, int image_w,
                                                 const SmoothBlendConfig& cfg);
// Box size only (top/left zero). Throws InvalidInput if no size is valid.
PatchBox SamplePatchSize(int image_h, int image_w, RngStream& rng,
                         const SmoothBlendConfig& cfg);
BlendPlacement SampleBlendPlacement(int image_h, int image_w, RngStream& rng,
                                    const SmoothBlendConfig& cfg);

// Cuts placement.source, jitters it, pastes it into an all-zero foreground
// at placement.dest, builds the binary alpha for dest and blurs it with the
// given sigmas (zero sigmas keep it binary), then alpha-blends.
BlendResult ApplyBlend(const Image& img, const BlendPlacement& placement,
                       double mask_sigma_y, double mask_sigma_x);

BlendResult SmoothBlend(const Image& img, RngStream& rng, const AugConfig& cfg);
BlendResult CutPaste(const Image& img, RngStream& rng, const AugConfig& cfg);

// Normalized 1-D Gaussian with radius ceil(3 sigma). sigma == 0 yields {1}.
std::vector<double> GaussianKernel(double sigma);
// Separable blur with reflect padding (d c b | a b c d | c b a).
Image GaussianBlur(const Image& img, double sigma_y, double sigma_x);
AlphaMask GaussianBlur(const AlphaMask& mask, double sigma_y, double sigma_x);
void GaussianBlurPlane(std::span<double> plane, int h, int w, double sigma_y,
                       double sigma_x);

JitterParams SampleJitter(RngStream& rng, const JitterStrengths& strengths);
Image ApplyJitter(const Image& img, const JitterParams& params);
// Jitter an arbitrary interleaved pixel buffer in place (used on cut
// patches, which may be smaller than a full Image).
void ApplyJitterPixels(std::span<float> pixels, int channels,
                       const JitterParams& params);
Image ColorJitter(const Image& img, RngStream& rng,
                  const JitterStrengths& strengths);

struct CropWindow {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  double AreaFraction(int image_h, int image_w) const {
    return static_cast<double>(height) * width /
           (static_cast<double>(image_h) * image_w);
  }
};

// Aspect-preserving crop with realized area fraction inside
// [min_scale, max_scale] (as far as integer sides allow).
CropWindow SampleCropPreservingAspect(int image_h, int image_w, RngStream& rng,
                                      double min_scale, double max_scale);
// Area in [min_scale, max_scale], aspect log-uniform in [min_ar, max_ar];
// falls back to the whole image after 10 rejected attempts.
CropWindow SampleCropFreeAspect(int image_h, int image_w, RngStream& rng,
                                double min_scale, double max_scale,
                                double min_aspect, double max_aspect);
Image ApplyCrop(const Image& img, const CropWindow& window, int out_size);
Image ResizeRegion(const Image& img, double top, double left, double h,
                   double w, int out_h, int out_w);
// Aspect-preserving random resized crop (the weak-view convention).
Image RandomResizedCrop(const Image& img, RngStream& rng, double min_scale,
                        double max_scale, int out_size);

struct GlobalAugParams {
  bool flip = false;
  CropWindow crop;
  std::optional<JitterParams> jitter;
  bool grayscale = false;
  std::optional<double> blur_sigma;
};

GlobalAugParams SampleWeak(int image_h, int image_w, RngStream& rng,
                           const WeakAugConfig& cfg);
// hflip -> crop -> jitter -> blur.
Image ApplyWeak(const Image& img, const GlobalAugParams& params, int out_size);
Image WeakAugment(const Image& img, RngStream& rng, const AugConfig& cfg);

GlobalAugParams SampleStrong(int image_h, int image_w, RngStream& rng,
                             const StrongAugConfig& cfg);
// crop -> hflip -> jitter -> grayscale -> blur.
Image ApplyStrong(const Image& img, const GlobalAugParams& params,
                  int out_size);
Image StrongAugment(const Image& img, RngStream& rng, const AugConfig& cfg);

struct SpdTriplet {
  Image anchor;
  Image positive;
  Image negative;
  AlphaMask mask;
  Image negative_base;  // the weak view before local augmentation
};

// anchor: plain resize. positive: weak view. negative: local augmentation of
// a second, independent weak view. Sub-streams are forked from `rng`.
SpdTriplet MakeSpdTriplet(const Image& img, RngStream& rng,
                          const AugConfig& cfg);

}  // namespace spotdiff

#endif  // SPOTDIFF_IMAGEOPS_H_
