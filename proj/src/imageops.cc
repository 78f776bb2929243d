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

#include <algorithm>
#include <cmath>
#include <string>

#include "spotdiff/error.h"

namespace spotdiff {
namespace {

void CheckRange(double lo, double hi, const char* what) {
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw InvalidInput(std::string("empty range for ") + what);
  }
}

void CheckProb(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidInput(std::string("probability out of [0,1] for ") + what);
  }
}

void CheckStrengths(const JitterStrengths& s) {
  if (s.brightness < 0 || s.contrast < 0 || s.saturation < 0 || s.hue < 0) {
    throw InvalidInput("jitter strengths must be >= 0");
  }
  if (s.hue > 0.5) throw InvalidInput("hue strength must be <= 0.5");
}

int ReflectIndex(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

// One axis of the separable blur on a strided set of lines.
void BlurAxis(std::span<double> buf, int lines, int length, int stride_line,
              int stride_elem, const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> line(length);
  for (int l = 0; l < lines; ++l) {
    double* base = buf.data() + static_cast<size_t>(l) * stride_line;
    for (int i = 0; i < length; ++i) line[i] = base[i * stride_elem];
    for (int i = 0; i < length; ++i) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * line[ReflectIndex(i + k, length)];
      }
      base[i * stride_elem] = acc;
    }
  }
}

float Luma(const float* px) {
  return 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
}

void RgbToHsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0.0f ? d / mx : 0.0f;
  if (d == 0.0f) {
    h = 0.0f;
  } else if (mx == r) {
    h = std::fmod((g - b) / d, 6.0f) / 6.0f;
  } else if (mx == g) {
    h = ((b - r) / d + 2.0f) / 6.0f;
  } else {
    h = ((r - g) / d + 4.0f) / 6.0f;
  }
  if (h < 0.0f) h += 1.0f;
}

void HsvToRgb(float h, float s, float v, float& r, float& g, float& b) {
  const float hh = h * 6.0f;
  const int i = static_cast<int>(std::floor(hh)) % 6;
  const float f = hh - std::floor(hh);
  const float p = v * (1.0f - s);
  const float q = v * (1.0f - s * f);
  const float t = v * (1.0f - s * (1.0f - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

}  // namespace

void AugConfig::Validate() const {
  const auto& sb = smoothblend;
  CheckRange(sb.min_area, sb.max_area, "smoothblend area");
  if (sb.min_area <= 0.0 || sb.max_area > 1.0) {
    throw InvalidInput("smoothblend area must lie in (0, 1]");
  }
  CheckRange(sb.min_aspect, sb.max_aspect, "smoothblend aspect");
  if (sb.min_aspect <= 0.0) throw InvalidInput("aspect ratio must be > 0");
  if (sb.mask_sigma_y < 0.0 || sb.mask_sigma_x < 0.0) {
    throw InvalidInput("mask blur sigma must be >= 0");
  }
  CheckStrengths(sb.jitter);

  CheckRange(weak.min_scale, weak.max_scale, "weak crop scale");
  if (weak.min_scale <= 0.0 || weak.max_scale > 1.0) {
    throw InvalidInput("weak crop scale must lie in (0, 1]");
  }
  CheckStrengths(weak.jitter);
  CheckProb(weak.jitter_prob, "weak jitter");
  CheckProb(weak.blur_prob, "weak blur");
  CheckProb(weak.hflip_prob, "weak hflip");
  CheckRange(weak.min_blur_sigma, weak.max_blur_sigma, "weak blur sigma");

  CheckRange(strong.min_scale, strong.max_scale, "strong crop scale");
  if (strong.min_scale <= 0.0 || strong.max_scale > 1.0) {
    throw InvalidInput("strong crop scale must lie in (0, 1]");
  }
  CheckRange(strong.min_aspect, strong.max_aspect, "strong crop aspect");
  CheckStrengths(strong.jitter);
  CheckProb(strong.jitter_prob, "strong jitter");
  CheckProb(strong.grayscale_prob, "strong grayscale");
  CheckProb(strong.blur_prob, "strong blur");
  CheckProb(strong.hflip_prob, "strong hflip");
  CheckRange(strong.min_blur_sigma, strong.max_blur_sigma, "strong blur sigma");

  if (output_size < kMinImageSide) {
    throw InvalidInput("output size must be >= " +
                       std::to_string(kMinImageSide));
  }
}

// ---------------------------------------------------------------------------
// Local augmentations

std::vector<std::pair<int, int>> ValidPatchSizes(int image_h, int image_w,
                                                 const SmoothBlendConfig& cfg) {
  std::vector<std::pair<int, int>> sizes;
  const double total = static_cast<double>(image_h) * image_w;
  for (int h = 1; h <= image_h; ++h) {
    for (int w = 1; w <= image_w; ++w) {
      const double area = h * w / total;
      const double ar = static_cast<double>(w) / h;
      if (area >= cfg.min_area && area <= cfg.max_area &&
          ar >= cfg.min_aspect && ar <= cfg.max_aspect) {
        sizes.emplace_back(h, w);
      }
    }
  }
  return sizes;
}

PatchBox SamplePatchSize(int image_h, int image_w, RngStream& rng,
                         const SmoothBlendConfig& cfg) {
  const auto valid = ValidPatchSizes(image_h, image_w, cfg);
  if (valid.empty()) {
    throw InvalidInput("image " + std::to_string(image_h) + "x" +
                       std::to_string(image_w) +
                       " is too small for any patch in the configured "
                       "area/aspect range");
  }
  const double total = static_cast<double>(image_h) * image_w;
  // Continuous draw rounded to integers, kept only if the rounded box still
  // satisfies both constraints.
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double area = rng.Uniform(cfg.min_area, cfg.max_area) * total;
    const double ar = rng.LogUniform(cfg.min_aspect, cfg.max_aspect);
    const int h = static_cast<int>(std::lround(std::sqrt(area / ar)));
    const int w = static_cast<int>(std::lround(std::sqrt(area * ar)));
    if (std::find(valid.begin(), valid.end(), std::make_pair(h, w)) !=
        valid.end()) {
      return PatchBox{0, 0, h, w};
    }
  }
  const auto pick = valid[static_cast<size_t>(
      rng.UniformInt(0, static_cast<int64_t>(valid.size()) - 1))];
  return PatchBox{0, 0, pick.first, pick.second};
}

BlendPlacement SampleBlendPlacement(int image_h, int image_w, RngStream& rng,
                                    const SmoothBlendConfig& cfg) {
  BlendPlacement p;
  p.source = SamplePatchSize(image_h, image_w, rng, cfg);
  p.source.top = static_cast<int>(rng.UniformInt(0, image_h - p.source.box_h));
  p.source.left = static_cast<int>(rng.UniformInt(0, image_w - p.source.box_w));
  p.dest = p.source;
  p.dest.top = static_cast<int>(rng.UniformInt(0, image_h - p.dest.box_h));
  p.dest.left = static_cast<int>(rng.UniformInt(0, image_w - p.dest.box_w));
  p.jitter = SampleJitter(rng, cfg.jitter);
  return p;
}

BlendResult ApplyBlend(const Image& img, const BlendPlacement& placement,
                       double mask_sigma_y, double mask_sigma_x) {
  const PatchBox& src = placement.source;
  const PatchBox& dst = placement.dest;
  if (src.box_h != dst.box_h || src.box_w != dst.box_w || src.box_h <= 0 ||
      src.box_w <= 0) {
    throw InvalidInput("source and destination patch sizes differ");
  }
  auto inside = [&](const PatchBox& b) {
    return b.top >= 0 && b.left >= 0 && b.top + b.box_h <= img.height() &&
           b.left + b.box_w <= img.width();
  };
  if (!inside(src) || !inside(dst)) {
    throw InvalidInput("patch box outside image bounds");
  }
  const int ch = img.channels();

  std::vector<float> patch(static_cast<size_t>(src.box_h) * src.box_w * ch);
  for (int y = 0; y < src.box_h; ++y) {
    for (int x = 0; x < src.box_w; ++x) {
      for (int c = 0; c < ch; ++c) {
        patch[(static_cast<size_t>(y) * src.box_w + x) * ch + c] =
            img.at(src.top + y, src.left + x, c);
      }
    }
  }
  ApplyJitterPixels(patch, ch, placement.jitter);

  Image foreground(img.height(), img.width(), ch);
  AlphaMask alpha(img.height(), img.width());
  for (int y = 0; y < dst.box_h; ++y) {
    for (int x = 0; x < dst.box_w; ++x) {
      alpha.at(dst.top + y, dst.left + x) = 1.0f;
      for (int c = 0; c < ch; ++c) {
        foreground.at(dst.top + y, dst.left + x, c) =
            patch[(static_cast<size_t>(y) * dst.box_w + x) * ch + c];
      }
    }
  }
  if (mask_sigma_y > 0.0 || mask_sigma_x > 0.0) {
    alpha = GaussianBlur(alpha, mask_sigma_y, mask_sigma_x);
  }
  return BlendResult{AlphaBlend(img, foreground, alpha), std::move(alpha),
                     placement};
}

BlendResult SmoothBlend(const Image& img, RngStream& rng, const AugConfig& cfg) {
  const auto placement =
      SampleBlendPlacement(img.height(), img.width(), rng, cfg.smoothblend);
  return ApplyBlend(img, placement, cfg.smoothblend.mask_sigma_y,
                    cfg.smoothblend.mask_sigma_x);
}

BlendResult CutPaste(const Image& img, RngStream& rng, const AugConfig& cfg) {
  const auto placement =
      SampleBlendPlacement(img.height(), img.width(), rng, cfg.smoothblend);
  return ApplyBlend(img, placement, 0.0, 0.0);
}

// ---------------------------------------------------------------------------
// Blur

std::vector<double> GaussianKernel(double sigma) {
  if (sigma < 0.0 || !std::isfinite(sigma)) {
    throw InvalidInput("blur sigma must be finite and >= 0");
  }
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

void GaussianBlurPlane(std::span<double> plane, int h, int w, double sigma_y,
                       double sigma_x) {
  const auto ky = GaussianKernel(sigma_y);
  const auto kx = GaussianKernel(sigma_x);
  if (kx.size() > 1) BlurAxis(plane, h, w, w, 1, kx);
  if (ky.size() > 1) BlurAxis(plane, w, h, 1, w, ky);
}

Image GaussianBlur(const Image& img, double sigma_y, double sigma_x) {
  GaussianKernel(sigma_y);  // validates
  GaussianKernel(sigma_x);
  if (sigma_y == 0.0 && sigma_x == 0.0) return img;
  const int h = img.height(), w = img.width(), ch = img.channels();
  Image out = img;
  std::vector<double> plane(static_cast<size_t>(h) * w);
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) plane[y * w + x] = img.at(y, x, c);
    GaussianBlurPlane(plane, h, w, sigma_y, sigma_x);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(y, x, c) =
            static_cast<float>(std::clamp(plane[y * w + x], 0.0, 1.0));
  }
  return out;
}

AlphaMask GaussianBlur(const AlphaMask& mask, double sigma_y, double sigma_x) {
  GaussianKernel(sigma_y);
  GaussianKernel(sigma_x);
  if (sigma_y == 0.0 && sigma_x == 0.0) return mask;
  const int h = mask.height(), w = mask.width();
  std::vector<double> plane(mask.data().begin(), mask.data().end());
  GaussianBlurPlane(plane, h, w, sigma_y, sigma_x);
  AlphaMask out(h, w);
  for (size_t i = 0; i < plane.size(); ++i) {
    out.data()[i] = static_cast<float>(std::clamp(plane[i], 0.0, 1.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Color jitter

JitterParams SampleJitter(RngStream& rng, const JitterStrengths& s) {
  CheckStrengths(s);
  JitterParams p;
  p.brightness = rng.Uniform(1.0 - std::min(s.brightness, 1.0), 1.0 + s.brightness);
  p.contrast = rng.Uniform(1.0 - std::min(s.contrast, 1.0), 1.0 + s.contrast);
  p.saturation = rng.Uniform(1.0 - std::min(s.saturation, 1.0), 1.0 + s.saturation);
  p.hue = rng.Uniform(-s.hue, s.hue);
  rng.Shuffle(std::span<int>(p.order));
  return p;
}

void ApplyJitterPixels(std::span<float> pixels, int channels,
                       const JitterParams& params) {
  const size_t n = pixels.size() / channels;
  for (int op : params.order) {
    switch (op) {
      case 0: {
        if (params.brightness == 1.0) break;
        const auto f = static_cast<float>(params.brightness);
        for (float& v : pixels) v = std::clamp(v * f, 0.0f, 1.0f);
        break;
      }
      case 1: {
        if (params.contrast == 1.0) break;
        double mean = 0.0;
        for (size_t i = 0; i < n; ++i) {
          mean += channels == 3 ? Luma(&pixels[i * 3]) : pixels[i];
        }
        mean /= static_cast<double>(n);
        const auto f = static_cast<float>(params.contrast);
        const auto m = static_cast<float>(mean);
        for (float& v : pixels) v = std::clamp(f * v + (1.0f - f) * m, 0.0f, 1.0f);
        break;
      }
      case 2: {
        if (params.saturation == 1.0 || channels != 3) break;
        const auto f = static_cast<float>(params.saturation);
        for (size_t i = 0; i < n; ++i) {
          float* px = &pixels[i * 3];
          const float g = Luma(px);
          for (int c = 0; c < 3; ++c) {
            px[c] = std::clamp(f * px[c] + (1.0f - f) * g, 0.0f, 1.0f);
          }
        }
        break;
      }
      case 3: {
        if (params.hue == 0.0 || channels != 3) break;
        for (size_t i = 0; i < n; ++i) {
          float* px = &pixels[i * 3];
          float h, s, v;
          RgbToHsv(px[0], px[1], px[2], h, s, v);
          h = std::fmod(h + static_cast<float>(params.hue) + 1.0f, 1.0f);
          HsvToRgb(h, s, v, px[0], px[1], px[2]);
          for (int c = 0; c < 3; ++c) px[c] = std::clamp(px[c], 0.0f, 1.0f);
        }
        break;
      }
      default:
        throw InvalidInput("jitter order must be a permutation of 0..3");
    }
  }
}

Image ApplyJitter(const Image& img, const JitterParams& params) {
  Image out = img;
  ApplyJitterPixels(out.data(), out.channels(), params);
  return out;
}

Image ColorJitter(const Image& img, RngStream& rng,
                  const JitterStrengths& strengths) {
  return ApplyJitter(img, SampleJitter(rng, strengths));
}

// ---------------------------------------------------------------------------
// Crops

CropWindow SampleCropPreservingAspect(int image_h, int image_w, RngStream& rng,
                                      double min_scale, double max_scale) {
  if (!(min_scale > 0.0 && min_scale <= max_scale && max_scale <= 1.0)) {
    throw InvalidInput("crop scale must satisfy 0 < min <= max <= 1");
  }
  const double s = rng.Uniform(min_scale, max_scale);
  const double side = std::sqrt(s);
  int h = std::clamp(static_cast<int>(std::lround(image_h * side)), 1, image_h);
  int w = std::clamp(static_cast<int>(std::lround(image_w * side)), 1, image_w);
  const double total = static_cast<double>(image_h) * image_w;
  // Rounding may leave the realized fraction just outside the range.
  while (h * w / total < min_scale && (h < image_h || w < image_w)) {
    if (h < image_h && (w == image_w || h * image_w <= w * image_h)) {
      ++h;
    } else {
      ++w;
    }
  }
  while (h * w / total > max_scale && (h > 1 || w > 1)) {
    if (h > 1 && (w == 1 || h * image_w >= w * image_h)) {
      --h;
    } else {
      --w;
    }
  }
  CropWindow win;
  win.height = h;
  win.width = w;
  win.top = static_cast<int>(rng.UniformInt(0, image_h - h));
  win.left = static_cast<int>(rng.UniformInt(0, image_w - w));
  return win;
}

CropWindow SampleCropFreeAspect(int image_h, int image_w, RngStream& rng,
                                double min_scale, double max_scale,
                                double min_aspect, double max_aspect) {
  if (!(min_scale > 0.0 && min_scale <= max_scale && max_scale <= 1.0)) {
    throw InvalidInput("crop scale must satisfy 0 < min <= max <= 1");
  }
  const double total = static_cast<double>(image_h) * image_w;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double area = rng.Uniform(min_scale, max_scale) * total;
    const double ar = rng.LogUniform(min_aspect, max_aspect);
    const int w = static_cast<int>(std::lround(std::sqrt(area * ar)));
    const int h = static_cast<int>(std::lround(std::sqrt(area / ar)));
    if (w >= 1 && h >= 1 && w <= image_w && h <= image_h) {
      CropWindow win;
      win.height = h;
      win.width = w;
      win.top = static_cast<int>(rng.UniformInt(0, image_h - h));
      win.left = static_cast<int>(rng.UniformInt(0, image_w - w));
      return win;
    }
  }
  return CropWindow{0, 0, image_h, image_w};
}

Image ApplyCrop(const Image& img, const CropWindow& win, int out_size) {
  if (win.top < 0 || win.left < 0 || win.height <= 0 || win.width <= 0 ||
      win.top + win.height > img.height() ||
      win.left + win.width > img.width()) {
    throw InvalidInput("crop window outside image");
  }
  if (out_size < kMinImageSide) throw InvalidInput("crop output size too small");
  return ResizeRegion(img, win.top, win.left, win.height, win.width, out_size,
                      out_size);
}

Image RandomResizedCrop(const Image& img, RngStream& rng, double min_scale,
                        double max_scale, int out_size) {
  const auto win = SampleCropPreservingAspect(img.height(), img.width(), rng,
                                              min_scale, max_scale);
  return ApplyCrop(img, win, out_size);
}

// ---------------------------------------------------------------------------
// Global pipelines

GlobalAugParams SampleWeak(int image_h, int image_w, RngStream& rng,
                           const WeakAugConfig& cfg) {
  GlobalAugParams p;
  p.flip = rng.Bernoulli(cfg.hflip_prob);
  p.crop = SampleCropPreservingAspect(image_h, image_w, rng, cfg.min_scale,
                                      cfg.max_scale);
  if (rng.Bernoulli(cfg.jitter_prob)) p.jitter = SampleJitter(rng, cfg.jitter);
  if (rng.Bernoulli(cfg.blur_prob)) {
    p.blur_sigma = rng.Uniform(cfg.min_blur_sigma, cfg.max_blur_sigma);
  }
  return p;
}

Image ApplyWeak(const Image& img, const GlobalAugParams& p, int out_size) {
  Image out = p.flip ? FlipHorizontal(img) : img;
  out = ApplyCrop(out, p.crop, out_size);
  if (p.jitter) out = ApplyJitter(out, *p.jitter);
  if (p.blur_sigma) out = GaussianBlur(out, *p.blur_sigma, *p.blur_sigma);
  return out;
}

Image WeakAugment(const Image& img, RngStream& rng, const AugConfig& cfg) {
  const auto p = SampleWeak(img.height(), img.width(), rng, cfg.weak);
  return ApplyWeak(img, p, cfg.output_size);
}

GlobalAugParams SampleStrong(int image_h, int image_w, RngStream& rng,
                             const StrongAugConfig& cfg) {
  GlobalAugParams p;
  p.crop = SampleCropFreeAspect(image_h, image_w, rng, cfg.min_scale,
                                cfg.max_scale, cfg.min_aspect, cfg.max_aspect);
  p.flip = rng.Bernoulli(cfg.hflip_prob);
  if (rng.Bernoulli(cfg.jitter_prob)) p.jitter = SampleJitter(rng, cfg.jitter);
  p.grayscale = rng.Bernoulli(cfg.grayscale_prob);
  if (rng.Bernoulli(cfg.blur_prob)) {
    p.blur_sigma = rng.Uniform(cfg.min_blur_sigma, cfg.max_blur_sigma);
  }
  return p;
}

Image ApplyStrong(const Image& img, const GlobalAugParams& p, int out_size) {
  Image out = ApplyCrop(img, p.crop, out_size);
  if (p.flip) out = FlipHorizontal(out);
  if (p.jitter) out = ApplyJitter(out, *p.jitter);
  if (p.grayscale) out = ToGrayscale(out);
  if (p.blur_sigma) out = GaussianBlur(out, *p.blur_sigma, *p.blur_sigma);
  return out;
}

Image StrongAugment(const Image& img, RngStream& rng, const AugConfig& cfg) {
  const auto p = SampleStrong(img.height(), img.width(), rng, cfg.strong);
  return ApplyStrong(img, p, cfg.output_size);
}

SpdTriplet MakeSpdTriplet(const Image& img, RngStream& rng,
                          const AugConfig& cfg) {
  const uint64_t key = rng.NextU64();
  RngStream pos_rng = rng.Fork(HashCombine(key, 1));
  RngStream neg_rng = rng.Fork(HashCombine(key, 2));
  RngStream local_rng = rng.Fork(HashCombine(key, 3));

  SpdTriplet t;
  t.anchor = ResizeBilinear(img, cfg.output_size, cfg.output_size);
  t.positive = WeakAugment(img, pos_rng, cfg);
  t.negative_base = WeakAugment(img, neg_rng, cfg);
  BlendResult blended = cfg.local == LocalAugmentation::kCutPaste
                            ? CutPaste(t.negative_base, local_rng, cfg)
                            : SmoothBlend(t.negative_base, local_rng, cfg);
  t.negative = std::move(blended.image);
  t.mask = std::move(blended.mask);
  return t;
}

}  // namespace spotdiff
