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

#include "spotdiff/synthetic.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "spotdiff/error.h"
#include "spotdiff/rng.h"

namespace spotdiff {
namespace {

constexpr uint64_t kDefectStream = 0xdefec7;
constexpr double kNoise = 0.015;

using Rgb = std::array<float, 3>;

float Clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void Put(Image& img, int y, int x, const Rgb& c) {
  for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[ch];
}

std::string IndexName(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

// Defect region as a binary mask plus the colour to paint it with.
struct Defect {
  AlphaMask region;
  Rgb color;
};

Defect MakeDefect(DefectKind kind, const SyntheticCorpusConfig& cfg,
                  RngStream& rng) {
  const int n = cfg.size;
  Defect d{AlphaMask(n, n), {0, 0, 0}};
  const int extent = static_cast<int>(rng.UniformInt(cfg.min_defect, cfg.max_defect));
  switch (kind) {
    case DefectKind::kSpot: {
      const int top = static_cast<int>(rng.UniformInt(1, n - extent - 1));
      const int left = static_cast<int>(rng.UniformInt(1, n - extent - 1));
      const double r = extent / 2.0;
      const double cy = top + r - 0.5, cx = left + r - 0.5;
      for (int y = top; y < top + extent; ++y) {
        for (int x = left; x < left + extent; ++x) {
          const double dy = y - cy, dx = x - cx;
          // The disk touches all four sides of its extent x extent box.
          if (dy * dy + dx * dx <= r * r) {
            d.region.at(y, x) = 1.0f;
          }
        }
      }
      const bool dark = rng.Bernoulli(0.5);
      d.color = dark ? Rgb{0.05f, 0.04f, 0.03f} : Rgb{0.95f, 0.25f, 0.1f};
      break;
    }
    case DefectKind::kScratch: {
      // Diagonal-ish line whose bounding box is extent x (extent/2..extent).
      const int other = static_cast<int>(rng.UniformInt(std::max(1, extent / 2), extent));
      const bool steep = rng.Bernoulli(0.5);
      const int bh = steep ? extent : other;
      const int bw = steep ? other : extent;
      const int top = static_cast<int>(rng.UniformInt(0, n - bh));
      const int left = static_cast<int>(rng.UniformInt(0, n - bw));
      const bool flip = rng.Bernoulli(0.5);
      const int steps = std::max(bh, bw);
      for (int s = 0; s < steps; ++s) {
        const double t = steps == 1 ? 0.0 : static_cast<double>(s) / (steps - 1);
        const int y = top + static_cast<int>(std::lround(t * (bh - 1)));
        int x = left + static_cast<int>(std::lround(t * (bw - 1)));
        if (flip) x = left + (bw - 1) - (x - left);
        d.region.at(y, x) = 1.0f;
      }
      d.color = Rgb{0.98f, 0.98f, 0.92f};
      break;
    }
    case DefectKind::kMissingPatch: {
      const int other = static_cast<int>(rng.UniformInt(std::max(1, extent / 2), extent));
      const bool tall = rng.Bernoulli(0.5);
      const int bh = tall ? extent : other;
      const int bw = tall ? other : extent;
      const int top = static_cast<int>(rng.UniformInt(0, n - bh));
      const int left = static_cast<int>(rng.UniformInt(0, n - bw));
      for (int y = top; y < top + bh; ++y)
        for (int x = left; x < left + bw; ++x) d.region.at(y, x) = 1.0f;
      d.color = Rgb{0.35f, 0.35f, 0.38f};
      break;
    }
  }
  return d;
}

Rgb RandomColor(RngStream& rng) {
  return {static_cast<float>(rng.Uniform(0.1, 0.9)), static_cast<float>(rng.Uniform(0.1, 0.9)),
          static_cast<float>(rng.Uniform(0.1, 0.9))};
}

Image RenderStripes(int n, double period, double theta, double phase, const Rgb& a,
                    const Rgb& b, double gain, RngStream& rng) {
  Image img(n, n, 3);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double u = (x * std::cos(theta) + y * std::sin(theta)) / period * two_pi + phase;
      const double t = 0.5 + 0.5 * std::sin(u);
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = Clamp01(gain * (a[c] + (b[c] - a[c]) * t) + rng.Normal(0.0, kNoise));
      }
    }
  }
  return img;
}

Image RenderChecker(int n, int cell, int oy, int ox, const Rgb& a, const Rgb& b,
                    double gain, RngStream& rng) {
  Image img(n, n, 3);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const int parity = (((y + oy + n) / cell) + ((x + ox + n) / cell)) & 1;
      const Rgb& col = parity ? a : b;
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = Clamp01(gain * col[c] + rng.Normal(0.0, kNoise));
      }
    }
  }
  return img;
}

struct Blob {
  double y, x, r;
  Rgb c;
};

std::vector<Blob> RandomBlobs(int n, int count, RngStream& rng) {
  std::vector<Blob> blobs;
  for (int i = 0; i < count; ++i) {
    Blob bl{rng.Uniform(0.1, 0.9) * n, rng.Uniform(0.1, 0.9) * n, rng.Uniform(0.06, 0.14) * n,
            {static_cast<float>(rng.Uniform(0.2, 0.8)), static_cast<float>(rng.Uniform(0.2, 0.8)),
             static_cast<float>(rng.Uniform(0.2, 0.8))}};
    blobs.push_back(bl);
  }
  return blobs;
}

Image RenderBlobs(int n, const std::vector<Blob>& blobs, double gain, RngStream& rng) {
  Image img(n, n, 3);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      std::array<double, 3> v = {0.45, 0.45, 0.45};
      for (const auto& bl : blobs) {
        const double dy = y - bl.y, dx = x - bl.x;
        const double w = std::exp(-(dy * dy + dx * dx) / (2.0 * bl.r * bl.r));
        for (int c = 0; c < 3; ++c) v[c] += w * (bl.c[c] - v[c]);
      }
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = Clamp01(gain * v[c] + rng.Normal(0.0, kNoise));
    }
  }
  return img;
}

}  // namespace

std::string ToString(TextureFamily t) {
  switch (t) {
    case TextureFamily::kStripes: return "stripes";
    case TextureFamily::kChecker: return "checker";
    case TextureFamily::kBlobs: return "blobs";
    case TextureFamily::kMixed: return "mixed";
  }
  return "unknown";
}

TextureFamily ParseTexture(const std::string& name) {
  if (name == "stripes") return TextureFamily::kStripes;
  if (name == "checker") return TextureFamily::kChecker;
  if (name == "blobs") return TextureFamily::kBlobs;
  if (name == "mixed") return TextureFamily::kMixed;
  throw InvalidInput("unknown texture family '" + name + "'");
}

void SyntheticCorpusConfig::Validate() const {
  if (image_count <= 0) throw InvalidInput("image count must be > 0");
  if (size < kMinImageSide) throw InvalidInput("image size too small");
  if (min_defect < 1 || min_defect > max_defect) {
    throw InvalidInput("defect size range is empty");
  }
  if (max_defect >= size - 2) throw InvalidInput("defect size must be < image size");
  if (!(anomaly_fraction >= 0.0 && anomaly_fraction <= 1.0)) {
    throw InvalidInput("anomaly fraction must lie in [0, 1]");
  }
}

int SyntheticCorpusConfig::AnomalyCount() const {
  if (defect_kinds.empty()) return 0;
  return static_cast<int>(std::lround(anomaly_fraction * image_count));
}

Image RenderNormal(const SyntheticCorpusConfig& cfg, int index) {
  const int n = cfg.size;
  RngStream rng(cfg.seed, static_cast<uint64_t>(index));
  const double gain = 1.0 + rng.Uniform(-0.04, 0.04);
  switch (cfg.texture) {
    case TextureFamily::kStripes: {
      const double theta = 0.5 + rng.Uniform(-0.04, 0.04);
      const double phase = rng.Uniform(-0.25, 0.25);
      return RenderStripes(n, n / 6.0, theta, phase, {0.20f, 0.45f, 0.30f},
                           {0.75f, 0.70f, 0.40f}, gain, rng);
    }
    case TextureFamily::kChecker: {
      const int oy = static_cast<int>(rng.UniformInt(-1, 1));
      const int ox = static_cast<int>(rng.UniformInt(-1, 1));
      return RenderChecker(n, std::max(2, n / 8), oy, ox, {0.25f, 0.25f, 0.55f},
                           {0.70f, 0.65f, 0.60f}, gain, rng);
    }
    case TextureFamily::kBlobs: {
      // Fixed blob layout with small positional jitter.
      RngStream layout(cfg.seed, 0xb10b);
      std::vector<Blob> blobs = RandomBlobs(n, 7, layout);
      for (auto& bl : blobs) {
        bl.y += rng.Uniform(-1.0, 1.0);
        bl.x += rng.Uniform(-1.0, 1.0);
      }
      return RenderBlobs(n, blobs, gain, rng);
    }
    case TextureFamily::kMixed: {
      const Rgb a = RandomColor(rng), b = RandomColor(rng);
      switch (rng.UniformInt(0, 2)) {
        case 0: {
          const double period = n / rng.Uniform(3.0, 10.0);
          const double theta = rng.Uniform(0.0, std::numbers::pi);
          const double phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
          return RenderStripes(n, period, theta, phase, a, b, gain, rng);
        }
        case 1: {
          const int cell = static_cast<int>(rng.UniformInt(std::max(2, n / 16), std::max(2, n / 4)));
          const int oy = static_cast<int>(rng.UniformInt(0, cell - 1));
          const int ox = static_cast<int>(rng.UniformInt(0, cell - 1));
          return RenderChecker(n, cell, oy, ox, a, b, gain, rng);
        }
        default:
          return RenderBlobs(n, RandomBlobs(n, static_cast<int>(rng.UniformInt(3, 9)), rng),
                             gain, rng);
      }
    }
  }
  throw InternalError("unhandled texture family");
}

SyntheticCorpus GenerateSyntheticCorpus(const SyntheticCorpusConfig& cfg) {
  cfg.Validate();
  SyntheticCorpus corpus;
  const int n_anom = cfg.AnomalyCount();
  const int first_anom = cfg.image_count - n_anom;
  for (int i = 0; i < cfg.image_count; ++i) {
    Image img = RenderNormal(cfg, i);
    AlphaMask mask(cfg.size, cfg.size);
    DefectKind kind = DefectKind::kSpot;
    const bool anomalous = i >= first_anom;
    if (anomalous) {
      RngStream rng(cfg.seed, HashCombine(kDefectStream, static_cast<uint64_t>(i)));
      kind = cfg.defect_kinds[static_cast<size_t>(
          rng.UniformInt(0, static_cast<int64_t>(cfg.defect_kinds.size()) - 1))];
      const Defect d = MakeDefect(kind, cfg, rng);
      for (int y = 0; y < cfg.size; ++y) {
        for (int x = 0; x < cfg.size; ++x) {
          if (d.region.at(y, x) == 0.0f) continue;
          Rgb c = d.color;
          // Every masked pixel must actually change.
          bool same = true;
          for (int ch = 0; ch < 3; ++ch) same = same && c[ch] == img.at(y, x, ch);
          if (same) c[0] = img.at(y, x, 0) > 0.5f ? c[0] - 0.3f : c[0] + 0.3f;
          Put(img, y, x, c);
          mask.at(y, x) = 1.0f;
        }
      }
    }
    ManifestRecord r;
    r.id = i;
    r.object = cfg.object;
    r.label = anomalous ? SampleLabel::kAnomaly : SampleLabel::kNormal;
    r.path = cfg.object + (anomalous ? "/anomaly/" : "/normal/") + IndexName(i) + ".ppm";
    if (anomalous) r.mask_path = cfg.object + "/masks/" + IndexName(i) + ".pgm";
    corpus.images.push_back(std::move(img));
    corpus.masks.push_back(std::move(mask));
    corpus.kinds.push_back(kind);
    corpus.manifest.records.push_back(std::move(r));
  }
  return corpus;
}

DatasetManifest WriteSyntheticCorpus(const SyntheticCorpus& corpus,
                                     const std::filesystem::path& root) {
  DatasetManifest out = corpus.manifest;
  for (size_t i = 0; i < out.records.size(); ++i) {
    auto& r = out.records[i];
    const auto img_path = root / r.path;
    std::filesystem::create_directories(img_path.parent_path());
    WritePnm(corpus.images[i], img_path);
    r.path = img_path.lexically_normal().generic_string();
    if (r.mask_path) {
      const auto mask_path = root / *r.mask_path;
      std::filesystem::create_directories(mask_path.parent_path());
      WritePnm(corpus.masks[i], mask_path);
      r.mask_path = mask_path.lexically_normal().generic_string();
    }
  }
  return out;
}

}  // namespace spotdiff
