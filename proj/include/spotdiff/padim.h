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

// Per-cell Gaussian model over encoder patch features, scored with the
// Mahalanobis distance.

#ifndef SPOTDIFF_PADIM_H_
#define SPOTDIFF_PADIM_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spotdiff/image.h"
#include "spotdiff/model.h"

namespace spotdiff {

// grid_h x grid_w x dim, channel-fastest.
struct PatchFeatureGrid {
  int grid_h = 0;
  int grid_w = 0;
  int dim = 0;
  std::vector<double> data;

  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * grid_w + x) * dim + c];
  }
  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * grid_w + x) * dim + c];
  }
  bool operator==(const PatchFeatureGrid&) const = default;
};

// Block feature maps bilinearly resized to the first block's grid and
// concatenated along channels.
PatchFeatureGrid ExtractFeatures(const Model<float>& model, const Image& img);
std::vector<PatchFeatureGrid> ExtractFeatures(const Model<float>& model,
                                              std::span<const Image> images);

struct PadimConfig {
  double epsilon = 0.01;
  int max_dim = 100;  // d = min(max_dim, feature dim)
  uint64_t seed = 0;
  double smooth_sigma = 4.0;

  void Validate() const;
};

struct GaussianPatchModel {
  int grid_h = 0;
  int grid_w = 0;
  int feature_dim = 0;
  double epsilon = 0.0;
  int n_samples = 0;
  std::vector<int> channels;  // selected feature channels, size d
  // Per cell, row-major: means [d], lower Cholesky factor of
  // cov + eps I [d x d].
  std::vector<double> means;
  std::vector<double> chol;

  int d() const { return static_cast<int>(channels.size()); }
  int cells() const { return grid_h * grid_w; }
  bool operator==(const GaussianPatchModel&) const = default;
};

// Seeded choice of min(max_dim, dim) distinct channels, sorted ascending.
std::vector<int> SelectChannels(int dim, int max_dim, uint64_t seed);

// Needs >= 2 grids of identical shape. The result does not depend on the
// order of `grids`.
GaussianPatchModel FitPadim(const PadimConfig& cfg,
                            std::span<const PatchFeatureGrid> grids);

// Unsmoothed Mahalanobis distance per cell, row-major.
std::vector<double> CellDistances(const GaussianPatchModel& model,
                                  const PatchFeatureGrid& grid);

// Cell distances upsampled to out_h x out_w and Gaussian smoothed;
// smooth_sigma = 0 skips smoothing.
AnomalyMap ScoreMap(const GaussianPatchModel& model, const PatchFeatureGrid& grid,
                    int out_h, int out_w, double smooth_sigma);

// Maximum of the map.
double ImageScore(const AnomalyMap& map);

// .padim: one JSON header line, then little-endian float32 blobs: means,
// Cholesky factors, channel indices.
void SavePadim(const GaussianPatchModel& model, const std::filesystem::path& path);
GaussianPatchModel LoadPadim(const std::filesystem::path& path);

}  // namespace spotdiff

#endif  // SPOTDIFF_PADIM_H_
