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

#ifndef SPOTDIFF_IMAGE_H_
#define SPOTDIFF_IMAGE_H_

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace spotdiff {

inline constexpr int kMinImageSide = 8;

// H x W x C raster, values in [0, 1], interleaved row-major (HWC).
class Image {
 public:
  Image() = default;
  // Zero-filled image. Throws InvalidInput unless sides >= kMinImageSide and
  // channels is 1 or 3.
  Image(int height, int width, int channels);
  Image(int height, int width, int channels, float fill);
  Image(int height, int width, int channels, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x, int c) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  float at(int y, int x, int c) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& values() const { return data_; }

  // Throws InvalidInput if any value is outside [0, 1] or non-finite.
  void Validate() const;

  bool operator==(const Image& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Single-channel blend weights in [0, 1] with the spatial size of its image.
class AlphaMask {
 public:
  AlphaMask() = default;
  AlphaMask(int height, int width, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  float& at(int y, int x) { return data_[static_cast<size_t>(y) * width_ + x]; }
  float at(int y, int x) const {
    return data_[static_cast<size_t>(y) * width_ + x];
  }
  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool IsBinary() const;

  bool operator==(const AlphaMask& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// H x W non-negative anomaly scores.
struct AnomalyMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int y, int x) const {
    return values[static_cast<size_t>(y) * width + x];
  }
  bool operator==(const AnomalyMap&) const = default;
};

// Bilinear resize with half-pixel centers and edge clamping. Resizing to the
// same size is an exact copy.
Image ResizeBilinear(const Image& img, int out_h, int out_w);
// Same kernel on a raw planar buffer (used for feature maps and score maps).
std::vector<double> ResizeBilinearPlane(std::span<const double> src, int h,
                                        int w, int out_h, int out_w);

Image Crop(const Image& img, int top, int left, int h, int w);
Image FlipHorizontal(const Image& img);
// Luma (0.299, 0.587, 0.114) replicated over all channels.
Image ToGrayscale(const Image& img);
Image MaskToImage(const AlphaMask& mask);

// out = (1 - alpha) * x + alpha * u per pixel, clamped to [0, 1]. Pixels with
// alpha == 0 are copied from x unchanged.
Image AlphaBlend(const Image& x, const Image& u, const AlphaMask& alpha);

// Binary PNM (P5 grayscale / P6 RGB, maxval 255). Values map linearly to
// [0, 1]. Writing picks P5 for single-channel images and P6 otherwise.
Image ReadPnm(const std::filesystem::path& path);
void WritePnm(const Image& img, const std::filesystem::path& path);
void WritePnm(const AlphaMask& mask, const std::filesystem::path& path);

}  // namespace spotdiff

#endif  // SPOTDIFF_IMAGE_H_
