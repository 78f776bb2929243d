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

#include "spotdiff/image.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "spotdiff/error.h"
#include "spotdiff/imageops.h"

namespace spotdiff {
namespace {

void CheckShape(int height, int width, int channels) {
  if (height < kMinImageSide || width < kMinImageSide) {
    throw InvalidInput("image sides must be >= " +
                       std::to_string(kMinImageSide) + ", got " +
                       std::to_string(height) + "x" + std::to_string(width));
  }
  if (channels != 1 && channels != 3) {
    throw InvalidInput("image channels must be 1 or 3, got " +
                       std::to_string(channels));
  }
}

// Source coordinate and weights for one output sample along an axis.
struct Tap {
  int i0;
  int i1;
  double w1;
};

std::vector<Tap> AxisTaps(double origin, double extent, int src_size,
                          int out_size) {
  std::vector<Tap> taps(out_size);
  const double scale = extent / out_size;
  for (int o = 0; o < out_size; ++o) {
    double s = origin + (o + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src_size - 1);
    taps[o] = {i0, i1, s - i0};
  }
  return taps;
}

int ReadPnmInt(std::istream& in) {
  int value = 0;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      in.unget();
      break;
    }
  }
  if (!(in >> value)) throw InvalidInput("malformed PNM header");
  return value;
}

}  // namespace

Image::Image(int height, int width, int channels)
    : Image(height, width, channels, 0.0f) {}

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  CheckShape(height, width, channels);
  data_.assign(static_cast<size_t>(height) * width * channels, fill);
}

Image::Image(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels),
      data_(std::move(data)) {
  CheckShape(height, width, channels);
  if (data_.size() != static_cast<size_t>(height) * width * channels) {
    throw InvalidInput("image data length does not match H*W*C");
  }
}

void Image::Validate() const {
  if (data_.empty()) throw InvalidInput("empty image");
  for (float v : data_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw InvalidInput("image value outside [0,1]: " + std::to_string(v));
    }
  }
}

AlphaMask::AlphaMask(int height, int width, float fill)
    : height_(height), width_(width),
      data_(static_cast<size_t>(height) * width, fill) {
  if (height <= 0 || width <= 0) throw InvalidInput("empty alpha mask");
}

bool AlphaMask::IsBinary() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return v == 0.0f || v == 1.0f; });
}

Image ResizeRegion(const Image& img, double top, double left, double h,
                   double w, int out_h, int out_w) {
  Image out(out_h, out_w, img.channels());
  const auto ty = AxisTaps(top, h, img.height(), out_h);
  const auto tx = AxisTaps(left, w, img.width(), out_w);
  const int ch = img.channels();
  for (int y = 0; y < out_h; ++y) {
    const Tap& a = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const Tap& b = tx[x];
      for (int c = 0; c < ch; ++c) {
        if (a.w1 == 0.0 && b.w1 == 0.0) {
          out.at(y, x, c) = img.at(a.i0, b.i0, c);
          continue;
        }
        const double top_row = (1.0 - b.w1) * img.at(a.i0, b.i0, c) +
                               b.w1 * img.at(a.i0, b.i1, c);
        const double bot_row = (1.0 - b.w1) * img.at(a.i1, b.i0, c) +
                               b.w1 * img.at(a.i1, b.i1, c);
        const double v = (1.0 - a.w1) * top_row + a.w1 * bot_row;
        out.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

Image ResizeBilinear(const Image& img, int out_h, int out_w) {
  return ResizeRegion(img, 0.0, 0.0, img.height(), img.width(), out_h, out_w);
}

std::vector<double> ResizeBilinearPlane(std::span<const double> src, int h,
                                        int w, int out_h, int out_w) {
  std::vector<double> out(static_cast<size_t>(out_h) * out_w);
  const auto ty = AxisTaps(0.0, h, h, out_h);
  const auto tx = AxisTaps(0.0, w, w, out_w);
  for (int y = 0; y < out_h; ++y) {
    const Tap& a = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const Tap& b = tx[x];
      const double top_row =
          (1.0 - b.w1) * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1];
      const double bot_row =
          (1.0 - b.w1) * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1];
      out[static_cast<size_t>(y) * out_w + x] =
          (1.0 - a.w1) * top_row + a.w1 * bot_row;
    }
  }
  return out;
}

Image Crop(const Image& img, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || top + h > img.height() || left + w > img.width()) {
    throw InvalidInput("crop window outside image");
  }
  Image out(h, w, img.channels());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        out.at(y, x, c) = img.at(top + y, left + x, c);
      }
    }
  }
  return out;
}

Image FlipHorizontal(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        out.at(y, x, c) = img.at(y, img.width() - 1 - x, c);
      }
    }
  }
  return out;
}

Image ToGrayscale(const Image& img) {
  if (img.channels() == 1) return img;
  Image out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const float g = std::clamp(0.299f * img.at(y, x, 0) +
                                     0.587f * img.at(y, x, 1) +
                                     0.114f * img.at(y, x, 2),
                                 0.0f, 1.0f);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = g;
    }
  }
  return out;
}

Image MaskToImage(const AlphaMask& mask) {
  std::vector<float> data(mask.data().begin(), mask.data().end());
  return Image(mask.height(), mask.width(), 1, std::move(data));
}

Image AlphaBlend(const Image& x, const Image& u, const AlphaMask& alpha) {
  if (x.height() != u.height() || x.width() != u.width() ||
      x.channels() != u.channels() || alpha.height() != x.height() ||
      alpha.width() != x.width()) {
    throw InvalidInput("blend operands differ in shape");
  }
  Image out = x;
  const int ch = x.channels();
  for (int y = 0; y < x.height(); ++y) {
    for (int xx = 0; xx < x.width(); ++xx) {
      const float a = alpha.at(y, xx);
      if (a == 0.0f) continue;
      for (int c = 0; c < ch; ++c) {
        const float v = (1.0f - a) * x.at(y, xx, c) + a * u.at(y, xx, c);
        out.at(y, xx, c) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

Image ReadPnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open image " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  int channels;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw InvalidInput("unsupported image format (need P5/P6): " +
                       path.string());
  }
  const int width = ReadPnmInt(in);
  const int height = ReadPnmInt(in);
  const int maxval = ReadPnmInt(in);
  if (maxval != 255) throw InvalidInput("only 8-bit PNM is supported");
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> raw(static_cast<size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw InvalidInput("truncated image " + path.string());
  }
  std::vector<float> data(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) data[i] = raw[i] / 255.0f;
  return Image(height, width, channels, std::move(data));
}

void WritePnm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (img.channels() == 1 ? "P5" : "P6") << '\n'
      << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  const auto data = img.data();
  for (size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(
        std::lround(std::clamp(data[i], 0.0f, 1.0f) * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
}

void WritePnm(const AlphaMask& mask, const std::filesystem::path& path) {
  WritePnm(MaskToImage(mask), path);
}

}  // namespace spotdiff
