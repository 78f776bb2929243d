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

#include "spotdiff/padim.h"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "spotdiff/checkpoint.h"
#include "spotdiff/error.h"
#include "spotdiff/imageops.h"
#include "spotdiff/rng.h"

namespace spotdiff {
namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr int kPadimVersion = 1;
constexpr int kFeatureChunk = 16;

void RequireGridMatches(const GaussianPatchModel& model, const PatchFeatureGrid& grid) {
  if (grid.grid_h != model.grid_h || grid.grid_w != model.grid_w ||
      grid.dim != model.feature_dim) {
    throw InvalidInput("feature grid " + std::to_string(grid.grid_h) + "x" +
                       std::to_string(grid.grid_w) + "x" + std::to_string(grid.dim) +
                       " does not match model " + std::to_string(model.grid_h) + "x" +
                       std::to_string(model.grid_w) + "x" +
                       std::to_string(model.feature_dim));
  }
}

}  // namespace

std::vector<PatchFeatureGrid> ExtractFeatures(const Model<float>& model,
                                              std::span<const Image> images) {
  std::vector<PatchFeatureGrid> out;
  out.reserve(images.size());
  const ModelConfig& cfg = model.config();
  for (size_t start = 0; start < images.size(); start += kFeatureChunk) {
    const size_t count = std::min<size_t>(kFeatureChunk, images.size() - start);
    const auto x = nn::Var<float>::Constant(
        ImagesToTensor<float>(images.subspan(start, count), cfg));
    std::vector<nn::Var<float>> maps;
    model.Encode(x, &maps);
    const int gh = maps[0].value().dim(2), gw = maps[0].value().dim(3);
    int dim = 0;
    for (const auto& m : maps) dim += m.value().dim(1);
    for (size_t i = 0; i < count; ++i) {
      PatchFeatureGrid g{gh, gw, dim, std::vector<double>(static_cast<size_t>(gh) * gw * dim)};
      int c0 = 0;
      for (const auto& m : maps) {
        const int c = m.value().dim(1), h = m.value().dim(2), w = m.value().dim(3);
        const size_t plane = static_cast<size_t>(h) * w;
        const float* src = m.value().ptr() + i * c * plane;
        std::vector<double> buf(plane);
        for (int ch = 0; ch < c; ++ch) {
          std::copy(src + ch * plane, src + (ch + 1) * plane, buf.begin());
          const auto r = ResizeBilinearPlane(buf, h, w, gh, gw);
          for (size_t p = 0; p < r.size(); ++p) g.data[p * dim + c0 + ch] = r[p];
        }
        c0 += c;
      }
      out.push_back(std::move(g));
    }
  }
  return out;
}

PatchFeatureGrid ExtractFeatures(const Model<float>& model, const Image& img) {
  return ExtractFeatures(model, std::span<const Image>(&img, 1)).front();
}

void PadimConfig::Validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidInput("epsilon must be >= 0");
  if (max_dim < 1) throw InvalidInput("max_dim must be >= 1");
  if (!(smooth_sigma >= 0.0)) throw InvalidInput("smoothing sigma must be >= 0");
}

std::vector<int> SelectChannels(int dim, int max_dim, uint64_t seed) {
  if (dim < 1 || max_dim < 1) throw InvalidInput("SelectChannels: sizes must be >= 1");
  std::vector<int> all(dim);
  std::iota(all.begin(), all.end(), 0);
  if (max_dim >= dim) return all;
  RngStream rng(seed, 0xc4a);
  rng.Shuffle(all);
  all.resize(max_dim);
  std::sort(all.begin(), all.end());
  return all;
}

GaussianPatchModel FitPadim(const PadimConfig& cfg,
                            std::span<const PatchFeatureGrid> grids) {
  cfg.Validate();
  if (grids.size() < 2) throw InvalidInput("PaDiM fit needs at least 2 training images");
  const PatchFeatureGrid& first = grids.front();
  for (const auto& g : grids) {
    if (g.grid_h != first.grid_h || g.grid_w != first.grid_w || g.dim != first.dim ||
        g.data.size() != static_cast<size_t>(g.grid_h) * g.grid_w * g.dim) {
      throw InvalidInput("PaDiM fit: feature grids differ in shape");
    }
  }
  const int n = static_cast<int>(grids.size());

  // Canonical order makes the floating-point sums order independent.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::lexicographical_compare(grids[a].data.begin(), grids[a].data.end(),
                                        grids[b].data.begin(), grids[b].data.end());
  });

  GaussianPatchModel m;
  m.grid_h = first.grid_h;
  m.grid_w = first.grid_w;
  m.feature_dim = first.dim;
  m.epsilon = cfg.epsilon;
  m.n_samples = n;
  m.channels = SelectChannels(first.dim, cfg.max_dim, cfg.seed);
  const int d = m.d();
  m.means.assign(static_cast<size_t>(m.cells()) * d, 0.0);
  m.chol.assign(static_cast<size_t>(m.cells()) * d * d, 0.0);

  MatD x(n, d);
  for (int cell = 0; cell < m.cells(); ++cell) {
    for (int i = 0; i < n; ++i) {
      const double* f = grids[order[i]].data.data() + static_cast<size_t>(cell) * first.dim;
      for (int k = 0; k < d; ++k) x(i, k) = f[m.channels[k]];
    }
    double* mu = m.means.data() + static_cast<size_t>(cell) * d;
    for (int k = 0; k < d; ++k) {
      // Shifted by the first sample: identical samples give their exact value.
      double s = 0.0;
      for (int i = 1; i < n; ++i) s += x(i, k) - x(0, k);
      mu[k] = x(0, k) + s / n;
    }
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k) x(i, k) -= mu[k];
    MatD cov = (x.transpose() * x) / static_cast<double>(n - 1);
    cov.diagonal().array() += cfg.epsilon;
    Eigen::LLT<MatD> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw InvalidInput("covariance of cell " + std::to_string(cell) +
                         " is not positive definite; increase epsilon");
    }
    Eigen::Map<MatD> dst(m.chol.data() + static_cast<size_t>(cell) * d * d, d, d);
    dst = llt.matrixL();
  }
  return m;
}

std::vector<double> CellDistances(const GaussianPatchModel& model,
                                  const PatchFeatureGrid& grid) {
  RequireGridMatches(model, grid);
  const int d = model.d();
  std::vector<double> out(model.cells());
  Eigen::VectorXd diff(d);
  for (int cell = 0; cell < model.cells(); ++cell) {
    const double* f = grid.data.data() + static_cast<size_t>(cell) * grid.dim;
    const double* mu = model.means.data() + static_cast<size_t>(cell) * d;
    for (int k = 0; k < d; ++k) diff[k] = f[model.channels[k]] - mu[k];
    Eigen::Map<const MatD> l(model.chol.data() + static_cast<size_t>(cell) * d * d, d, d);
    for (int k = 0; k < d; ++k) {
      if (!(l(k, k) > 0.0)) {
        throw InternalError("Cholesky factor of cell " + std::to_string(cell) +
                            " has a non-positive diagonal");
      }
    }
    l.triangularView<Eigen::Lower>().solveInPlace(diff);
    out[cell] = diff.norm();
  }
  return out;
}

AnomalyMap ScoreMap(const GaussianPatchModel& model, const PatchFeatureGrid& grid,
                    int out_h, int out_w, double smooth_sigma) {
  if (out_h < 1 || out_w < 1) throw InvalidInput("output size must be positive");
  if (!(smooth_sigma >= 0.0)) throw InvalidInput("smoothing sigma must be >= 0");
  const auto cells = CellDistances(model, grid);
  AnomalyMap map;
  map.height = out_h;
  map.width = out_w;
  map.values = ResizeBilinearPlane(cells, model.grid_h, model.grid_w, out_h, out_w);
  if (smooth_sigma > 0.0) GaussianBlurPlane(map.values, out_h, out_w, smooth_sigma, smooth_sigma);
  for (double& v : map.values) v = std::max(v, 0.0);
  return map;
}

double ImageScore(const AnomalyMap& map) {
  if (map.values.empty()) throw InvalidInput("empty anomaly map");
  return *std::max_element(map.values.begin(), map.values.end());
}

void SavePadim(const GaussianPatchModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json h;
  h["format"] = "padim";
  h["version"] = kPadimVersion;
  h["grid_h"] = model.grid_h;
  h["grid_w"] = model.grid_w;
  h["feature_dim"] = model.feature_dim;
  h["d"] = model.d();
  h["epsilon"] = model.epsilon;
  h["n_samples"] = model.n_samples;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << h.dump() << '\n';
  auto put = [&](const auto& values) {
    std::vector<float> f(values.begin(), values.end());
    WriteFloat32LE(os, f);
  };
  put(model.means);
  put(model.chol);
  put(model.channels);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

GaussianPatchModel LoadPadim(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open PaDiM model " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput("empty PaDiM model " + path.string());
  GaussianPatchModel m;
  int d = 0;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.at("format") != "padim" || h.at("version").get<int>() != kPadimVersion) {
      throw InvalidInput("unsupported PaDiM model file " + path.string());
    }
    m.grid_h = h.at("grid_h").get<int>();
    m.grid_w = h.at("grid_w").get<int>();
    m.feature_dim = h.at("feature_dim").get<int>();
    d = h.at("d").get<int>();
    m.epsilon = h.at("epsilon").get<double>();
    m.n_samples = h.at("n_samples").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("bad PaDiM header in " + path.string() + ": " + e.what());
  }
  if (m.grid_h < 1 || m.grid_w < 1 || d < 1 || d > m.feature_dim) {
    throw InvalidInput("inconsistent PaDiM header in " + path.string());
  }
  const size_t cells = static_cast<size_t>(m.grid_h) * m.grid_w;
  const auto means = ReadFloat32LE(is, cells * d);
  const auto chol = ReadFloat32LE(is, cells * d * d);
  const auto channels = ReadFloat32LE(is, d);
  m.means.assign(means.begin(), means.end());
  m.chol.assign(chol.begin(), chol.end());
  for (float c : channels) {
    const int k = static_cast<int>(c);
    if (k < 0 || k >= m.feature_dim || static_cast<float>(k) != c) {
      throw InvalidInput("bad channel index in " + path.string());
    }
    m.channels.push_back(k);
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw InvalidInput("trailing bytes in PaDiM model " + path.string());
  }
  return m;
}

}  // namespace spotdiff
