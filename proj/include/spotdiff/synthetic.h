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

#ifndef SPOTDIFF_SYNTHETIC_H_
#define SPOTDIFF_SYNTHETIC_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spotdiff/image.h"
#include "spotdiff/protocol.h"

namespace spotdiff {

// kMixed draws family, palette and geometry per image; the others render
// aligned parts with small capture variation.
enum class TextureFamily { kStripes, kChecker, kBlobs, kMixed };
enum class DefectKind { kSpot, kScratch, kMissingPatch };

std::string ToString(TextureFamily t);
TextureFamily ParseTexture(const std::string& name);

// Procedural stand-in for an industrial inspection set: aligned textured
// parts with small capture variation, some of them with a stamped defect.
struct SyntheticCorpusConfig {
  int image_count = 200;
  int size = 64;
  TextureFamily texture = TextureFamily::kStripes;
  std::vector<DefectKind> defect_kinds = {DefectKind::kSpot,
                                          DefectKind::kScratch,
                                          DefectKind::kMissingPatch};
  // Bounding-box extent (max of height, width) of a defect, in pixels.
  int min_defect = 6;
  int max_defect = 14;
  // Samples [count - round(fraction * count), count) carry a defect.
  double anomaly_fraction = 0.0;
  uint64_t seed = 0;
  std::string object = "synthetic";

  void Validate() const;
  int AnomalyCount() const;
};

struct SyntheticCorpus {
  std::vector<Image> images;
  std::vector<AlphaMask> masks;  // binary; all zero for normals
  std::vector<DefectKind> kinds;  // meaningful for anomalies only
  // Virtual paths laid out as <object>/{normal,anomaly}/NNNNNN.ppm with
  // masks at <object>/masks/NNNNNN.pgm, matching ScanDataset.
  DatasetManifest manifest;
};

// Defect-free rendering of sample `index`; the twin of an anomaly.
Image RenderNormal(const SyntheticCorpusConfig& cfg, int index);

SyntheticCorpus GenerateSyntheticCorpus(const SyntheticCorpusConfig& cfg);

// Writes images and masks under `root` using the manifest's relative paths
// and returns the manifest with paths rewritten to the written files.
DatasetManifest WriteSyntheticCorpus(const SyntheticCorpus& corpus,
                                     const std::filesystem::path& root);

}  // namespace spotdiff

#endif  // SPOTDIFF_SYNTHETIC_H_
