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

// Dataset manifests and the three evaluation split protocols.
//
// Percentages are applied per class with floor rounding; the remainder always
// goes to the test side. All shuffles are seeded RngStream draws, so a split
// is a pure function of (manifest, object, seeds).

#ifndef SPOTDIFF_PROTOCOL_H_
#define SPOTDIFF_PROTOCOL_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spotdiff {

enum class SampleLabel { kNormal = 0, kAnomaly = 1 };

struct ManifestRecord {
  int64_t id = 0;
  std::string path;
  std::string object;
  SampleLabel label = SampleLabel::kNormal;
  std::optional<std::string> mask_path;
  std::optional<std::string> anomaly_class;

  bool operator==(const ManifestRecord&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;

  const ManifestRecord& ById(int64_t id) const;
  std::vector<std::string> Objects() const;
  // Throws InvalidInput on duplicate paths or ids.
  void Validate() const;
  bool operator==(const DatasetManifest&) const = default;
};

enum class ProtocolKind { kOneClass, kHighShot, kKShot };

std::string ToString(ProtocolKind kind);
ProtocolKind ParseProtocol(const std::string& name);

struct SplitManifest {
  ProtocolKind kind = ProtocolKind::kOneClass;
  std::string object;
  uint64_t seed = 0;
  int run = 0;
  int k = 0;  // k-shot only
  std::vector<int64_t> train_ids;
  std::vector<int64_t> test_ids;
};

// Expects <root>/<object>/{normal,anomaly}/... image files, optionally with
// anomaly-class subdirectories under anomaly/, and an optional
// <root>/<object>/masks/ tree mirroring anomaly/. Records are sorted by path
// and numbered from 0. A missing mask for an anomaly (when masks/ exists) is
// collected; all such issues are thrown together as DatasetScanError.
DatasetManifest ScanDataset(const std::filesystem::path& root);

// train = floor(0.9 n_normal) shuffled normals; test = other normals plus
// every anomaly.
SplitManifest OneClassSplit(const DatasetManifest& manifest,
                            const std::string& object, uint64_t seed);
// floor(0.6 n) of each class to train, the rest to test.
SplitManifest HighShotSplit(const DatasetManifest& manifest,
                            const std::string& object, uint64_t seed);

inline constexpr uint64_t kDefaultPoolSeed = 20220801;

// The pool is floor(0.2 n) per class chosen with `pool_seed` (fixed across
// runs); train is k draws per class from the pool using `run_seed`; test is
// the 80% outside the pool.
SplitManifest KShotSplit(const DatasetManifest& manifest,
                         const std::string& object, int k, uint64_t run_seed,
                         uint64_t pool_seed = kDefaultPoolSeed);

// Ids of the k-shot pool (both classes), for verification.
std::vector<int64_t> KShotPool(const DatasetManifest& manifest,
                               const std::string& object,
                               uint64_t pool_seed = kDefaultPoolSeed);

// Arithmetic of each protocol for n_normal / n_anomaly samples.
struct SplitCounts {
  int64_t train_normal = 0;
  int64_t train_anomaly = 0;
  int64_t test_normal = 0;
  int64_t test_anomaly = 0;
};
SplitCounts ExpectedCounts(ProtocolKind kind, int64_t n_normal,
                           int64_t n_anomaly, int k = 0);

// CSV with header id,path,object,label,mask_path,split,run.
void WriteManifestCsv(const DatasetManifest& manifest, std::ostream& out);
DatasetManifest ReadManifestCsv(std::istream& in);
// Train rows then test rows of each split, in id order, one block per split.
void WriteSplitCsv(const DatasetManifest& manifest,
                   const std::vector<SplitManifest>& splits, std::ostream& out);

struct AggregateReport {
  std::map<std::string, double> mean;
  std::map<std::string, double> stddev;  // sample std (n - 1); 0 for n = 1
  int runs = 0;
};
AggregateReport FiveRunAverage(
    const std::vector<std::map<std::string, double>>& reports);

}  // namespace spotdiff

#endif  // SPOTDIFF_PROTOCOL_H_
