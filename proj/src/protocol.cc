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

#include "spotdiff/protocol.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "spotdiff/error.h"
#include "spotdiff/rng.h"

namespace spotdiff {
namespace fs = std::filesystem;
namespace {

const std::set<std::string>& ImageExtensions() {
  static const std::set<std::string> exts = {".png", ".ppm", ".pgm", ".jpg",
                                             ".jpeg", ".bmp", ".tif", ".tiff",
                                             ".JPG", ".PNG"};
  return exts;
}

bool IsImageFile(const fs::path& p) {
  return fs::is_regular_file(p) && ImageExtensions().count(p.extension().string());
}

// FNV-1a; stable across platforms, unlike std::hash.
uint64_t StableHash(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct ClassIds {
  std::vector<int64_t> normal;
  std::vector<int64_t> anomaly;
};

ClassIds CollectObject(const DatasetManifest& manifest,
                       const std::string& object) {
  ClassIds ids;
  for (const auto& r : manifest.records) {
    if (r.object != object) continue;
    (r.label == SampleLabel::kNormal ? ids.normal : ids.anomaly).push_back(r.id);
  }
  if (ids.normal.empty() && ids.anomaly.empty()) {
    throw InvalidInput("object '" + object + "' not present in manifest");
  }
  return ids;
}

std::vector<int64_t> Shuffled(std::vector<int64_t> ids, uint64_t seed,
                              const std::string& object, uint64_t tag) {
  RngStream rng(seed, HashCombine(StableHash(object), tag));
  rng.Shuffle(ids);
  return ids;
}

void Append(std::vector<int64_t>& dst, const std::vector<int64_t>& src,
            size_t begin, size_t end) {
  dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(begin),
             src.begin() + static_cast<std::ptrdiff_t>(end));
}

// floor(n * num / 10) without floating point.
int64_t Tenths(int64_t n, int64_t num) { return n * num / 10; }

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> ParseCsvLine(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

void WriteRow(std::ostream& out, const ManifestRecord& r,
              const std::string& split, const std::string& run) {
  out << r.id << ',' << CsvField(r.path) << ',' << CsvField(r.object) << ','
      << (r.label == SampleLabel::kNormal ? "normal" : "anomaly") << ','
      << CsvField(r.mask_path.value_or("")) << ',' << split << ',' << run
      << '\n';
}

constexpr const char* kCsvHeader = "id,path,object,label,mask_path,split,run";

}  // namespace

const ManifestRecord& DatasetManifest::ById(int64_t id) const {
  if (id >= 0 && static_cast<size_t>(id) < records.size() &&
      records[static_cast<size_t>(id)].id == id) {
    return records[static_cast<size_t>(id)];
  }
  for (const auto& r : records) {
    if (r.id == id) return r;
  }
  throw InvalidInput("unknown record id " + std::to_string(id));
}

std::vector<std::string> DatasetManifest::Objects() const {
  std::set<std::string> objs;
  for (const auto& r : records) objs.insert(r.object);
  return {objs.begin(), objs.end()};
}

void DatasetManifest::Validate() const {
  std::set<std::string> paths;
  std::set<int64_t> ids;
  for (const auto& r : records) {
    if (!paths.insert(r.path).second) {
      throw InvalidInput("duplicate manifest path " + r.path);
    }
    if (!ids.insert(r.id).second) {
      throw InvalidInput("duplicate manifest id " + std::to_string(r.id));
    }
  }
}

std::string ToString(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::kOneClass: return "one-class";
    case ProtocolKind::kHighShot: return "high-shot";
    case ProtocolKind::kKShot: return "k-shot";
  }
  return "unknown";
}

ProtocolKind ParseProtocol(const std::string& name) {
  if (name == "one-class") return ProtocolKind::kOneClass;
  if (name == "high-shot") return ProtocolKind::kHighShot;
  if (name == "k-shot") return ProtocolKind::kKShot;
  throw InvalidInput("unknown protocol '" + name +
                     "' (expected one-class, high-shot or k-shot)");
}

DatasetManifest ScanDataset(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw InvalidInput("dataset root is not a directory: " + root.string());
  }
  std::vector<ManifestRecord> records;
  std::vector<std::string> issues;
  std::vector<fs::path> objects;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) objects.push_back(e.path());
  }
  std::sort(objects.begin(), objects.end());

  for (const auto& obj_dir : objects) {
    const std::string object = obj_dir.filename().string();
    const fs::path masks_dir = obj_dir / "masks";
    const bool has_masks = fs::is_directory(masks_dir);
    for (const auto* sub : {"normal", "anomaly"}) {
      const fs::path dir = obj_dir / sub;
      if (!fs::is_directory(dir)) continue;
      const bool anomaly = std::string(sub) == "anomaly";
      for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!IsImageFile(e.path())) continue;
        ManifestRecord r;
        r.path = e.path().lexically_normal().generic_string();
        r.object = object;
        r.label = anomaly ? SampleLabel::kAnomaly : SampleLabel::kNormal;
        if (anomaly) {
          const fs::path rel = e.path().lexically_relative(dir);
          if (rel.has_parent_path()) {
            r.anomaly_class = rel.begin()->string();
          }
          if (has_masks) {
            fs::path mask = masks_dir / rel;
            if (!fs::exists(mask)) {
              // Same stem with any image extension.
              for (const auto& ext : ImageExtensions()) {
                fs::path alt = mask;
                alt.replace_extension(ext);
                if (fs::exists(alt)) {
                  mask = alt;
                  break;
                }
              }
            }
            if (fs::exists(mask)) {
              r.mask_path = mask.lexically_normal().generic_string();
            } else {
              issues.push_back("anomaly image without mask: " + r.path);
            }
          }
        }
        records.push_back(std::move(r));
      }
    }
  }
  if (!issues.empty()) {
    std::sort(issues.begin(), issues.end());
    throw DatasetScanError(std::move(issues));
  }
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.path < b.path; });
  DatasetManifest m;
  m.records = std::move(records);
  for (size_t i = 0; i < m.records.size(); ++i) {
    m.records[i].id = static_cast<int64_t>(i);
  }
  return m;
}

SplitCounts ExpectedCounts(ProtocolKind kind, int64_t n_normal,
                           int64_t n_anomaly, int k) {
  SplitCounts c;
  switch (kind) {
    case ProtocolKind::kOneClass:
      c.train_normal = Tenths(n_normal, 9);
      c.test_normal = n_normal - c.train_normal;
      c.test_anomaly = n_anomaly;
      break;
    case ProtocolKind::kHighShot:
      c.train_normal = Tenths(n_normal, 6);
      c.train_anomaly = Tenths(n_anomaly, 6);
      c.test_normal = n_normal - c.train_normal;
      c.test_anomaly = n_anomaly - c.train_anomaly;
      break;
    case ProtocolKind::kKShot:
      c.train_normal = k;
      c.train_anomaly = k;
      c.test_normal = n_normal - Tenths(n_normal, 2);
      c.test_anomaly = n_anomaly - Tenths(n_anomaly, 2);
      break;
  }
  return c;
}

SplitManifest OneClassSplit(const DatasetManifest& manifest,
                            const std::string& object, uint64_t seed) {
  const auto ids = CollectObject(manifest, object);
  if (ids.normal.empty()) {
    throw InvalidInput("one-class split needs normal samples for " + object);
  }
  const auto normal = Shuffled(ids.normal, seed, object, 0);
  const auto n_train = static_cast<size_t>(Tenths(static_cast<int64_t>(normal.size()), 9));
  SplitManifest s;
  s.kind = ProtocolKind::kOneClass;
  s.object = object;
  s.seed = seed;
  Append(s.train_ids, normal, 0, n_train);
  Append(s.test_ids, normal, n_train, normal.size());
  Append(s.test_ids, ids.anomaly, 0, ids.anomaly.size());
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

SplitManifest HighShotSplit(const DatasetManifest& manifest,
                            const std::string& object, uint64_t seed) {
  const auto ids = CollectObject(manifest, object);
  if (ids.normal.empty() || ids.anomaly.empty()) {
    throw InvalidInput("high-shot split needs both classes for " + object);
  }
  SplitManifest s;
  s.kind = ProtocolKind::kHighShot;
  s.object = object;
  s.seed = seed;
  uint64_t tag = 0;
  for (const auto* cls : {&ids.normal, &ids.anomaly}) {
    const auto shuffled = Shuffled(*cls, seed, object, tag++);
    const auto n_train =
        static_cast<size_t>(Tenths(static_cast<int64_t>(shuffled.size()), 6));
    Append(s.train_ids, shuffled, 0, n_train);
    Append(s.test_ids, shuffled, n_train, shuffled.size());
  }
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

namespace {

struct KShotPools {
  std::vector<int64_t> pool[2];
  std::vector<int64_t> rest[2];
};

KShotPools BuildPools(const DatasetManifest& manifest, const std::string& object,
                      uint64_t pool_seed) {
  const auto ids = CollectObject(manifest, object);
  KShotPools p;
  const std::vector<int64_t>* cls[2] = {&ids.normal, &ids.anomaly};
  for (int c = 0; c < 2; ++c) {
    const auto shuffled = Shuffled(*cls[c], pool_seed, object, 100 + c);
    const auto n_pool =
        static_cast<size_t>(Tenths(static_cast<int64_t>(shuffled.size()), 2));
    Append(p.pool[c], shuffled, 0, n_pool);
    Append(p.rest[c], shuffled, n_pool, shuffled.size());
  }
  return p;
}

}  // namespace

std::vector<int64_t> KShotPool(const DatasetManifest& manifest,
                               const std::string& object, uint64_t pool_seed) {
  auto p = BuildPools(manifest, object, pool_seed);
  std::vector<int64_t> out = p.pool[0];
  out.insert(out.end(), p.pool[1].begin(), p.pool[1].end());
  std::sort(out.begin(), out.end());
  return out;
}

SplitManifest KShotSplit(const DatasetManifest& manifest,
                         const std::string& object, int k, uint64_t run_seed,
                         uint64_t pool_seed) {
  if (k < 1) throw InvalidInput("k must be >= 1");
  auto p = BuildPools(manifest, object, pool_seed);
  for (int c = 0; c < 2; ++c) {
    if (static_cast<size_t>(k) > p.pool[c].size()) {
      throw InvalidInput("k=" + std::to_string(k) + " exceeds the " +
                         (c == 0 ? "normal" : "anomaly") + " pool of size " +
                         std::to_string(p.pool[c].size()) + " for " + object);
    }
  }
  SplitManifest s;
  s.kind = ProtocolKind::kKShot;
  s.object = object;
  s.seed = run_seed;
  s.k = k;
  for (int c = 0; c < 2; ++c) {
    auto drawn = Shuffled(p.pool[c], run_seed, object, 200 + c);
    Append(s.train_ids, drawn, 0, static_cast<size_t>(k));
    Append(s.test_ids, p.rest[c], 0, p.rest[c].size());
  }
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

void WriteManifestCsv(const DatasetManifest& manifest, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : manifest.records) WriteRow(out, r, "", "");
}

DatasetManifest ReadManifestCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("manifest CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw InvalidInput("manifest CSV header must be '" + std::string(kCsvHeader) + "'");
  }
  DatasetManifest m;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = ParseCsvLine(line);
    if (f.size() != 7) {
      throw InvalidInput("manifest CSV line " + std::to_string(line_no) +
                         ": expected 7 fields");
    }
    ManifestRecord r;
    try {
      r.id = std::stoll(f[0]);
    } catch (const std::exception&) {
      throw InvalidInput("manifest CSV line " + std::to_string(line_no) +
                         ": bad id");
    }
    r.path = f[1];
    r.object = f[2];
    if (f[3] == "normal") {
      r.label = SampleLabel::kNormal;
    } else if (f[3] == "anomaly") {
      r.label = SampleLabel::kAnomaly;
    } else {
      throw InvalidInput("manifest CSV line " + std::to_string(line_no) +
                         ": label must be normal or anomaly");
    }
    if (!f[4].empty()) r.mask_path = f[4];
    m.records.push_back(std::move(r));
  }
  m.Validate();
  return m;
}

void WriteSplitCsv(const DatasetManifest& manifest,
                   const std::vector<SplitManifest>& splits, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& s : splits) {
    const std::string run = std::to_string(s.run);
    for (int64_t id : s.train_ids) WriteRow(out, manifest.ById(id), "train", run);
    for (int64_t id : s.test_ids) WriteRow(out, manifest.ById(id), "test", run);
  }
}

AggregateReport FiveRunAverage(
    const std::vector<std::map<std::string, double>>& reports) {
  if (reports.empty()) throw InvalidInput("no reports to average");
  AggregateReport agg;
  agg.runs = static_cast<int>(reports.size());
  for (const auto& r : reports) {
    if (r.size() != reports.front().size() ||
        !std::equal(r.begin(), r.end(), reports.front().begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; })) {
      throw InvalidInput("reports have mismatched metric keys");
    }
  }
  const auto n = static_cast<double>(reports.size());
  for (const auto& [key, unused] : reports.front()) {
    // Shifted by the first run so identical runs give exactly zero spread.
    const double first = reports.front().at(key);
    double shift = 0.0;
    for (const auto& r : reports) shift += r.at(key) - first;
    const double mean = first + shift / n;
    double ss = 0.0;
    for (const auto& r : reports) {
      const double d = r.at(key) - mean;
      ss += d * d;
    }
    agg.mean[key] = mean;
    agg.stddev[key] = reports.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  return agg;
}

}  // namespace spotdiff
