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

#include "spotdiff/cli.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "spotdiff/checkpoint.h"
#include "spotdiff/error.h"
#include "spotdiff/image.h"
#include "spotdiff/imageops.h"
#include "spotdiff/metrics.h"
#include "spotdiff/padim.h"
#include "spotdiff/protocol.h"
#include "spotdiff/synthetic.h"
#include "spotdiff/trainer.h"

namespace spotdiff {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr const char* kTool = "spd";

// Resolved settings with the origin of each value: "default", "config" or
// "flag". Precedence is flag > config file > default.
class Settings {
 public:
  void Default(const std::string& key, const std::string& value) {
    values_[key] = {value, "default"};
  }

  bool Known(const std::string& key) const { return values_.count(key) > 0; }

  void Set(const std::string& key, const std::string& value, const std::string& source) {
    if (!Known(key)) throw InvalidInput("unknown setting '" + key + "'");
    values_[key] = {value, source};
  }

  // Flat key=value text; '#' starts a comment; '-' in keys reads as '_'.
  void LoadFile(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read config file " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw InvalidInput(path.string() + ":" + std::to_string(lineno) +
                           ": expected key=value");
      }
      std::string key = trim(line.substr(0, eq));
      std::replace(key.begin(), key.end(), '-', '_');
      if (key == "config") throw InvalidInput("config files cannot include other config files");
      if (!Known(key)) {
        throw InvalidInput(path.string() + ":" + std::to_string(lineno) +
                           ": unknown key '" + key + "'");
      }
      Set(key, trim(line.substr(eq + 1)), "config");
    }
  }

  const std::string& Str(const std::string& key) const { return values_.at(key).first; }
  bool Has(const std::string& key) const { return Known(key) && !Str(key).empty(); }

  double Double(const std::string& key) const {
    const std::string& s = Str(key);
    try {
      size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw InvalidInput("--" + Flag(key) + " expects a number, got '" + s + "'");
    }
  }

  int64_t Int(const std::string& key) const {
    const std::string& s = Str(key);
    int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw InvalidInput("--" + Flag(key) + " expects an integer, got '" + s + "'");
    }
    return v;
  }

  uint64_t U64(const std::string& key) const {
    const std::string& s = Str(key);
    uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
      throw InvalidInput("--" + Flag(key) + " expects a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  bool Bool(const std::string& key) const {
    const std::string& s = Str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no" || s.empty()) return false;
    throw InvalidInput("--" + Flag(key) + " expects true/false, got '" + s + "'");
  }

  uint64_t RequiredSeed() const {
    if (!Has("seed")) throw InvalidInput("--seed is required for this command");
    return U64("seed");
  }

  ojson Provenance() const {
    ojson j = ojson::object();
    for (const auto& [k, v] : values_) j[k] = {{"value", v.first}, {"source", v.second}};
    return j;
  }

  std::vector<std::string> Keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
  }

  static std::string Flag(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }

 private:
  std::map<std::string, std::pair<std::string, std::string>> values_;
};

struct Command {
  CLI::App* app = nullptr;
  Settings settings;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, bool> switch_values;
  std::vector<std::string> bool_keys;
  std::function<void(Command&, std::ostream&)> run;
};

// Registers every setting as --key; booleans become switches.
void Bind(Command& cmd, const std::map<std::string, std::string>& help) {
  for (const auto& key : cmd.settings.Keys()) {
    const std::string flag = "--" + Settings::Flag(key);
    const auto h = help.count(key) ? help.at(key) : std::string();
    if (std::find(cmd.bool_keys.begin(), cmd.bool_keys.end(), key) != cmd.bool_keys.end()) {
      cmd.app->add_flag(flag, cmd.switch_values[key], h);
    } else {
      cmd.app->add_option(flag, cmd.flag_values[key], h);
    }
  }
}

void Resolve(Command& cmd) {
  if (CLI::Option* opt = cmd.app->get_option_no_throw("--config"); opt && opt->count()) {
    cmd.settings.LoadFile(cmd.flag_values["config"]);
  }
  for (const auto& key : cmd.settings.Keys()) {
    const std::string flag = "--" + Settings::Flag(key);
    CLI::Option* opt = cmd.app->get_option_no_throw(flag);
    if (!opt || opt->count() == 0) continue;
    if (cmd.switch_values.count(key)) {
      cmd.settings.Set(key, "true", "flag");
    } else {
      cmd.settings.Set(key, cmd.flag_values[key], "flag");
    }
  }
}

fs::path OutDir(const Settings& s) {
  if (!s.Has("out")) throw InvalidInput("--out is required for this command");
  fs::path out = s.Str("out");
  fs::create_directories(out);
  return out;
}

void WriteJson(const fs::path& path, const ojson& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

ojson Header(const std::string& command, const Settings& s) {
  ojson j;
  j["tool"] = kTool;
  j["command"] = command;
  j["settings"] = s.Provenance();
  return j;
}

std::string Fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Manifest from --manifest (paths relative to the file) or --data (scan).
DatasetManifest LoadManifest(const Settings& s) {
  if (s.Has("manifest")) {
    const fs::path path = s.Str("manifest");
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read manifest " + path.string());
    DatasetManifest m = ReadManifestCsv(in);
    const fs::path base = path.parent_path();
    auto fix = [&](std::string& p) {
      fs::path q = p;
      if (q.is_relative() && !fs::exists(q) && fs::exists(base / q)) {
        p = (base / q).lexically_normal().generic_string();
      }
    };
    for (auto& r : m.records) {
      fix(r.path);
      if (r.mask_path) fix(*r.mask_path);
    }
    return m;
  }
  if (s.Has("data")) return ScanDataset(s.Str("data"));
  throw InvalidInput("one of --manifest or --data is required");
}

std::vector<const ManifestRecord*> SelectRecords(const DatasetManifest& m,
                                                 const std::string& object,
                                                 std::optional<SampleLabel> label) {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : m.records) {
    if (!object.empty() && r.object != object) continue;
    if (label && r.label != *label) continue;
    out.push_back(&r);
  }
  return out;
}

AugConfig AugFromSettings(const Settings& s, int size) {
  AugConfig a;
  a.output_size = size;
  const std::string local = s.Str("local");
  if (local == "smoothblend") {
    a.local = LocalAugmentation::kSmoothBlend;
  } else if (local == "cutpaste") {
    a.local = LocalAugmentation::kCutPaste;
  } else {
    throw InvalidInput("--local must be smoothblend or cutpaste, got '" + local + "'");
  }
  a.smoothblend.mask_sigma_x = a.smoothblend.mask_sigma_y = s.Double("mask_sigma");
  a.Validate();
  return a;
}

// ---------------------------------------------------------------------------
// Commands

void CmdSplit(Command& c, std::ostream& out) {
  const Settings& s = c.settings;
  const uint64_t seed = s.RequiredSeed();
  const ProtocolKind kind = ParseProtocol(s.Str("protocol"));
  const int64_t runs = s.Int("runs");
  if (runs < 1) throw InvalidInput("--runs must be >= 1");
  const int64_t k = s.Int("k");
  const DatasetManifest manifest = LoadManifest(s);
  std::vector<std::string> objects;
  if (s.Has("object")) {
    objects.push_back(s.Str("object"));
  } else {
    objects = manifest.Objects();
  }
  std::vector<SplitManifest> splits;
  ojson counts = ojson::array();
  for (const auto& obj : objects) {
    for (int64_t run = 0; run < runs; ++run) {
      const uint64_t run_seed = seed + static_cast<uint64_t>(run);
      SplitManifest sm;
      switch (kind) {
        case ProtocolKind::kOneClass: sm = OneClassSplit(manifest, obj, run_seed); break;
        case ProtocolKind::kHighShot: sm = HighShotSplit(manifest, obj, run_seed); break;
        case ProtocolKind::kKShot:
          if (k < 1 || k > 1000000) throw InvalidInput("--k must be a positive integer");
          sm = KShotSplit(manifest, obj, static_cast<int>(k), run_seed, s.U64("pool_seed"));
          break;
      }
      sm.run = static_cast<int>(run);
      counts.push_back({{"object", obj}, {"run", run}, {"seed", run_seed},
                        {"train", sm.train_ids.size()}, {"test", sm.test_ids.size()}});
      splits.push_back(std::move(sm));
    }
  }
  const fs::path dir = OutDir(s);
  {
    std::ofstream os(dir / "splits.csv", std::ios::binary);
    WriteSplitCsv(manifest, splits, os);
  }
  {
    std::ofstream os(dir / "manifest.csv", std::ios::binary);
    WriteManifestCsv(manifest, os);
  }
  ojson meta = Header("split", s);
  meta["splits"] = counts;
  WriteJson(dir / "splits.meta.json", meta);
  out << "wrote " << splits.size() << " split(s) to " << (dir / "splits.csv").string() << '\n';
}

void CmdAugmentPreview(Command& c, std::ostream& out) {
  const Settings& s = c.settings;
  const uint64_t seed = s.RequiredSeed();
  if (!s.Has("input")) throw InvalidInput("--input is required");
  const fs::path input = s.Str("input");
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(input)) {
    files.push_back(input);
  } else {
    throw InvalidInput("input " + input.string() + " does not exist");
  }
  if (files.empty()) throw InvalidInput("no PNM images under " + input.string());
  const int size = static_cast<int>(s.Int("size"));
  const AugConfig aug = AugFromSettings(s, size);
  const fs::path dir = OutDir(s);
  ojson items = ojson::array();
  for (size_t i = 0; i < files.size(); ++i) {
    const Image img = LoadRgb(files[i], 0);
    RngStream rng(seed, i);
    const SpdTriplet t = MakeSpdTriplet(img, rng, aug);
    const std::string stem = files[i].stem().string();
    WritePnm(t.anchor, dir / (stem + "_anchor.ppm"));
    WritePnm(t.positive, dir / (stem + "_positive.ppm"));
    WritePnm(t.negative, dir / (stem + "_negative.ppm"));
    WritePnm(t.mask, dir / (stem + "_mask.pgm"));
    items.push_back({{"input", files[i].generic_string()}, {"stem", stem},
                     {"mask_binary", t.mask.IsBinary()}});
  }
  ojson meta = Header("augment-preview", s);
  meta["items"] = items;
  WriteJson(dir / "augment_preview.json", meta);
  out << "wrote " << 4 * files.size() << " images to " << dir.string() << '\n';
}

void CmdPretrain(Command& c, std::ostream& out) {
  const Settings& s = c.settings;
  TrainConfig cfg;
  cfg.seed = s.RequiredSeed();
  cfg.objective = ParseObjective(s.Str("mode"));
  cfg.eta = s.Double("eta");
  cfg.tau = s.Double("tau");
  cfg.steps = static_cast<int>(s.Int("steps"));
  cfg.batch = static_cast<int>(s.Int("batch"));
  cfg.lr = s.Double("lr");
  cfg.momentum = s.Double("momentum");
  cfg.precision = ParsePrecision(s.Str("precision"));
  cfg.supervised_spd_cosine = s.Bool("spd_cosine");
  cfg.model.input_size = static_cast<int>(s.Int("size"));
  cfg.aug = AugFromSettings(s, cfg.model.input_size);
  cfg.Validate();

  std::vector<Image> images;
  std::vector<int> labels;
  if (s.Has("synthetic_count")) {
    SyntheticCorpusConfig sc;
    sc.image_count = static_cast<int>(s.Int("synthetic_count"));
    sc.size = cfg.model.input_size;
    sc.texture = ParseTexture(s.Str("texture"));
    sc.seed = cfg.seed;
    sc.Validate();
    for (int i = 0; i < sc.image_count; ++i) {
      images.push_back(RenderNormal(sc, i));
      labels.push_back(i % 2);
    }
  } else {
    const DatasetManifest m = LoadManifest(s);
    const bool supervised = cfg.objective == Objective::kSupervisedAux;
    const auto objects = m.Objects();
    const auto recs = SelectRecords(m, s.Str("object"),
                                    supervised ? std::nullopt
                                               : std::optional(SampleLabel::kNormal));
    for (const auto* r : recs) {
      images.push_back(LoadRgb(r->path, cfg.model.input_size));
      if (objects.size() > 1) {
        labels.push_back(static_cast<int>(
            std::find(objects.begin(), objects.end(), r->object) - objects.begin()));
      } else {
        labels.push_back(static_cast<int>(r->label));
      }
    }
  }
  if (images.empty()) throw InvalidInput("no training images selected");
  const int report_every = std::max(1, cfg.steps / 10);
  auto progress = [&](int step, double loss) {
    if (step % report_every == 0 || step == cfg.steps) {
      out << "step " << step << "/" << cfg.steps << " loss " << Fmt(loss) << '\n';
    }
  };
  const Checkpoint ckpt = cfg.objective == Objective::kSupervisedAux
                              ? TrainSupervisedAux(cfg, images, labels, progress)
                              : TrainSpd(cfg, images, progress);
  const fs::path dir = OutDir(s);
  SaveCheckpoint(ckpt, dir / "model.spdckpt");
  ojson meta = Header("pretrain", s);
  meta["train_config"] = ckpt.train_config;
  meta["images"] = images.size();
  meta["loss_history"] = ckpt.loss_history;
  WriteJson(dir / "pretrain.json", meta);
  out << "wrote " << (dir / "model.spdckpt").string() << '\n';
}

// Normal records of the train split (run --run) if --split-csv is given,
// else all normals. Split CSV rows end with ",split,run".
std::vector<const ManifestRecord*> FitRecords(const Settings& s, const DatasetManifest& m) {
  const auto normals = SelectRecords(m, s.Str("object"), SampleLabel::kNormal);
  if (!s.Has("split_csv")) return normals;
  std::ifstream in(s.Str("split_csv"));
  if (!in) throw InvalidInput("cannot read split CSV " + s.Str("split_csv"));
  const std::string run = s.Str("run");
  std::string line;
  std::getline(in, line);
  std::set<int64_t> train;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto first = line.find(',');
    const auto last = line.rfind(',');
    const auto prev = last == std::string::npos || last == 0 ? std::string::npos
                                                             : line.rfind(',', last - 1);
    if (first == std::string::npos || prev == std::string::npos) {
      throw InvalidInput("malformed split CSV row: " + line);
    }
    if (line.substr(prev + 1, last - prev - 1) == "train" && line.substr(last + 1) == run) {
      train.insert(std::stoll(line.substr(0, first)));
    }
  }
  std::vector<const ManifestRecord*> out;
  for (const auto* r : normals) {
    if (train.count(r->id)) out.push_back(r);
  }
  return out;
}

void CmdPadimFit(Command& c, std::ostream& out) {
  const Settings& s = c.settings;
  PadimConfig pc;
  pc.seed = s.RequiredSeed();
  pc.epsilon = s.Double("epsilon");
  pc.max_dim = static_cast<int>(s.Int("max_dim"));
  pc.Validate();
  if (!s.Has("checkpoint")) throw InvalidInput("--checkpoint is required");
  const Model<float> model = ModelFromCheckpoint<float>(LoadCheckpoint(s.Str("checkpoint")));
  const DatasetManifest m = LoadManifest(s);
  std::vector<Image> images;
  for (const auto* r : FitRecords(s, m)) {
    images.push_back(LoadRgb(r->path, model.config().input_size));
  }
  const auto grids = ExtractFeatures(model, images);
  const GaussianPatchModel gm = FitPadim(pc, grids);
  const fs::path dir = OutDir(s);
  SavePadim(gm, dir / "model.padim");
  ojson meta = Header("padim fit", s);
  meta["n_train"] = images.size();
  meta["grid"] = {gm.grid_h, gm.grid_w};
  meta["feature_dim"] = gm.feature_dim;
  meta["d"] = gm.d();
  WriteJson(dir / "padim_fit.json", meta);
  out << "fitted on " << images.size() << " images; wrote "
      << (dir / "model.padim").string() << '\n';
}

void WriteMapPgm(const AnomalyMap& map, double scale, const fs::path& path) {
  AlphaMask m(map.height, map.width);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      m.at(y, x) = static_cast<float>(std::clamp(scale > 0 ? map.at(y, x) / scale : 0.0, 0.0, 1.0));
  WritePnm(m, path);
}

void CmdPadimScore(Command& c, std::ostream& out) {
  const Settings& s = c.settings;
  if (!s.Has("checkpoint")) throw InvalidInput("--checkpoint is required");
  if (!s.Has("model")) throw InvalidInput("--model is required");
  const Model<float> model = ModelFromCheckpoint<float>(LoadCheckpoint(s.Str("checkpoint")));
  const GaussianPatchModel gm = LoadPadim(s.Str("model"));
  const double sigma = s.Double("smooth_sigma");
  const DatasetManifest m = LoadManifest(s);
  const auto recs = SelectRecords(m, s.Str("object"), std::nullopt);
  if (recs.empty()) throw InvalidInput("no records to score");
  const fs::path dir = OutDir(s);
  const bool save_maps = s.Bool("save_maps");
  if (save_maps) fs::create_directories(dir / "maps");

  std::vector<ScoredSample> image_scores;
  std::vector<AnomalyMap> maps;
  std::vector<AlphaMask> masks;
  bool have_masks = true;
  std::ostringstream csv;
  csv << "id,path,label,score\n";
  for (const auto* r : recs) {
    const Image img = LoadRgb(r->path, model.config().input_size);
    const auto grid = ExtractFeatures(model, img);
    AnomalyMap map = ScoreMap(gm, grid, img.height(), img.width(), sigma);
    const double score = ImageScore(map);
    const int label = r->label == SampleLabel::kAnomaly ? 1 : 0;
    image_scores.push_back({score, label});
    csv << r->id << ',' << r->path << ',' << label << ',' << Fmt(score) << '\n';
    if (save_maps) WriteMapPgm(map, score, dir / "maps" / (std::to_string(r->id) + ".pgm"));
    AlphaMask mask(img.height(), img.width());
    if (label == 1) {
      if (r->mask_path) {
        const Image mi = LoadRgb(*r->mask_path, img.height());
        for (int y = 0; y < mask.height(); ++y)
          for (int x = 0; x < mask.width(); ++x) mask.at(y, x) = mi.at(y, x, 0);
      } else {
        have_masks = false;
      }
    }
    maps.push_back(std::move(map));
    masks.push_back(std::move(mask));
  }
  {
    std::ofstream os(dir / "scores.csv", std::ios::binary);
    os << csv.str();
  }
  ojson meta = Header("padim score", s);
  meta["n_scored"] = recs.size();
  try {
    meta["image_metrics"] = ojson::parse(Evaluate(image_scores).ToJson());
  } catch (const CurveMetricsError& e) {
    meta["image_metrics"] = nullptr;
    meta["image_metrics_note"] = e.what();
  }
  if (have_masks) {
    try {
      meta["pixel_metrics"] = ojson::parse(PixelMetrics(maps, masks).ToJson());
    } catch (const CurveMetricsError& e) {
      meta["pixel_metrics"] = nullptr;
      meta["pixel_metrics_note"] = e.what();
    }
  }
  WriteJson(dir / "padim_score.json", meta);
  out << "scored " << recs.size() << " images; wrote " << (dir / "scores.csv").string() << '\n';
}

std::vector<ScoredSample> ReadScoresCsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read scores " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("empty scores file " + path.string());
  auto split = [](const std::string& l) {
    std::vector<std::string> f;
    std::stringstream ss(l);
    std::string x;
    while (std::getline(ss, x, ',')) {
      if (!x.empty() && x.back() == '\r') x.pop_back();
      f.push_back(x);
    }
    return f;
  };
  const auto header = split(line);
  const auto si = std::find(header.begin(), header.end(), "score") - header.begin();
  const auto li = std::find(header.begin(), header.end(), "label") - header.begin();
  if (si == static_cast<long>(header.size()) || li == static_cast<long>(header.size())) {
    throw InvalidInput(path.string() + ": header needs 'score' and 'label' columns");
  }
  std::vector<ScoredSample> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line);
    if (f.size() != header.size()) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": wrong field count");
    }
    ScoredSample smp;
    try {
      size_t used = 0;
      smp.score = std::stod(f[si], &used);
      if (used != f[si].size()) throw std::invalid_argument("score");
    } catch (const std::exception&) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": bad score");
    }
    const std::string& lab = f[li];
    if (lab == "1" || lab == "anomaly") {
      smp.label = 1;
    } else if (lab == "0" || lab == "normal") {
      smp.label = 0;
    } else {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": bad label '" + lab + "'");
    }
    out.push_back(smp);
  }
  return out;
}

void CmdEval(Command& c, std::ostream& out) {
  const Settings& s = c.settings;
  if (!s.Has("scores")) throw InvalidInput("--scores is required");
  std::vector<std::string> files;
  {
    std::stringstream ss(s.Str("scores"));
    std::string f;
    while (std::getline(ss, f, ',')) {
      if (!f.empty()) files.push_back(f);
    }
  }
  if (s.Has("runs") && s.Int("runs") != static_cast<int64_t>(files.size())) {
    throw InvalidInput("--runs " + s.Str("runs") + " but " + std::to_string(files.size()) +
                       " score file(s) given");
  }
  ojson runs = ojson::array();
  std::vector<std::map<std::string, double>> reports;
  for (const auto& f : files) {
    const auto samples = ReadScoresCsv(f);
    const MetricReport r = Evaluate(samples);
    runs.push_back(ojson::parse(r.ToJson()));
    reports.push_back({{"auroc", r.auroc}, {"aupr", r.aupr},
                       {"aupr_trapezoid", r.aupr_trapezoid}, {"max_f1", r.max_f1}});
    if (s.Bool("curve") && s.Has("out")) {
      const fs::path dir = OutDir(s);
      std::ofstream os(dir / (fs::path(f).stem().string() + "_curve.csv"));
      WriteCurveCsv(Sweep(samples), os);
    }
  }
  const AggregateReport agg = FiveRunAverage(reports);
  ojson j = Header("eval", s);
  j["runs"] = runs;
  j["aggregate"] = {{"runs", agg.runs}, {"mean", agg.mean}, {"stddev", agg.stddev}};
  if (s.Has("out")) WriteJson(OutDir(s) / "metrics.json", j);
  out << j.dump(2) << '\n';
}

void CmdToyMetrics(Command& c, std::ostream& out) {
  const Settings& s = c.settings;
  const MetricReport a = Evaluate(ToyModelA());
  const MetricReport b = Evaluate(ToyModelB());
  if (s.Bool("json")) {
    ojson j;
    j["toy_model_a"] = ojson::parse(a.ToJson());
    j["toy_model_b"] = ojson::parse(b.ToJson());
    out << j.dump(2) << '\n';
    return;
  }
  out << std::left << std::setw(8) << "model" << std::right << std::setw(10) << "AU-ROC"
      << std::setw(10) << "AP" << std::setw(12) << "AU-PR(trap)" << std::setw(10)
      << "max-F1" << '\n';
  for (const auto& [name, r] : {std::pair{"A", a}, std::pair{"B", b}}) {
    out << std::left << std::setw(8) << name << std::right << std::fixed
        << std::setprecision(4) << std::setw(10) << r.auroc << std::setw(10) << r.aupr
        << std::setw(12) << r.aupr_trapezoid << std::setw(10) << r.max_f1 << '\n';
  }
}

void CmdGenCorpus(Command& c, std::ostream& out) {
  const Settings& s = c.settings;
  SyntheticCorpusConfig sc;
  sc.seed = s.RequiredSeed();
  sc.image_count = static_cast<int>(s.Int("count"));
  sc.size = static_cast<int>(s.Int("size"));
  sc.anomaly_fraction = s.Double("anomaly_fraction");
  sc.texture = ParseTexture(s.Str("texture"));
  sc.object = s.Str("object");
  sc.min_defect = static_cast<int>(s.Int("min_defect"));
  sc.max_defect = static_cast<int>(s.Int("max_defect"));
  sc.Validate();
  const fs::path dir = OutDir(s);
  const SyntheticCorpus corpus = GenerateSyntheticCorpus(sc);
  WriteSyntheticCorpus(corpus, dir);
  {
    std::ofstream os(dir / "manifest.csv", std::ios::binary);
    WriteManifestCsv(corpus.manifest, os);
  }
  ojson meta = Header("gen-corpus", s);
  meta["images"] = sc.image_count;
  meta["anomalies"] = sc.AnomalyCount();
  WriteJson(dir / "corpus.json", meta);
  out << "wrote " << sc.image_count << " images (" << sc.AnomalyCount()
      << " anomalous) under " << dir.string() << '\n';
}

// ---------------------------------------------------------------------------
// Wiring

struct Spec {
  std::string name;
  std::string help;
  std::vector<std::pair<std::string, std::string>> defaults;  // key, value
  std::vector<std::string> bools;
  std::function<void(Command&, std::ostream&)> run;
};

const std::map<std::string, std::string>& HelpText() {
  static const std::map<std::string, std::string> h = {
      {"seed", "random seed (required for stochastic commands)"},
      {"config", "flat key=value config file"},
      {"out", "output directory"},
      {"eta", "SPD loss weight"},
      {"tau", "InfoNCE temperature"},
      {"k", "samples per class for k-shot"},
      {"runs", "number of runs"},
      {"protocol", "one-class | high-shot | k-shot"},
      {"mode", "simclr | simsiam | supervised"},
      {"manifest", "manifest CSV"},
      {"data", "dataset root <root>/<object>/{normal,anomaly,masks}"},
      {"object", "restrict to one object"},
      {"checkpoint", ".spdckpt file"},
      {"model", ".padim file"},
      {"scores", "comma-separated scores CSV files (one per run)"},
      {"local", "smoothblend | cutpaste"},
      {"texture", "stripes | checker | blobs | mixed"},
  };
  return h;
}

std::vector<Spec> Specs() {
  const std::pair<std::string, std::string> seed{"seed", ""}, config{"config", ""},
      out{"out", ""}, manifest{"manifest", ""}, data{"data", ""}, object{"object", ""};
  return {
      {"split", "write protocol splits as CSV",
       {seed, config, out, manifest, data, object, {"protocol", "one-class"}, {"k", "5"},
        {"runs", "1"}, {"pool_seed", std::to_string(kDefaultPoolSeed)}},
       {}, CmdSplit},
      {"augment-preview", "write anchor/positive/negative/mask for each input image",
       {seed, config, out, {"input", ""}, {"size", "64"}, {"local", "smoothblend"},
        {"mask_sigma", "8"}},
       {}, CmdAugmentPreview},
      {"pretrain", "contrastive pre-training with optional SPD",
       {seed, config, out, manifest, data, object, {"synthetic_count", ""},
        {"texture", "mixed"}, {"mode", "simclr"}, {"eta", "0.1"}, {"tau", "0.2"},
        {"steps", "500"}, {"batch", "16"}, {"lr", "0.03"}, {"momentum", "0.9"},
        {"precision", "f32"}, {"size", "64"}, {"local", "smoothblend"}, {"mask_sigma", "8"},
        {"spd_cosine", "false"}},
       {"spd_cosine"}, CmdPretrain},
      {"padim-fit", "fit the patch Gaussian model on normal images",
       {seed, config, out, manifest, data, object, {"checkpoint", ""}, {"split_csv", ""}, {"run", "0"},
        {"epsilon", "0.01"}, {"max_dim", "100"}},
       {}, CmdPadimFit},
      {"padim-score", "score images with a fitted patch Gaussian model",
       {config, out, manifest, data, object, {"checkpoint", ""}, {"model", ""},
        {"smooth_sigma", "4"}, {"save_maps", "false"}},
       {"save_maps"}, CmdPadimScore},
      {"eval", "metrics JSON from scores CSV files",
       {config, out, {"scores", ""}, {"runs", ""}, {"curve", "false"}},
       {"curve"}, CmdEval},
      {"toy-metrics", "print the toy model metric table",
       {config, {"json", "false"}}, {"json"}, CmdToyMetrics},
      {"gen-corpus", "write a synthetic textured corpus with defects",
       {seed, config, out, {"count", "200"}, {"size", "64"}, {"anomaly_fraction", "0.25"},
        {"texture", "stripes"}, {"object", "synthetic"}, {"min_defect", "6"},
        {"max_defect", "14"}},
       {}, CmdGenCorpus},
  };
}

}  // namespace

Image LoadRgb(const fs::path& path, int size) {
  Image img = ReadPnm(path);
  if (img.channels() == 1) {
    Image rgb(img.height(), img.width(), 3);
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
    img = std::move(rgb);
  }
  if (size > 0 && (img.height() != size || img.width() != size)) {
    img = ResizeBilinear(img, size, size);
  }
  return img;
}

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"contrastive pre-training with local perturbations and patch-Gaussian anomaly scoring", kTool};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  std::vector<std::unique_ptr<Command>> commands;
  CLI::App* padim = app.add_subcommand("padim", "patch Gaussian anomaly scorer");
  padim->require_subcommand(1);
  for (auto& spec : Specs()) {
    auto cmd = std::make_unique<Command>();
    if (spec.name.rfind("padim-", 0) == 0) {
      cmd->app = padim->add_subcommand(spec.name.substr(6), spec.help);
    } else {
      cmd->app = app.add_subcommand(spec.name, spec.help);
    }
    for (const auto& [k, v] : spec.defaults) cmd->settings.Default(k, v);
    cmd->bool_keys = spec.bools;
    cmd->run = spec.run;
    Bind(*cmd, HelpText());
    commands.push_back(std::move(cmd));
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  for (auto& cmd : commands) {
    if (!cmd->app->parsed()) continue;
    try {
      Resolve(*cmd);
      cmd->run(*cmd, out);
      return kExitOk;
    } catch (const InvalidInput& e) {
      err << kTool << ": error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      err << kTool << ": failed: " << e.what() << '\n';
      return kExitRuntime;
    }
  }
  err << kTool << ": no command given\n";
  return kExitUsage;
}

}  // namespace spotdiff
