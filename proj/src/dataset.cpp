/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include "dmasum/dataset.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "dmasum/errors.hpp"
#include "dmasum/rng.hpp"

namespace dmasum {

namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

double get_f64(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_all(const fs::path& path, const std::string& video_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("video " + video_id + ": cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

[[noreturn]] void fail(const std::string& video_id, std::size_t offset, const std::string& what) {
  throw LoadError("video " + video_id + ": " + what + " at byte offset " + std::to_string(offset));
}

}  // namespace

std::string_view label_style_name(LabelStyle style) {
  return style == LabelStyle::kBinary ? "binary" : "continuous";
}

LabelStyle parse_label_style(std::string_view text) {
  if (text == "continuous") return LabelStyle::kContinuous;
  if (text == "binary") return LabelStyle::kBinary;
  throw InputError("unknown label style '" + std::string(text) + "'");
}

nlohmann::json manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::json doc;
  doc["name"] = manifest.name;
  doc["label_style"] = std::string(label_style_name(manifest.label_style));
  doc["f1_aggregation"] = std::string(aggregation_name(manifest.aggregation));
  doc["videos"] = nlohmann::json::array();
  for (const auto& v : manifest.videos) {
    doc["videos"].push_back({{"id", v.id},
                             {"T", v.frames},
                             {"D", v.dim},
                             {"fps", v.fps},
                             {"features", v.features},
                             {"annotations", v.annotations},
                             {"annotators", v.annotators}});
  }
  return doc;
}

DatasetManifest manifest_from_json(const nlohmann::json& doc) {
  DatasetManifest m;
  try {
    m.name = doc.at("name").get<std::string>();
    m.label_style = parse_label_style(doc.value("label_style", std::string("continuous")));
    m.aggregation = parse_aggregation(doc.value("f1_aggregation", std::string("mean")));
    std::set<std::string> seen;
    for (const auto& v : doc.at("videos")) {
      VideoEntry e;
      e.id = v.at("id").get<std::string>();
      e.frames = v.at("T").get<std::size_t>();
      e.dim = v.at("D").get<std::size_t>();
      e.fps = v.value("fps", 0.0);
      e.features = v.at("features").get<std::string>();
      e.annotations = v.at("annotations").get<std::string>();
      e.annotators = v.at("annotators").get<std::size_t>();
      if (!seen.insert(e.id).second) throw LoadError("manifest: duplicate video id " + e.id);
      m.videos.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw LoadError(std::string("manifest: ") + ex.what());
  }
  return m;
}

const Video& Dataset::find(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return v;
  throw InputError("dataset " + manifest.name + ": no video " + id);
}

std::vector<std::uint8_t> encode_features(const Matrix& features) {
  std::vector<std::uint8_t> payload;
  payload.reserve(features.size() * 8);
  for (double v : features.data()) put_f64(payload, v);
  std::vector<std::uint8_t> out(kFeatureMagic.begin(), kFeatureMagic.end());
  out.reserve(kFeatureHeaderBytes + payload.size());
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  put_u32(out, 0);
  put_u32(out, crc32_of(payload.data(), payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::vector<std::uint8_t> encode_annotations(const UserAnnotations& annotations) {
  std::vector<std::uint8_t> out(kAnnotationMagic.begin(), kAnnotationMagic.end());
  put_u32(out, static_cast<std::uint32_t>(annotations.annotators()));
  put_u32(out, static_cast<std::uint32_t>(annotations.frames()));
  for (double v : annotations.scores.data()) put_f64(out, v);
  for (double v : annotations.mean) put_f64(out, v);
  for (const auto& s : annotations.summaries) out.insert(out.end(), s.begin(), s.end());
  return out;
}

Matrix read_features(const fs::path& path, const std::string& video_id) {
  const auto bytes = read_all(path, video_id);
  if (bytes.size() < kFeatureHeaderBytes) fail(video_id, bytes.size(), "truncated feature header");
  if (!std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bytes.begin())) {
    fail(video_id, 0, "bad feature magic");
  }
  const std::size_t rows = get_u32(bytes, 8);
  const std::size_t cols = get_u32(bytes, 12);
  const std::uint32_t crc = get_u32(bytes, 20);
  const std::size_t expected = kFeatureHeaderBytes + rows * cols * 8;
  if (bytes.size() != expected) {
    fail(video_id, std::min(bytes.size(), expected),
         "feature payload holds " + std::to_string(bytes.size()) + " bytes, header implies " +
             std::to_string(expected));
  }
  if (crc32_of(bytes.data() + kFeatureHeaderBytes, bytes.size() - kFeatureHeaderBytes) != crc) {
    fail(video_id, 20, "feature checksum mismatch");
  }
  Matrix m(rows, cols);
  auto data = m.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t offset = kFeatureHeaderBytes + i * 8;
    data[i] = get_f64(bytes, offset);
    if (!std::isfinite(data[i])) fail(video_id, offset, "non-finite feature value");
  }
  return m;
}

UserAnnotations read_annotations(const fs::path& path, const std::string& video_id) {
  const auto bytes = read_all(path, video_id);
  if (bytes.size() < kAnnotationHeaderBytes) fail(video_id, bytes.size(), "truncated annotation header");
  if (!std::equal(kAnnotationMagic.begin(), kAnnotationMagic.end(), bytes.begin())) {
    fail(video_id, 0, "bad annotation magic");
  }
  const std::size_t users = get_u32(bytes, 8);
  const std::size_t frames = get_u32(bytes, 12);
  const std::size_t expected = kAnnotationHeaderBytes + users * frames * 8 + frames * 8 + users * frames;
  if (bytes.size() != expected) {
    fail(video_id, std::min(bytes.size(), expected),
         "annotation file holds " + std::to_string(bytes.size()) + " bytes, header implies " +
             std::to_string(expected));
  }
  UserAnnotations a;
  a.scores = Matrix(users, frames);
  std::size_t offset = kAnnotationHeaderBytes;
  for (double& v : a.scores.data()) {
    v = get_f64(bytes, offset);
    if (!(v >= 0.0 && v <= 1.0)) fail(video_id, offset, "annotator score outside [0, 1]");
    offset += 8;
  }
  a.mean.resize(frames);
  for (double& v : a.mean) {
    v = get_f64(bytes, offset);
    if (!(v >= 0.0 && v <= 1.0)) fail(video_id, offset, "mean score outside [0, 1]");
    offset += 8;
  }
  a.summaries.assign(users, std::vector<std::uint8_t>(frames));
  for (auto& s : a.summaries) {
    for (auto& b : s) {
      b = bytes[offset];
      if (b > 1) fail(video_id, offset, "key-shot flag is not 0/1");
      ++offset;
    }
  }
  return a;
}

Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("cannot open manifest " + manifest_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw LoadError("manifest " + manifest_path.string() + ": " + ex.what());
  }
  Dataset ds;
  ds.manifest = manifest_from_json(doc);
  const fs::path base = manifest_path.parent_path();
  for (const auto& entry : ds.manifest.videos) {
    Video v;
    v.id = entry.id;
    v.fps = entry.fps;
    v.features = read_features(base / entry.features, entry.id);
    if (v.features.rows() != entry.frames || v.features.cols() != entry.dim) {
      throw LoadError("video " + entry.id + ": manifest declares " + std::to_string(entry.frames) +
                      "x" + std::to_string(entry.dim) + " but the feature file holds " +
                      v.features.shape_string() + " (header at byte offset 8)");
    }
    v.annotations = read_annotations(base / entry.annotations, entry.id);
    if (v.annotations.frames() != entry.frames || v.annotations.annotators() != entry.annotators) {
      throw LoadError("video " + entry.id + ": annotation header declares U=" +
                      std::to_string(v.annotations.annotators()) + " T=" +
                      std::to_string(v.annotations.frames()) +
                      ", manifest expects U=" + std::to_string(entry.annotators) +
                      " T=" + std::to_string(entry.frames) + " (header at byte offset 8)");
    }
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

void write_file_synced(const fs::path& path, std::span<const std::uint8_t> bytes) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + written, bytes.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string reason = std::strerror(errno);
      ::close(fd);
      throw IoError("write to " + path.string() + " failed: " + reason);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const std::string reason = std::strerror(errno);
    ::close(fd);
    throw IoError("fsync of " + path.string() + " failed: " + reason);
  }
  if (::close(fd) != 0) throw IoError("close of " + path.string() + " failed");
}

void write_text_synced(const fs::path& path, std::string_view text) {
  write_file_synced(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

WrittenVideo write_features(const std::string& video_id, const Matrix& features,
                            std::span<const double> scores, const UserAnnotations& annotations,
                            const fs::path& out_dir) {
  if (video_id.empty() || video_id.find('/') != std::string::npos) {
    throw InputError("write_features: invalid video id '" + video_id + "'");
  }
  require_finite(features, "write_features");
  if (scores.size() != features.rows()) {
    throw InputError("write_features: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(features.rows()) + " frames");
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw InputError("write_features: scores must lie in [0, 1]");
  }
  UserAnnotations stored = annotations;
  stored.mean.assign(scores.begin(), scores.end());
  if (stored.frames() != features.rows()) {
    throw InputError("write_features: annotations cover " + std::to_string(stored.frames()) +
                     " frames, features " + std::to_string(features.rows()));
  }
  stored.validate();

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  WrittenVideo out{out_dir / (video_id + ".feat"), out_dir / (video_id + ".anno")};
  write_file_synced(out.features, encode_features(features));
  write_file_synced(out.annotations, encode_annotations(stored));
  return out;
}

void SynthOptions::validate() const {
  if (videos == 0) throw InputError("synth: --videos must be positive");
  if (annotators == 0) throw InputError("synth: --u must be positive");
  if (dim == 0) throw InputError("synth: --d must be positive");
  if (min_frames < 2 || max_frames < min_frames) {
    throw InputError("synth: frame range must satisfy 2 <= min <= max");
  }
}

fs::path synth_dataset(const SynthOptions& options, const fs::path& out_dir) {
  options.validate();
  SeededRng rng(options.seed);
  const std::size_t dim = options.dim;

  // Hidden direction that maps scene content to importance.
  std::vector<double> direction(dim);
  for (double& v : direction) v = rng.normal();

  DatasetManifest manifest;
  manifest.name = options.name;
  manifest.label_style = options.label_style;
  manifest.aggregation = options.aggregation;
  for (std::size_t vid = 0; vid < options.videos; ++vid) {
    const std::string id = "video_" + std::to_string(vid + 1);
    const std::size_t frames =
        options.min_frames + rng.below(options.max_frames - options.min_frames + 1);

    // Scene boundaries: lengths 4..16 frames.
    std::vector<std::size_t> bounds{0};
    while (bounds.back() < frames) {
      std::size_t next = bounds.back() + 4 + rng.below(13);
      if (frames - std::min(next, frames) < 4) next = frames;
      bounds.push_back(std::min(next, frames));
    }
    const SegmentList scenes(bounds);

    Matrix features(frames, dim);
    std::vector<double> latent(frames);
    for (std::size_t s = 0; s < scenes.count(); ++s) {
      std::vector<double> base(dim), drift(dim);
      for (double& v : base) v = rng.normal();
      for (double& v : drift) v = rng.normal(0.0, 0.05);
      double proj = 0.0;
      for (std::size_t d = 0; d < dim; ++d) proj += base[d] * direction[d];
      const double importance = 1.0 / (1.0 + std::exp(-2.0 * proj / std::sqrt(double(dim))));
      for (std::size_t t = scenes.begin(s); t < scenes.end(s); ++t) {
        const double step = static_cast<double>(t - scenes.begin(s));
        for (std::size_t d = 0; d < dim; ++d) {
          features(t, d) = base[d] + step * drift[d] + rng.normal(0.0, 0.1);
        }
        latent[t] = importance;
      }
    }

    UserAnnotations ann;
    ann.scores = Matrix(options.annotators, frames);
    ann.summaries.assign(options.annotators, std::vector<std::uint8_t>(frames, 0));
    for (std::size_t u = 0; u < options.annotators; ++u) {
      std::vector<double> scene_bias(scenes.count());
      for (double& b : scene_bias) b = rng.normal(0.0, 0.1);
      auto row = ann.scores.row(u);
      for (std::size_t t = 0; t < frames; ++t) {
        const double noisy = latent[t] + scene_bias[scenes.segment_of(t)] + rng.normal(0.0, 0.03);
        row[t] = std::clamp(noisy, 0.0, 1.0);
      }
      ann.summaries[u] = knapsack_select(row, scenes, kDefaultBudget).selected;
      if (options.label_style == LabelStyle::kBinary) {
        for (std::size_t t = 0; t < frames; ++t) row[t] = ann.summaries[u][t];
      }
    }
    std::vector<double> mean(frames, 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t u = 0; u < options.annotators; ++u) mean[t] += ann.scores(u, t);
      mean[t] = std::clamp(mean[t] / static_cast<double>(options.annotators), 0.0, 1.0);
    }
    ann.mean = mean;

    const WrittenVideo files = write_features(id, features, mean, ann, out_dir);
    VideoEntry entry;
    entry.id = id;
    entry.frames = frames;
    entry.dim = dim;
    entry.fps = options.fps;
    entry.features = files.features.filename().string();
    entry.annotations = files.annotations.filename().string();
    entry.annotators = options.annotators;
    manifest.videos.push_back(std::move(entry));
  }
  const fs::path manifest_path = out_dir / "manifest.json";
  write_text_synced(manifest_path, manifest_to_json(manifest).dump(2) + "\n");
  return manifest_path;
}

std::string_view setting_name(Setting setting) {
  switch (setting) {
    case Setting::kCanonical: return "canonical";
    case Setting::kAugmented: return "augmented";
    case Setting::kTransfer: return "transfer";
  }
  return "canonical";
}

Setting parse_setting(std::string_view text) {
  if (text == "canonical") return Setting::kCanonical;
  if (text == "augmented") return Setting::kAugmented;
  if (text == "transfer") return Setting::kTransfer;
  throw InputError("unknown setting '" + std::string(text) + "'");
}

void FoldPlan::check_disjoint() const {
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (const auto& t : folds[f].test) {
      if (std::find(folds[f].train.begin(), folds[f].train.end(), t) != folds[f].train.end()) {
        throw StateError("fold " + std::to_string(f) + " trains on its test video " + t.label());
      }
    }
  }
}

nlohmann::json plan_to_json(const FoldPlan& plan) {
  auto refs = [](const std::vector<VideoRef>& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : list) arr.push_back({{"dataset", r.dataset}, {"id", r.id}});
    return arr;
  };
  nlohmann::json doc;
  doc["setting"] = std::string(setting_name(plan.setting));
  doc["k"] = plan.k;
  doc["seed"] = plan.seed;
  doc["target"] = plan.target;
  doc["auxiliary"] = plan.auxiliary;
  doc["binary_label_datasets"] = plan.binary_label_datasets;
  doc["folds"] = nlohmann::json::array();
  for (const auto& f : plan.folds) doc["folds"].push_back({{"train", refs(f.train)}, {"test", refs(f.test)}});
  return doc;
}

FoldPlan plan_from_json(const nlohmann::json& doc) {
  auto refs = [](const nlohmann::json& arr) {
    std::vector<VideoRef> out;
    for (const auto& r : arr) out.push_back({r.at("dataset").get<std::string>(), r.at("id").get<std::string>()});
    return out;
  };
  FoldPlan plan;
  try {
    plan.setting = parse_setting(doc.at("setting").get<std::string>());
    plan.k = doc.at("k").get<std::size_t>();
    plan.seed = doc.at("seed").get<std::uint64_t>();
    plan.target = doc.at("target").get<std::string>();
    plan.auxiliary = doc.at("auxiliary").get<std::vector<std::string>>();
    plan.binary_label_datasets = doc.at("binary_label_datasets").get<std::vector<std::string>>();
    for (const auto& f : doc.at("folds")) plan.folds.push_back({refs(f.at("train")), refs(f.at("test"))});
  } catch (const nlohmann::json::exception& ex) {
    throw LoadError(std::string("fold plan: ") + ex.what());
  }
  return plan;
}

FoldPlan kfold_splits(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
  const std::size_t n = dataset.videos.size();
  if (k == 0 || k > n) {
    throw InputError("kfold_splits: k=" + std::to_string(k) + " must be in [1, " +
                     std::to_string(n) + "]");
  }
  std::vector<std::string> ids;
  for (const auto& v : dataset.videos) ids.push_back(v.id);
  SeededRng rng(seed);
  rng.shuffle(ids);

  FoldPlan plan;
  plan.setting = Setting::kCanonical;
  plan.k = k;
  plan.seed = seed;
  plan.target = dataset.manifest.name;
  if (dataset.manifest.label_style == LabelStyle::kBinary) {
    plan.binary_label_datasets.push_back(dataset.manifest.name);
  }
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    Fold fold;
    for (std::size_t i = 0; i < n; ++i) {
      VideoRef ref{dataset.manifest.name, ids[i]};
      if (i >= start && i < start + size) {
        fold.test.push_back(std::move(ref));
      } else {
        fold.train.push_back(std::move(ref));
      }
    }
    plan.folds.push_back(std::move(fold));
    start += size;
  }
  plan.check_disjoint();
  return plan;
}

FoldPlan assemble_setting(const Dataset& target, const std::vector<const Dataset*>& auxiliary,
                          Setting setting, std::size_t k, std::uint64_t seed) {
  std::set<std::string> names{target.manifest.name};
  for (const Dataset* aux : auxiliary) {
    if (!names.insert(aux->manifest.name).second) {
      throw InputError("assemble_setting: duplicate dataset name " + aux->manifest.name);
    }
  }
  if (setting != Setting::kCanonical && auxiliary.empty()) {
    throw InputError(std::string("assemble_setting: ") + std::string(setting_name(setting)) +
                     " setting needs at least one auxiliary dataset");
  }

  FoldPlan plan;
  if (setting == Setting::kTransfer) {
    plan.k = 1;
    plan.seed = seed;
    plan.target = target.manifest.name;
    Fold fold;
    for (const auto& v : target.videos) fold.test.push_back({target.manifest.name, v.id});
    plan.folds.push_back(std::move(fold));
    if (target.manifest.label_style == LabelStyle::kBinary) {
      plan.binary_label_datasets.push_back(target.manifest.name);
    }
  } else {
    plan = kfold_splits(target, k, seed);
  }
  plan.setting = setting;
  if (setting != Setting::kCanonical) {
    for (const Dataset* aux : auxiliary) {
      plan.auxiliary.push_back(aux->manifest.name);
      if (aux->manifest.label_style == LabelStyle::kBinary) {
        plan.binary_label_datasets.push_back(aux->manifest.name);
      }
      for (auto& fold : plan.folds) {
        for (const auto& v : aux->videos) fold.train.push_back({aux->manifest.name, v.id});
      }
    }
  }
  plan.check_disjoint();
  return plan;
}

}  // namespace dmasum
