/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dmasum/eval.hpp"
#include "dmasum/matrix.hpp"

namespace dmasum {

// Feature file: "VSUMFEAT", u32 T, u32 D, u32 reserved, u32 CRC-32 of the
// payload, then T*D little-endian doubles in row-major order.
inline constexpr std::string_view kFeatureMagic = "VSUMFEAT";
inline constexpr std::size_t kFeatureHeaderBytes = 24;
// Annotation file: "VSUMANNO", u32 U, u32 T, U*T doubles (per-annotator frame
// scores), T doubles (mean scores), U*T bytes (0/1 key-shot selections).
inline constexpr std::string_view kAnnotationMagic = "VSUMANNO";
inline constexpr std::size_t kAnnotationHeaderBytes = 16;

enum class LabelStyle { kContinuous, kBinary };

std::string_view label_style_name(LabelStyle style);
LabelStyle parse_label_style(std::string_view text);

struct VideoEntry {
  std::string id;
  std::size_t frames = 0;
  std::size_t dim = 0;
  double fps = 0.0;
  std::string features;     // relative to the manifest directory
  std::string annotations;  // relative to the manifest directory
  std::size_t annotators = 0;
};

struct DatasetManifest {
  std::string name;
  LabelStyle label_style = LabelStyle::kContinuous;
  // Max suits few-annotator sets of user summaries, mean suits many-annotator
  // score tracks.
  F1Aggregation aggregation = F1Aggregation::kMean;
  std::vector<VideoEntry> videos;
};

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& doc);

struct Video {
  std::string id;
  double fps = 0.0;
  Matrix features;  // T x D
  UserAnnotations annotations;

  const std::vector<double>& target() const { return annotations.mean; }
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Video> videos;

  const Video& find(const std::string& id) const;
};

// Loads and validates every video. Throws LoadError naming the video and the
// byte offset of the first problem; nothing is returned on failure.
Dataset load_dataset(const std::filesystem::path& manifest_path);

Matrix read_features(const std::filesystem::path& path, const std::string& video_id);
UserAnnotations read_annotations(const std::filesystem::path& path, const std::string& video_id);

std::vector<std::uint8_t> encode_features(const Matrix& features);
std::vector<std::uint8_t> encode_annotations(const UserAnnotations& annotations);

// Writes bytes and fsyncs before returning. Throws IoError naming the path.
void write_file_synced(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_synced(const std::filesystem::path& path, std::string_view text);

struct WrittenVideo {
  std::filesystem::path features;
  std::filesystem::path annotations;
};

// Writes <id>.feat and <id>.anno into out_dir. `scores` is stored as the mean
// score track; all scores must lie in [0, 1] and shapes must agree, otherwise
// InputError is thrown before anything is written.
WrittenVideo write_features(const std::string& video_id, const Matrix& features,
                            std::span<const double> scores, const UserAnnotations& annotations,
                            const std::filesystem::path& out_dir);

struct SynthOptions {
  std::string name = "synthetic";
  std::size_t videos = 6;
  std::size_t min_frames = 40;
  std::size_t max_frames = 80;
  std::size_t dim = 16;
  std::size_t annotators = 5;
  std::uint64_t seed = 0;
  double fps = 2.0;
  LabelStyle label_style = LabelStyle::kContinuous;
  F1Aggregation aggregation = F1Aggregation::kMean;

  void validate() const;
};

// Generates a corpus of piecewise-smooth feature tracks whose importance is a
// hidden function of the scene content, annotated by U noisy users. Returns
// the manifest path. Output bytes depend only on the options.
std::filesystem::path synth_dataset(const SynthOptions& options,
                                    const std::filesystem::path& out_dir);

enum class Setting { kCanonical, kAugmented, kTransfer };

std::string_view setting_name(Setting setting);
Setting parse_setting(std::string_view text);

struct VideoRef {
  std::string dataset;
  std::string id;

  std::string label() const { return dataset + "/" + id; }
  friend bool operator==(const VideoRef&, const VideoRef&) = default;
};

struct Fold {
  std::vector<VideoRef> train;
  std::vector<VideoRef> test;
};

struct FoldPlan {
  Setting setting = Setting::kCanonical;
  std::size_t k = 5;
  std::uint64_t seed = 0;
  std::string target;
  std::vector<std::string> auxiliary;
  std::vector<std::string> binary_label_datasets;
  std::vector<Fold> folds;

  // Throws StateError if any fold trains on one of its own test videos.
  void check_disjoint() const;
};

nlohmann::json plan_to_json(const FoldPlan& plan);
FoldPlan plan_from_json(const nlohmann::json& doc);

// Seeded shuffle of the video ids, then k contiguous test folds (sizes differ
// by at most one); each train list is the complement.
FoldPlan kfold_splits(const Dataset& dataset, std::size_t k, std::uint64_t seed);

// canonical: k-fold on the target only. augmented: k-fold on the target with
// every auxiliary video appended to each train list. transfer: one fold that
// trains on all auxiliary videos and tests on the whole target.
FoldPlan assemble_setting(const Dataset& target, const std::vector<const Dataset*>& auxiliary,
                          Setting setting, std::size_t k, std::uint64_t seed);

}  // namespace dmasum
