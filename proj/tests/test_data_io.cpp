/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <set>

#include "dmasum/checkpoint.hpp"
#include "dmasum/dataset.hpp"
#include "dmasum/errors.hpp"
#include "oracles.hpp"

using namespace dmasum;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

UserAnnotations small_annotations(std::size_t users, std::size_t t, SeededRng& rng) {
  UserAnnotations a;
  a.scores = Matrix(users, t);
  for (double& v : a.scores.data()) v = rng.uniform();
  a.summaries.assign(users, std::vector<std::uint8_t>(t, 0));
  a.summaries[0][0] = 1;
  a.mean.assign(t, 0.5);
  return a;
}

fs::path write_one_video_dataset(const fs::path& dir, std::size_t t, std::size_t d) {
  SeededRng rng(1);
  Matrix f(t, d);
  for (double& v : f.data()) v = rng.normal();
  const UserAnnotations a = small_annotations(2, t, rng);
  write_features("clip", f, a.mean, a, dir);
  DatasetManifest m;
  m.name = "tiny";
  m.videos.push_back({"clip", t, d, 1.0, "clip.feat", "clip.anno", 2});
  write_text_synced(dir / "manifest.json", manifest_to_json(m).dump());
  return dir / "manifest.json";
}

Dataset fake_dataset(const std::string& name, std::size_t n) {
  Dataset ds;
  ds.manifest.name = name;
  for (std::size_t i = 0; i < n; ++i) {
    Video v;
    v.id = name + "_" + std::to_string(i);
    ds.videos.push_back(v);
  }
  return ds;
}

}  // namespace

TEST(FeatureFormat, FileLengthFollowsHeaderArithmetic) {
  const fs::path dir = oracle::scratch_dir("len");
  SeededRng rng(2);
  const Matrix f(4, 3, 0.25);
  const UserAnnotations a = small_annotations(2, 4, rng);
  const WrittenVideo w = write_features("v", f, a.mean, a, dir);
  EXPECT_EQ(fs::file_size(w.features), 24u + 4 * 3 * 8);
  EXPECT_EQ(fs::file_size(w.annotations), 16u + 2 * 4 * 8 + 4 * 8 + 2 * 4);
  const auto bytes = read_bytes(w.features);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "VSUMFEAT");
  EXPECT_EQ(bytes[8], 4);
  EXPECT_EQ(bytes[12], 3);
}

TEST(FeatureFormat, ScoresOutsideUnitIntervalRejectedBeforeWrite) {
  const fs::path dir = oracle::scratch_dir("reject");
  SeededRng rng(3);
  const UserAnnotations a = small_annotations(1, 3, rng);
  const std::vector<double> bad = {0.1, 1.2, 0.3};
  EXPECT_THROW(write_features("v", Matrix(3, 2), bad, a, dir), InputError);
  EXPECT_FALSE(fs::exists(dir / "v.feat"));
}

TEST(FeatureFormat, RoundTripIsBitExact) {
  const fs::path dir = oracle::scratch_dir("roundtrip");
  SeededRng rng(4);
  Matrix f(5, 3);
  for (double& v : f.data()) v = rng.normal() * 1e-300;
  const UserAnnotations a = small_annotations(3, 5, rng);
  const WrittenVideo w = write_features("v", f, a.mean, a, dir);
  EXPECT_EQ(read_features(w.features, "v"), f);
  const UserAnnotations back = read_annotations(w.annotations, "v");
  EXPECT_EQ(back.scores, a.scores);
  EXPECT_EQ(back.summaries, a.summaries);
  EXPECT_EQ(back.mean, a.mean);
}

TEST(LoadDataset, DeclaredShapeMismatchIsLoadError) {
  const fs::path dir = oracle::scratch_dir("mismatch");
  write_one_video_dataset(dir, 99, 2);
  DatasetManifest m;
  m.name = "tiny";
  m.videos.push_back({"clip", 100, 2, 1.0, "clip.feat", "clip.anno", 2});
  write_text_synced(dir / "manifest.json", manifest_to_json(m).dump());
  try {
    load_dataset(dir / "manifest.json");
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("clip"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(LoadDataset, CorruptedMagicIsLoadError) {
  const fs::path dir = oracle::scratch_dir("magic");
  const fs::path manifest = write_one_video_dataset(dir, 6, 2);
  auto bytes = read_bytes(dir / "clip.feat");
  bytes[0] = 'X';
  write_bytes(dir / "clip.feat", bytes);
  EXPECT_THROW(load_dataset(manifest), LoadError);
}

TEST(LoadDataset, NanInFeaturesIsLoadErrorWithOffset) {
  const fs::path dir = oracle::scratch_dir("nan");
  const fs::path manifest = write_one_video_dataset(dir, 6, 2);
  Matrix f = read_features(dir / "clip.feat", "clip");
  f(2, 1) = std::nan("");
  write_bytes(dir / "clip.feat", encode_features(f));
  try {
    load_dataset(manifest);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("offset " + std::to_string(24 + (2 * 2 + 1) * 8)),
              std::string::npos)
        << e.what();
  }
}

TEST(LoadDataset, TruncationAndChecksum) {
  const fs::path dir = oracle::scratch_dir("trunc");
  const fs::path manifest = write_one_video_dataset(dir, 6, 2);
  auto bytes = read_bytes(dir / "clip.feat");
  auto flipped = bytes;
  flipped[30] ^= 0x01;
  write_bytes(dir / "clip.feat", flipped);
  EXPECT_THROW(load_dataset(manifest), LoadError);
  bytes.pop_back();
  write_bytes(dir / "clip.feat", bytes);
  EXPECT_THROW(load_dataset(manifest), LoadError);
}

TEST(LoadDataset, ManifestRoundTrip) {
  const fs::path dir = oracle::scratch_dir("manifest");
  const fs::path manifest = write_one_video_dataset(dir, 8, 3);
  const Dataset ds = load_dataset(manifest);
  ASSERT_EQ(ds.videos.size(), 1u);
  EXPECT_EQ(ds.videos[0].features.rows(), 8u);
  EXPECT_EQ(ds.find("clip").annotations.annotators(), 2u);
  EXPECT_THROW(ds.find("nope"), InputError);
}

TEST(Synth, SameSeedByteIdentical) {
  SynthOptions o;
  o.seed = 7;
  const fs::path a = oracle::scratch_dir("synth_a"), b = oracle::scratch_dir("synth_b");
  synth_dataset(o, a);
  synth_dataset(o, b);
  for (const auto& entry : fs::directory_iterator(a)) {
    EXPECT_EQ(read_bytes(entry.path()), read_bytes(b / entry.path().filename())) << entry.path();
  }
}

TEST(Synth, ScoresInUnitIntervalAndCounts) {
  SynthOptions o;
  o.videos = 3;
  o.annotators = 25;
  const fs::path dir = oracle::scratch_dir("synth_u25");
  const Dataset ds = load_dataset(synth_dataset(o, dir));
  ASSERT_EQ(ds.videos.size(), 3u);
  for (const auto& v : ds.videos) {
    EXPECT_EQ(v.annotations.annotators(), 25u);
    EXPECT_GE(v.features.rows(), o.min_frames);
    EXPECT_LE(v.features.rows(), o.max_frames);
    for (double s : v.annotations.scores.data()) EXPECT_TRUE(s >= 0.0 && s <= 1.0);
    for (double s : v.target()) EXPECT_TRUE(s >= 0.0 && s <= 1.0);
  }
}

TEST(Synth, BinaryLabelsAreZeroOne) {
  SynthOptions o;
  o.videos = 2;
  o.label_style = LabelStyle::kBinary;
  const Dataset ds = load_dataset(synth_dataset(o, oracle::scratch_dir("synth_bin")));
  EXPECT_EQ(ds.manifest.label_style, LabelStyle::kBinary);
  for (double s : ds.videos[0].annotations.scores.data()) EXPECT_TRUE(s == 0.0 || s == 1.0);
}

TEST(Synth, ZeroAnnotatorsRejected) {
  SynthOptions o;
  o.annotators = 0;
  EXPECT_THROW(o.validate(), InputError);
}

TEST(KFold, TwentyFiveVideosFiveFolds) {
  const Dataset ds = fake_dataset("summe", 25);
  const FoldPlan plan = kfold_splits(ds, 5, 3);
  ASSERT_EQ(plan.folds.size(), 5u);
  std::set<std::string> all;
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.test.size(), 5u);
    EXPECT_EQ(f.train.size(), 20u);
    for (const auto& r : f.test) EXPECT_TRUE(all.insert(r.id).second);
  }
  EXPECT_EQ(all.size(), 25u);
  EXPECT_EQ(plan_to_json(plan), plan_to_json(kfold_splits(ds, 5, 3)));
  EXPECT_THROW(kfold_splits(ds, 26, 0), InputError);
}

TEST(KFold, PlanJsonRoundTrip) {
  const FoldPlan plan = kfold_splits(fake_dataset("x", 7), 3, 1);
  EXPECT_EQ(plan_to_json(plan_from_json(plan_to_json(plan))), plan_to_json(plan));
}

TEST(AssembleSetting, CanonicalAugmentedTransfer) {
  const Dataset target = fake_dataset("summe", 25);
  Dataset ovp = fake_dataset("ovp", 50);
  Dataset youtube = fake_dataset("youtube", 39);
  youtube.manifest.label_style = LabelStyle::kBinary;
  const std::vector<const Dataset*> aux = {&ovp, &youtube};

  const FoldPlan c = assemble_setting(target, {}, Setting::kCanonical, 5, 0);
  for (const auto& f : c.folds) EXPECT_EQ(f.train.size(), 20u);

  const FoldPlan a = assemble_setting(target, aux, Setting::kAugmented, 5, 0);
  for (const auto& f : a.folds) EXPECT_EQ(f.train.size(), 20u + 89u);
  EXPECT_EQ(a.binary_label_datasets, std::vector<std::string>{"youtube"});

  const FoldPlan t = assemble_setting(target, aux, Setting::kTransfer, 5, 0);
  ASSERT_EQ(t.folds.size(), 1u);
  EXPECT_EQ(t.folds[0].test.size(), 25u);
  EXPECT_EQ(t.folds[0].train.size(), 89u);

  EXPECT_THROW(assemble_setting(target, {}, Setting::kTransfer, 5, 0), InputError);
}

TEST(AssembleSetting, DisjointnessAsserted) {
  FoldPlan p;
  p.folds.push_back({{{"d", "a"}}, {{"d", "a"}}});
  EXPECT_THROW(p.check_disjoint(), StateError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelConfig cfg;
  cfg.feature_dim = 5;
  cfg.attention_width = 3;
  cfg.lstm_hidden = 2;
  cfg.head_hidden = 4;
  const DmaSumModel model(cfg, 8);
  const Checkpoint cp{cfg, model.parameters(), {{"seed", 8}}};
  const fs::path dir = oracle::scratch_dir("ckpt");
  save_checkpoint(dir / "m.bin", cp);
  const Checkpoint back = load_checkpoint(dir / "m.bin");
  EXPECT_EQ(back.config, cfg);
  EXPECT_EQ(back.params, model.parameters());
  EXPECT_EQ(back.echo, cp.echo);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(cp));
  const auto bytes = read_bytes(dir / "m.bin");
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "DMASUM01");
}

TEST(Checkpoint, CorruptionDetected) {
  ModelConfig cfg;
  cfg.feature_dim = 3;
  const DmaSumModel model(cfg, 1);
  auto bytes = encode_checkpoint({cfg, model.parameters(), {}});
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), LoadError);
  bytes.pop_back();
  EXPECT_THROW(decode_checkpoint(bytes), LoadError);
}
