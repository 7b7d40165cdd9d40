/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "cli_harness.hpp"
#include "dmasum/dataset.hpp"
#include "dmasum/eval.hpp"
#include "dmasum/experiment.hpp"
#include "oracles.hpp"

using harness::read_json;
using harness::run;
using harness::slurp;
namespace fs = std::filesystem;

namespace {

// Trained once and shared by the read-only tests below.
harness::Workspace& trained() {
  static harness::Workspace ws = [] {
    harness::Workspace w("shared");
    const auto r = run("train " + w.common("run"));
    if (r.exit_code != 0) throw std::runtime_error(r.output);
    return w;
  }();
  return ws;
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!s.empty() && s.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

TEST(CliSynth, WritesManifestWithRequestedVideos) {
  const fs::path dir = oracle::scratch_dir("cli_synth");
  const auto r = run("synth --out \"" + (dir / "a").string() + "\" --videos 6 --t 40:80 --d 16 --u 5 --seed 7");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto manifest = read_json(dir / "a" / "manifest.json");
  EXPECT_EQ(manifest["videos"].size(), 6u);
  EXPECT_NO_THROW(dmasum::load_dataset(dir / "a" / "manifest.json"));
}

TEST(CliSynth, RerunIsByteIdentical) {
  const fs::path dir = oracle::scratch_dir("cli_synth_rerun");
  for (const char* sub : {"a", "b"}) {
    ASSERT_EQ(run("synth --out \"" + (dir / sub).string() + "\" --videos 3 --seed 7").exit_code, 0);
  }
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / e.path().filename()));
  }
}

TEST(CliSynth, ZeroAnnotatorsExitsTwoWithMessage) {
  const auto r = run("synth --out /tmp/dmasum_never --u 0");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("--u"), std::string::npos);
}

TEST(CliErrors, BadFlagsAndConfigExitTwo) {
  EXPECT_EQ(run("train --out /tmp/x --bogus").exit_code, 2);
  EXPECT_EQ(run("frobnicate").exit_code, 2);
  EXPECT_EQ(run("train --out /tmp/x").exit_code, 2);  // no dataset
  const fs::path dir = oracle::scratch_dir("cli_badcfg");
  std::ofstream(dir / "c.json") << R"({"dataset": "x", "learning_rate": 1})";
  EXPECT_EQ(run("train --config \"" + (dir / "c.json").string() + "\" --out /tmp/x").exit_code, 2);
  EXPECT_EQ(run("train --out /tmp/x --dataset /nonexistent/manifest.json").exit_code, 2);
  EXPECT_EQ(run("train --out /tmp/x --dataset a --channel audio").exit_code, 2);
}

TEST(CliErrors, DivergentTrainingExitsThreeWithContext) {
  harness::Workspace ws("diverge", 2, 1);
  const auto r = run("train " + ws.common("run") + " --alpha 1e300 --beta 1e300");
  EXPECT_EQ(r.exit_code, 3) << r.output;
  EXPECT_NE(r.output.find("fold"), std::string::npos) << r.output;
}

TEST(CliTrain, OneLogLinePerEpochAndTask) {
  auto& ws = trained();
  const auto plan = read_json(ws.dir("run") / "plan.json");
  for (std::size_t f = 0; f < plan["folds"].size(); ++f) {
    const std::string log = slurp(ws.dir("run") / ("fold_" + std::to_string(f)) / "train_log.csv");
    const auto lines = data_lines(log);
    EXPECT_EQ(lines.front(), "epoch,task_id,inner_final_loss,meta_param_delta_l2");
    EXPECT_EQ(lines.size() - 1, 2 * plan["folds"][f]["train"].size());
    EXPECT_EQ(log.rfind("# trainer=single-video-meta", 0), 0u);
    EXPECT_TRUE(fs::exists(ws.dir("run") / ("fold_" + std::to_string(f)) / "checkpoint.bin"));
  }
}

TEST(CliTrain, NoMetaRecordsPlainTrainer) {
  harness::Workspace ws("nometa", 2, 1);
  ASSERT_EQ(run("train " + ws.common("run") + " --no-meta").exit_code, 0);
  EXPECT_EQ(slurp(ws.dir("run") / "fold_0" / "train_log.csv").rfind("# trainer=plain", 0), 0u);
}

TEST(CliTrain, ThreadCapDoesNotChangeArtifacts) {
  harness::Workspace ws("threads", 3, 1);
  ASSERT_EQ(run("train " + ws.common("one"), "DMASUM_THREADS=1").exit_code, 0);
  ASSERT_EQ(run("train " + ws.common("three"), "DMASUM_THREADS=3").exit_code, 0);
  for (int f = 0; f < 3; ++f) {
    const std::string sub = "fold_" + std::to_string(f);
    EXPECT_EQ(slurp(ws.dir("one") / sub / "checkpoint.bin"), slurp(ws.dir("three") / sub / "checkpoint.bin"));
  }
  EXPECT_EQ(run("train " + ws.common("bad"), "DMASUM_THREADS=zero").exit_code, 2);
}

TEST(CliEval, ReportSchemaAndRanges) {
  auto& ws = trained();
  ASSERT_EQ(run("eval " + ws.common("run")).exit_code, 0);
  const auto report = read_json(ws.dir("run") / "report.json");
  for (const char* key : {"per_video", "aggregate", "config_echo", "variant", "f1_aggregation", "seed",
                          "f1_protocols", "curve"}) {
    EXPECT_TRUE(report.contains(key)) << key;
  }
  EXPECT_EQ(report["per_video"].size(), 6u);
  EXPECT_EQ(report["f1_protocols"]["two-peak"], "unsupported");
  for (const auto& [id, v] : report["per_video"].items()) {
    EXPECT_GE(v["f1"].get<double>(), 0.0);
    EXPECT_LE(v["f1"].get<double>(), 100.0);
    EXPECT_GE(v["tau"].get<double>(), -1.0);
    EXPECT_LE(v["tau"].get<double>(), 1.0);
    EXPECT_GE(v["rho"].get<double>(), -1.0);
    EXPECT_LE(v["rho"].get<double>(), 1.0);
  }
  EXPECT_EQ(report["config_echo"], read_json(ws.dir("run") / "run_config.json"));
  EXPECT_TRUE(fs::exists(ws.dir("run") / "curve.csv"));
  EXPECT_TRUE(fs::exists(ws.dir("run") / "curve.svg"));
}

TEST(CliEval, AggregateEqualsPerVideoRecomputation) {
  auto& ws = trained();
  ASSERT_EQ(run("eval " + ws.common("run")).exit_code, 0);
  const auto report = read_json(ws.dir("run") / "report.json");
  double f1 = 0, tau = 0, rho = 0;
  for (const auto& [id, v] : report["per_video"].items()) {
    f1 += v["f1"].get<double>();
    tau += v["tau"].get<double>();
    rho += v["rho"].get<double>();
  }
  const double n = static_cast<double>(report["per_video"].size());
  EXPECT_NEAR(report["aggregate"]["f1"].get<double>(), f1 / n, 1e-12);
  EXPECT_NEAR(report["aggregate"]["tau"].get<double>(), tau / n, 1e-12);
  EXPECT_NEAR(report["aggregate"]["rho"].get<double>(), rho / n, 1e-12);
}

TEST(CliEval, OracleInjectionSelfConsistency) {
  auto& ws = trained();
  ASSERT_EQ(run("eval " + ws.common("run") + " --oracle").exit_code, 0);
  const auto report = read_json(ws.dir("run") / "oracle_report.json");
  EXPECT_EQ(report["mode"], "oracle");
  const dmasum::Dataset ds = dmasum::load_dataset(ws.manifest);
  for (const auto& v : ds.videos) {
    const auto& entry = report["per_video"]["synthetic/" + v.id];
    double tau = 0, rho = 0;
    for (std::size_t u = 0; u < v.annotations.annotators(); ++u) {
      const auto row = v.annotations.scores.row(u);
      const std::vector<double> ref(row.begin(), row.end());
      tau += oracle::kendall_tau_b(v.target(), ref);
      rho += oracle::spearman(v.target(), ref);
    }
    const double users = static_cast<double>(v.annotations.annotators());
    EXPECT_NEAR(entry["tau"].get<double>(), tau / users, 1e-12);
    EXPECT_NEAR(entry["rho"].get<double>(), rho / users, 1e-12);
    const dmasum::SegmentList segs = dmasum::kts_segment(v.features);
    const dmasum::Summary s = dmasum::knapsack_select(v.target(), segs);
    EXPECT_EQ(entry["f1"].get<double>(), dmasum::f1_keyshot(s.selected, v.annotations, ds.manifest.aggregation));
  }
}

TEST(CliRankDiag, BucketsConservationAndPerBucketF1) {
  auto& ws = trained();
  ASSERT_EQ(run("rank-diag " + ws.common("run")).exit_code, 0);
  const auto hist = data_lines(slurp(ws.dir("run") / "rank_histogram.csv"));
  const auto detail = data_lines(slurp(ws.dir("run") / "rank_diag.csv"));
  ASSERT_EQ(hist.front(), "mode,bucket,count,mean_f1");
  ASSERT_EQ(detail.front(), "video_id,channel,mode,T,rank,diff,bucket,f1");
  std::map<std::string, std::size_t> total;
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, double>> recompute;
  for (std::size_t i = 1; i < detail.size(); ++i) {
    const auto c = split(detail[i]);
    auto& slot = recompute[{c[2], c[6]}];
    ++slot.first;
    slot.second += std::stod(c[7]);
  }
  std::vector<std::string> buckets;
  for (std::size_t i = 1; i < hist.size(); ++i) {
    const auto c = split(hist[i]);
    if (c[0] == "raw") buckets.push_back(c[1]);
    const std::size_t count = std::stoul(c[2]);
    total[c[0]] += count;
    const auto it = recompute.find({c[0], c[1]});
    EXPECT_EQ(count, it == recompute.end() ? 0u : it->second.first);
    if (count > 0) EXPECT_NEAR(std::stod(c[3]), it->second.second / count, 1e-9);
  }
  EXPECT_EQ(buckets, (std::vector<std::string>{"0-3", "4-7", "8-11", ">11"}));
  EXPECT_EQ(total["raw"], 6u * 2u);
  EXPECT_EQ(total["log"], 6u * 2u);
}

TEST(CliSummarize, BudgetWholeSegmentsAndRoundTrip) {
  auto& ws = trained();
  ASSERT_EQ(run("summarize " + ws.common("run")).exit_code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(ws.dir("run") / "summaries")) {
    ++files;
    const std::string text = slurp(e.path());
    const dmasum::SummaryTable t = dmasum::parse_summary_csv(text);
    const std::size_t frames = t.scores.size();
    const auto selected = static_cast<std::size_t>(std::count(t.selected.begin(), t.selected.end(), 1));
    EXPECT_LE(selected, static_cast<std::size_t>(std::floor(0.15 * frames)));
    for (std::size_t i = 1; i < frames; ++i) {
      if (t.segment_ids[i] == t.segment_ids[i - 1]) EXPECT_EQ(t.selected[i], t.selected[i - 1]);
    }
    // Rebuild the segment list and summary from the CSV and re-serialize.
    std::vector<std::size_t> bounds{0};
    for (std::size_t i = 1; i < frames; ++i)
      if (t.segment_ids[i] != t.segment_ids[i - 1]) bounds.push_back(i);
    bounds.push_back(frames);
    dmasum::Summary s;
    s.selected = t.selected;
    const std::string comment = text.substr(0, text.find("frame,score"));
    EXPECT_EQ(dmasum::summary_csv(t.scores, dmasum::SegmentList(bounds), s, comment), text);
  }
  EXPECT_EQ(files, 6u);
}

TEST(CliEval, MissingCheckpointExitsTwo) {
  harness::Workspace ws("nockpt", 2, 1);
  EXPECT_EQ(run("eval " + ws.common("empty")).exit_code, 2);
}
