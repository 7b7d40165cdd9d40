/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmasum/attention.hpp"
#include "dmasum/dataset.hpp"
#include "dmasum/eval.hpp"
#include "dmasum/linalg.hpp"
#include "dmasum/meta_train.hpp"
#include "dmasum/model.hpp"

namespace dmasum {

struct EvalOptions {
  double budget = kDefaultBudget;
  std::optional<F1Aggregation> aggregation;  // unset: the target manifest decides
  double kts_penalty = 1.0;
  std::size_t kts_max_segments = 0;  // 0: ceil(T / 15)
  double rank_rel_tol = kDefaultRankTolerance;
  std::size_t curve_samples = 21;

  friend bool operator==(const EvalOptions&, const EvalOptions&) = default;
};

struct RunConfig {
  std::string dataset;                 // target manifest
  std::vector<std::string> auxiliary;  // auxiliary manifests
  Setting setting = Setting::kCanonical;
  std::size_t folds = 5;
  ModelConfig model;  // feature_dim 0 takes the dataset's D
  MetaConfig meta;
  TrainerKind trainer = TrainerKind::kSingleVideoMeta;
  std::size_t batch = 1;
  EvalOptions eval;
  std::uint64_t seed = 0;

  RunConfig();
  // Throws InputError on any out-of-range field.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json run_config_to_json(const RunConfig& config);
// Missing keys keep defaults; unknown keys throw InputError.
RunConfig run_config_from_json(const nlohmann::json& doc);

// Everything that determines the bytes of a run's artifacts. The output
// directory is deliberately not part of it.
nlohmann::json config_echo(const RunConfig& config);

// The trainer variant a run exercises, as recorded in logs and reports.
nlohmann::json variant_of(const RunConfig& config);

struct RunData {
  std::vector<Dataset> datasets;  // target first, then auxiliary in config order
  FoldPlan plan;

  const Dataset& target() const { return datasets.front(); }
  const Video& video(const VideoRef& ref) const;
};

// Loads every manifest and assembles the fold plan. Fills model.feature_dim
// from the target when it is 0; a mismatch between datasets throws InputError.
RunData load_run_data(RunConfig& config);

// Worker threads for fold-level parallelism: DMASUM_THREADS when set, else
// the hardware concurrency, never more than `folds`.
std::size_t fold_parallelism(std::size_t folds);

std::uint64_t fold_model_seed(std::uint64_t seed, std::size_t fold);
std::uint64_t fold_shuffle_seed(std::uint64_t seed, std::size_t fold);

struct FoldTraining {
  ParameterVector theta;
  std::vector<UpdateLogEntry> log;
};

// Trains one fold from a freshly seeded model. NumericError messages gain the
// fold index.
FoldTraining train_fold(const RunConfig& config, const RunData& data, std::size_t fold);

// Writes run_config.json, plan.json, fold_<i>/checkpoint.bin and
// fold_<i>/train_log.csv under out.
void run_train(RunConfig config, const std::filesystem::path& out, std::ostream& progress);

struct VideoEvaluation {
  std::vector<double> scores;
  SegmentList segments;
  Summary summary;
  double f1 = 0.0;
  std::optional<double> tau;
  std::optional<double> rho;
  std::size_t tau_skipped = 0;
  std::size_t rho_skipped = 0;
  CorrelationCurve curve;
};

VideoEvaluation evaluate_video(std::vector<double> scores, const Video& video,
                               const EvalOptions& options, F1Aggregation aggregation);

F1Aggregation effective_aggregation(const RunConfig& config, const RunData& data);

// Loads fold_<i>/checkpoint.bin and checks it against the run configuration.
DmaSumModel load_fold_model(const RunConfig& config, const std::filesystem::path& out,
                            std::size_t fold);

// Evaluates every test video of every fold. With `oracle` the mean annotator
// scores stand in for predictions and no checkpoint is read. Writes
// report.json (or oracle_report.json), curve.csv, curve.svg and
// correlations.csv; returns the report.
nlohmann::json run_eval(RunConfig config, const std::filesystem::path& out, bool oracle);

// Rank of the last layer's attention map per test video and channel in raw
// and log modes, with a bucket histogram and per-bucket mean F1.
void run_rank_diag(RunConfig config, const std::filesystem::path& out);

// summaries/<dataset>__<id>.csv with `frame,score,segment_id,selected`.
void run_summarize(RunConfig config, const std::filesystem::path& out);

struct SummaryTable {
  std::vector<double> scores;
  std::vector<std::size_t> segment_ids;
  std::vector<std::uint8_t> selected;
};

std::string summary_csv(const std::vector<double>& scores, const SegmentList& segments,
                        const Summary& summary, const std::string& comment);
// Skips `#` comment lines. Throws LoadError on malformed rows.
SummaryTable parse_summary_csv(const std::string& text);

}  // namespace dmasum
