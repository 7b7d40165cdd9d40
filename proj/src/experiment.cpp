/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include "dmasum/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "dmasum/checkpoint.hpp"
#include "dmasum/errors.hpp"
#include "dmasum/format.hpp"

namespace dmasum {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& doc, const std::set<std::string>& keys, const std::string& where) {
  if (!doc.is_object()) throw InputError(where + " must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!keys.contains(key)) throw InputError(where + ": unknown key '" + key + "'");
  }
}

std::string comment_line(const json& echo) { return "# config=" + echo.dump() + "\n"; }

std::string fold_dir(std::size_t fold) { return "fold_" + std::to_string(fold); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

RunConfig::RunConfig() { model.feature_dim = 0; }

void RunConfig::validate() const {
  if (dataset.empty()) throw InputError("config: a target dataset manifest is required");
  if (folds == 0) throw InputError("config: folds must be >= 1");
  if (batch == 0) throw InputError("config: batch must be >= 1");
  if (setting != Setting::kCanonical && auxiliary.empty()) {
    throw InputError("config: the " + std::string(setting_name(setting)) +
                     " setting needs at least one auxiliary dataset");
  }
  ModelConfig m = model;
  if (m.feature_dim == 0) m.feature_dim = 1;
  m.validate();
  meta.validate();
  if (meta.epochs == 0) throw InputError("config: epochs must be >= 1");
  if (!(eval.budget > 0.0 && eval.budget <= 1.0)) throw InputError("config: budget must be in (0, 1]");
  if (!(eval.kts_penalty >= 0.0)) throw InputError("config: kts_penalty must be >= 0");
  if (!(eval.rank_rel_tol > 0.0)) throw InputError("config: rank_rel_tol must be > 0");
  if (eval.curve_samples < 2) throw InputError("config: curve_samples must be >= 2");
}

json run_config_to_json(const RunConfig& config) {
  json doc;
  doc["dataset"] = config.dataset;
  doc["auxiliary"] = config.auxiliary;
  doc["setting"] = std::string(setting_name(config.setting));
  doc["folds"] = config.folds;
  doc["seed"] = config.seed;
  doc["trainer"] = std::string(trainer_kind_name(config.trainer));
  doc["batch"] = config.batch;
  doc["model"] = model_config_to_json(config.model);
  doc["meta"] = {{"learner_rate", config.meta.learner_rate},
                 {"meta_rate", config.meta.meta_rate},
                 {"inner_steps", config.meta.inner_steps},
                 {"epochs", config.meta.epochs},
                 {"optimizer", std::string(meta_optimizer_name(config.meta.optimizer))},
                 {"inner_adam", config.meta.inner_adam}};
  doc["eval"] = {{"budget", config.eval.budget},
                 {"aggregation", config.eval.aggregation
                                     ? std::string(aggregation_name(*config.eval.aggregation))
                                     : std::string("auto")},
                 {"kts_penalty", config.eval.kts_penalty},
                 {"kts_max_segments", config.eval.kts_max_segments},
                 {"rank_rel_tol", config.eval.rank_rel_tol},
                 {"curve_samples", config.eval.curve_samples}};
  return doc;
}

RunConfig run_config_from_json(const json& doc) {
  reject_unknown(doc, {"dataset", "auxiliary", "setting", "folds", "seed", "trainer", "batch", "model",
                       "meta", "eval"},
                 "config");
  RunConfig c;
  try {
    c.dataset = doc.value("dataset", c.dataset);
    c.auxiliary = doc.value("auxiliary", c.auxiliary);
    c.setting = parse_setting(doc.value("setting", std::string(setting_name(c.setting))));
    c.folds = doc.value("folds", c.folds);
    c.seed = doc.value("seed", c.seed);
    c.trainer = parse_trainer_kind(doc.value("trainer", std::string(trainer_kind_name(c.trainer))));
    c.batch = doc.value("batch", c.batch);
    if (doc.contains("model")) {
      json model = doc.at("model");
      if (model.is_object() && !model.contains("feature_dim")) model["feature_dim"] = 0;
      c.model = model_config_from_json(model);
    }
    if (doc.contains("meta")) {
      const json& m = doc.at("meta");
      reject_unknown(m, {"learner_rate", "meta_rate", "inner_steps", "epochs", "optimizer", "inner_adam"},
                     "config.meta");
      c.meta.learner_rate = m.value("learner_rate", c.meta.learner_rate);
      c.meta.meta_rate = m.value("meta_rate", c.meta.meta_rate);
      c.meta.inner_steps = m.value("inner_steps", c.meta.inner_steps);
      c.meta.epochs = m.value("epochs", c.meta.epochs);
      c.meta.optimizer =
          parse_meta_optimizer(m.value("optimizer", std::string(meta_optimizer_name(c.meta.optimizer))));
      c.meta.inner_adam = m.value("inner_adam", c.meta.inner_adam);
    }
    if (doc.contains("eval")) {
      const json& e = doc.at("eval");
      reject_unknown(e, {"budget", "aggregation", "kts_penalty", "kts_max_segments", "rank_rel_tol",
                         "curve_samples"},
                     "config.eval");
      c.eval.budget = e.value("budget", c.eval.budget);
      const std::string agg = e.value("aggregation", std::string("auto"));
      if (agg == "auto") {
        c.eval.aggregation.reset();
      } else {
        c.eval.aggregation = parse_aggregation(agg);
      }
      c.eval.kts_penalty = e.value("kts_penalty", c.eval.kts_penalty);
      c.eval.kts_max_segments = e.value("kts_max_segments", c.eval.kts_max_segments);
      c.eval.rank_rel_tol = e.value("rank_rel_tol", c.eval.rank_rel_tol);
      c.eval.curve_samples = e.value("curve_samples", c.eval.curve_samples);
    }
  } catch (const json::exception& ex) {
    throw InputError(std::string("config: ") + ex.what());
  }
  return c;
}

json config_echo(const RunConfig& config) { return run_config_to_json(config); }

json variant_of(const RunConfig& config) {
  std::string name = std::string(trainer_kind_name(config.trainer)) + "/" +
                     std::string(channel_name(config.model.channel)) + "/" +
                     (config.model.plain_softmax ? "softmax" : "mixture") + "/batch" +
                     std::to_string(config.batch);
  return {{"name", name},
          {"trainer", std::string(trainer_kind_name(config.trainer))},
          {"channel", std::string(channel_name(config.model.channel))},
          {"plain_softmax", config.model.plain_softmax},
          {"batch", config.batch},
          {"setting", std::string(setting_name(config.setting))}};
}

const Video& RunData::video(const VideoRef& ref) const {
  for (const auto& ds : datasets) {
    if (ds.manifest.name == ref.dataset) return ds.find(ref.id);
  }
  throw InputError("no dataset named " + ref.dataset);
}

RunData load_run_data(RunConfig& config) {
  config.validate();
  RunData data;
  data.datasets.push_back(load_dataset(config.dataset));
  for (const auto& aux : config.auxiliary) data.datasets.push_back(load_dataset(aux));

  std::size_t dim = config.model.feature_dim;
  for (const auto& ds : data.datasets) {
    if (ds.videos.empty()) throw InputError("dataset " + ds.manifest.name + " has no videos");
    for (const auto& v : ds.videos) {
      if (dim == 0) dim = v.features.cols();
      if (v.features.cols() != dim) {
        throw InputError("video " + ds.manifest.name + "/" + v.id + " has D=" +
                         std::to_string(v.features.cols()) + ", expected " + std::to_string(dim));
      }
    }
  }
  config.model.feature_dim = dim;

  std::vector<const Dataset*> aux;
  for (std::size_t i = 1; i < data.datasets.size(); ++i) aux.push_back(&data.datasets[i]);
  data.plan = assemble_setting(data.target(), aux, config.setting, config.folds, config.seed);
  return data;
}

std::size_t fold_parallelism(std::size_t folds) {
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DMASUM_THREADS"); env != nullptr && *env != '\0') {
    std::size_t parsed = 0;
    const char* end = env + std::char_traits<char>::length(env);
    const auto [ptr, ec] = std::from_chars(env, end, parsed);
    if (ec != std::errc() || ptr != end || parsed == 0) {
      throw InputError("DMASUM_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
    threads = parsed;
  }
  return std::max<std::size_t>(1, std::min(threads, folds));
}

std::uint64_t fold_model_seed(std::uint64_t seed, std::size_t fold) {
  return SeededRng::derive(seed, 2 * fold).seed();
}

std::uint64_t fold_shuffle_seed(std::uint64_t seed, std::size_t fold) {
  return SeededRng::derive(seed, 2 * fold + 1).seed();
}

FoldTraining train_fold(const RunConfig& config, const RunData& data, std::size_t fold) {
  const Fold& fold_plan = data.plan.folds.at(fold);
  if (fold_plan.train.empty()) {
    throw InputError("fold " + std::to_string(fold) + " has no training videos");
  }
  std::vector<VideoTask> tasks;
  for (const auto& ref : fold_plan.train) {
    const Video& v = data.video(ref);
    tasks.push_back({ref.label(), v.features, v.target()});
  }
  const DmaSumModel model(config.model, fold_model_seed(config.seed, fold));
  TrainingState state =
      TrainingState::start(model.parameters(), fold_shuffle_seed(config.seed, fold));
  TrainerOptions options{config.meta, config.trainer, config.batch};
  const TaskObjectiveFactory objectives = model_objective_factory(model);
  try {
    for (std::size_t e = 0; e < config.meta.epochs; ++e) run_epoch(tasks, state, options, objectives);
  } catch (const NumericError& ex) {
    throw NumericError("fold " + std::to_string(fold) + ": " + ex.what());
  }
  return {std::move(state.theta), std::move(state.log)};
}

void run_train(RunConfig config, const fs::path& out, std::ostream& progress) {
  const RunData data = load_run_data(config);
  const json echo = config_echo(config);
  ensure_dir(out);
  write_text_synced(out / "run_config.json", echo.dump(2) + "\n");
  write_text_synced(out / "plan.json", plan_to_json(data.plan).dump(2) + "\n");

  const std::size_t folds = data.plan.folds.size();
  std::vector<FoldTraining> results(folds);
  std::vector<std::exception_ptr> errors(folds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f = next++; f < folds; f = next++) {
      try {
        results[f] = train_fold(config, data, f);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t threads = fold_parallelism(folds);
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const std::string header = "# trainer=" + std::string(trainer_kind_name(config.trainer)) +
                             " seed=" + std::to_string(config.seed) + "\n" + comment_line(echo);
  for (std::size_t f = 0; f < folds; ++f) {
    const fs::path dir = out / fold_dir(f);
    ensure_dir(dir);
    json cp_echo = echo;
    cp_echo["fold"] = f;
    save_checkpoint(dir / "checkpoint.bin", Checkpoint{config.model, results[f].theta, cp_echo});
    write_text_synced(dir / "train_log.csv", header + training_log_csv(results[f].log));
    const double last = results[f].log.empty() ? 0.0 : results[f].log.back().inner_final_loss;
    progress << "fold " << f << ": " << results[f].log.size() << " updates, last inner loss "
             << format_double(last) << "\n";
  }
}

VideoEvaluation evaluate_video(std::vector<double> scores, const Video& video,
                               const EvalOptions& options, F1Aggregation aggregation) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("video " + video.id + ": non-finite predicted score");
  }
  VideoEvaluation ev;
  ev.segments = kts_segment(video.features, options.kts_penalty, options.kts_max_segments);
  ev.summary = knapsack_select(scores, ev.segments, options.budget);
  ev.f1 = f1_keyshot(ev.summary.selected, video.annotations, aggregation);

  // Per-coefficient averages over the annotators for which each is defined.
  double tau_sum = 0.0, rho_sum = 0.0;
  std::size_t tau_used = 0, rho_used = 0;
  for (std::size_t u = 0; u < video.annotations.annotators(); ++u) {
    const auto ref = video.annotations.scores.row(u);
    try {
      tau_sum += kendall_tau(scores, ref);
      ++tau_used;
    } catch (const UndefinedCoefficientError&) {
      ++ev.tau_skipped;
    }
    try {
      rho_sum += spearman_rho(scores, ref);
      ++rho_used;
    } catch (const UndefinedCoefficientError&) {
      ++ev.rho_skipped;
    }
  }
  if (tau_used > 0) ev.tau = tau_sum / static_cast<double>(tau_used);
  if (rho_used > 0) ev.rho = rho_sum / static_cast<double>(rho_used);
  ev.curve = correlation_curve(scores, video.annotations, options.curve_samples);
  ev.scores = std::move(scores);
  return ev;
}

F1Aggregation effective_aggregation(const RunConfig& config, const RunData& data) {
  return config.eval.aggregation.value_or(data.target().manifest.aggregation);
}

DmaSumModel load_fold_model(const RunConfig& config, const fs::path& out, std::size_t fold) {
  const fs::path path = out / fold_dir(fold) / "checkpoint.bin";
  Checkpoint cp = load_checkpoint(path);
  if (!(cp.config == config.model)) {
    throw InputError(path.string() + " was trained with model config " +
                     model_config_to_json(cp.config).dump() + ", run config asks for " +
                     model_config_to_json(config.model).dump());
  }
  return DmaSumModel::from_parameters(cp.config, std::move(cp.params));
}

namespace {

struct EvaluatedVideo {
  std::string label;
  std::size_t fold = 0;
  VideoEvaluation eval;
};

// Visits every test video fold by fold with the fold's model.
template <typename Fn>
void for_each_test_video(const RunConfig& config, const RunData& data, const fs::path& out,
                         bool need_model, Fn&& fn) {
  for (std::size_t f = 0; f < data.plan.folds.size(); ++f) {
    std::optional<DmaSumModel> model;
    if (need_model) model.emplace(load_fold_model(config, out, f));
    for (const auto& ref : data.plan.folds[f].test) {
      fn(f, ref, data.video(ref), model ? &*model : nullptr);
    }
  }
}

json reference_values(const RunConfig& config, const RunData& data) {
  if (config.setting != Setting::kCanonical) return nullptr;
  const std::string name = lower(data.target().manifest.name);
  if (name == "summe") return {{"f1", 54.3}, {"tau", 0.063}, {"rho", 0.089}};
  if (name == "tvsum") return {{"f1", 61.4}, {"tau", 0.203}, {"rho", 0.267}};
  return nullptr;
}

CorrelationCurve mean_curve(const std::vector<EvaluatedVideo>& videos) {
  CorrelationCurve mean = videos.front().eval.curve;
  const std::size_t users = mean.annotators.size();
  bool same_users = true;
  for (std::size_t i = 1; i < videos.size(); ++i) {
    const CorrelationCurve& c = videos[i].eval.curve;
    same_users = same_users && c.annotators.size() == users;
    for (std::size_t k = 0; k < mean.fractions.size(); ++k) {
      mean.model[k] += c.model[k];
      mean.mean_annotator[k] += c.mean_annotator[k];
      mean.random_expectation[k] += c.random_expectation[k];
      if (same_users) {
        for (std::size_t u = 0; u < users; ++u) mean.annotators[u][k] += c.annotators[u][k];
      }
    }
  }
  const double n = static_cast<double>(videos.size());
  for (std::size_t k = 0; k < mean.fractions.size(); ++k) {
    mean.model[k] /= n;
    mean.mean_annotator[k] /= n;
    mean.random_expectation[k] /= n;
    for (auto& a : mean.annotators) a[k] /= n;
  }
  // Annotator columns only make sense when every video has the same panel.
  if (!same_users) mean.annotators.clear();
  return mean;
}

}  // namespace

json run_eval(RunConfig config, const fs::path& out, bool oracle) {
  const RunData data = load_run_data(config);
  const json echo = config_echo(config);
  const F1Aggregation agg = effective_aggregation(config, data);

  std::vector<EvaluatedVideo> videos;
  for_each_test_video(config, data, out, !oracle,
                      [&](std::size_t fold, const VideoRef& ref, const Video& video,
                          const DmaSumModel* model) {
                        std::vector<double> scores =
                            oracle ? video.target() : model->predict(video.features);
                        try {
                          videos.push_back({ref.label(), fold,
                                            evaluate_video(std::move(scores), video, config.eval, agg)});
                        } catch (const NumericError& ex) {
                          throw NumericError("fold " + std::to_string(fold) + ": " + ex.what());
                        }
                      });
  std::sort(videos.begin(), videos.end(),
            [](const EvaluatedVideo& a, const EvaluatedVideo& b) { return a.label < b.label; });

  json per_video = json::object();
  double f1_sum = 0.0, tau_sum = 0.0, rho_sum = 0.0;
  std::size_t tau_n = 0, rho_n = 0;
  std::ostringstream correlations;
  correlations << comment_line(echo) << "video_id,fold,f1,tau,rho\n";
  for (const auto& v : videos) {
    per_video[v.label] = {{"fold", v.fold},
                          {"f1", v.eval.f1},
                          {"tau", optional_number(v.eval.tau)},
                          {"rho", optional_number(v.eval.rho)},
                          {"tau_skipped_annotators", v.eval.tau_skipped},
                          {"rho_skipped_annotators", v.eval.rho_skipped},
                          {"segments", v.eval.segments.count()},
                          {"selected_frames", v.eval.summary.selected_count()},
                          {"frames", v.eval.scores.size()}};
    f1_sum += v.eval.f1;
    if (v.eval.tau) tau_sum += *v.eval.tau, ++tau_n;
    if (v.eval.rho) rho_sum += *v.eval.rho, ++rho_n;
    correlations << v.label << ',' << v.fold << ',' << format_double(v.eval.f1) << ','
                 << (v.eval.tau ? format_double(*v.eval.tau) : "") << ','
                 << (v.eval.rho ? format_double(*v.eval.rho) : "") << '\n';
  }
  const double n = static_cast<double>(videos.size());
  json aggregate = {{"f1", f1_sum / n},
                    {"tau", tau_n ? json(tau_sum / static_cast<double>(tau_n)) : json(nullptr)},
                    {"rho", rho_n ? json(rho_sum / static_cast<double>(rho_n)) : json(nullptr)},
                    {"videos", videos.size()},
                    {"tau_undefined_videos", videos.size() - tau_n},
                    {"rho_undefined_videos", videos.size() - rho_n}};

  const CorrelationCurve curve = mean_curve(videos);
  json report;
  report["config_echo"] = echo;
  report["seed"] = config.seed;
  report["variant"] = variant_of(config);
  report["mode"] = oracle ? "oracle" : "model";
  report["f1_aggregation"] = std::string(aggregation_name(agg));
  report["f1_protocols"] = {{"kts-knapsack", "implemented"},
                            {"two-peak", "unsupported"},
                            {"randomized-kts", "unsupported"}};
  report["binary_label_datasets"] = data.plan.binary_label_datasets;
  report["per_video"] = per_video;
  report["aggregate"] = aggregate;
  report["curve"] = {{"fractions", curve.fractions},
                     {"model", curve.model},
                     {"mean_annotator", curve.mean_annotator},
                     {"random_expectation", curve.random_expectation}};
  report["published_reference"] = reference_values(config, data);

  const std::string prefix = oracle ? "oracle_" : "";
  ensure_dir(out);
  write_text_synced(out / (prefix + "report.json"), report.dump(2) + "\n");
  write_text_synced(out / (prefix + "curve.csv"), comment_line(echo) + curve_csv(curve));
  write_text_synced(out / (prefix + "curve.svg"),
                    curve_svg(curve, "captured importance (" + std::string(oracle ? "oracle" : "model") +
                                         ", " + variant_of(config)["name"].get<std::string>() + ")"));
  write_text_synced(out / (prefix + "correlations.csv"), correlations.str());
  return report;
}

void run_rank_diag(RunConfig config, const fs::path& out) {
  const RunData data = load_run_data(config);
  const json echo = config_echo(config);
  const F1Aggregation agg = effective_aggregation(config, data);
  constexpr std::array<RankMode, 2> kModes = {RankMode::kRaw, RankMode::kLog};

  struct Row {
    std::string label;
    std::string channel;
    RankMode mode;
    RankDiagnostic diag;
    double f1;
  };
  std::vector<Row> rows;
  for_each_test_video(config, data, out, true,
                      [&](std::size_t fold, const VideoRef& ref, const Video& video,
                          const DmaSumModel* model) {
                        try {
                          const double f1 =
                              evaluate_video(model->predict(video.features), video, config.eval, agg).f1;
                          const ForwardCapture maps = model->attention_maps(video.features);
                          std::vector<std::pair<std::string, const Matrix*>> chosen;
                          if (!maps.visual.empty()) chosen.emplace_back("visual", &maps.visual.back().mixture);
                          if (!maps.sequential.empty()) {
                            chosen.emplace_back("sequential", &maps.sequential.back().mixture);
                          }
                          for (RankMode mode : kModes) {
                            for (const auto& [channel, map] : chosen) {
                              rows.push_back({ref.label(), channel, mode,
                                              rank_diagnose(*map, mode, config.eval.rank_rel_tol), f1});
                            }
                          }
                        } catch (const NumericError& ex) {
                          throw NumericError("fold " + std::to_string(fold) + ", video " + ref.label() +
                                             ": " + ex.what());
                        }
                      });
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.mode != b.mode) return a.mode < b.mode;
    return a.label < b.label;
  });

  std::ostringstream detail;
  detail << comment_line(echo) << "video_id,channel,mode,T,rank,diff,bucket,f1\n";
  for (const auto& r : rows) {
    detail << r.label << ',' << r.channel << ',' << rank_mode_name(r.mode) << ',' << r.diag.frames
           << ',' << r.diag.rank << ',' << r.diag.difference << ',' << r.diag.bucket << ','
           << format_double(r.f1) << '\n';
  }
  std::ostringstream hist;
  hist << comment_line(echo) << "mode,bucket,count,mean_f1\n";
  for (RankMode mode : kModes) {
    std::array<std::size_t, 4> count{};
    std::array<double, 4> f1{};
    for (const auto& r : rows) {
      if (r.mode != mode) continue;
      const std::size_t b = rank_bucket_index(r.diag.difference);
      ++count[b];
      f1[b] += r.f1;
    }
    for (std::size_t b = 0; b < kRankBuckets.size(); ++b) {
      hist << rank_mode_name(mode) << ',' << kRankBuckets[b] << ',' << count[b] << ','
           << (count[b] ? format_double(f1[b] / static_cast<double>(count[b])) : "") << '\n';
    }
  }
  ensure_dir(out);
  write_text_synced(out / "rank_diag.csv", detail.str());
  write_text_synced(out / "rank_histogram.csv", hist.str());
}

std::string summary_csv(const std::vector<double>& scores, const SegmentList& segments,
                        const Summary& summary, const std::string& comment) {
  if (scores.size() != segments.frames() || summary.selected.size() != scores.size()) {
    throw ShapeError("summary_csv: scores, segments and summary disagree on T");
  }
  std::ostringstream out;
  out << comment << "frame,score,segment_id,selected\n";
  for (std::size_t t = 0; t < scores.size(); ++t) {
    out << t << ',' << format_double(scores[t]) << ',' << segments.segment_of(t) << ','
        << static_cast<int>(summary.selected[t]) << '\n';
  }
  return out.str();
}

SummaryTable parse_summary_csv(const std::string& text) {
  SummaryTable table;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (line != "frame,score,segment_id,selected") throw LoadError("summary csv: unexpected header");
      header = true;
      continue;
    }
    std::array<std::string, 4> cells;
    std::istringstream row(line);
    for (auto& cell : cells) {
      if (!std::getline(row, cell, ',')) throw LoadError("summary csv: short row at line " + std::to_string(lineno));
    }
    auto parse = [&](const std::string& cell, auto& value) {
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw LoadError("summary csv: bad value '" + cell + "' at line " + std::to_string(lineno));
      }
    };
    std::size_t frame = 0, segment = 0;
    double score = 0.0;
    int selected = 0;
    parse(cells[0], frame);
    parse(cells[1], score);
    parse(cells[2], segment);
    parse(cells[3], selected);
    if (frame != table.scores.size() || (selected != 0 && selected != 1)) {
      throw LoadError("summary csv: malformed row at line " + std::to_string(lineno));
    }
    table.scores.push_back(score);
    table.segment_ids.push_back(segment);
    table.selected.push_back(static_cast<std::uint8_t>(selected));
  }
  if (!header) throw LoadError("summary csv: missing header");
  return table;
}

void run_summarize(RunConfig config, const fs::path& out) {
  const RunData data = load_run_data(config);
  const json echo = config_echo(config);
  const F1Aggregation agg = effective_aggregation(config, data);
  const fs::path dir = out / "summaries";
  ensure_dir(dir);
  for_each_test_video(config, data, out, true,
                      [&](std::size_t fold, const VideoRef& ref, const Video& video,
                          const DmaSumModel* model) {
                        VideoEvaluation ev;
                        try {
                          ev = evaluate_video(model->predict(video.features), video, config.eval, agg);
                        } catch (const NumericError& ex) {
                          throw NumericError("fold " + std::to_string(fold) + ": " + ex.what());
                        }
                        const std::string comment = "# video=" + ref.label() + " fold=" +
                                                    std::to_string(fold) + "\n" + comment_line(echo);
                        write_text_synced(dir / (ref.dataset + "__" + ref.id + ".csv"),
                                          summary_csv(ev.scores, ev.segments, ev.summary, comment));
                      });
}

}  // namespace dmasum
