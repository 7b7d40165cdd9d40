/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dmasum/dataset.hpp"
#include "dmasum/errors.hpp"
#include "dmasum/experiment.hpp"

namespace {

using dmasum::RunConfig;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> setting;
  bool no_meta = false;
  bool plain_softmax = false;
  std::optional<std::string> channel;
  std::optional<std::size_t> batch_meta;
  std::optional<std::string> dataset;
  std::vector<std::string> aux;
  std::optional<std::size_t> folds;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> inner_steps;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<std::string> trainer;
  bool oracle = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration; flags take precedence");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--out", f.out, "run directory")->required();
  cmd->add_option("--setting", f.setting, "canonical | augmented | transfer");
  cmd->add_flag("--no-meta", f.no_meta, "plain Adam training without the meta step");
  cmd->add_flag("--plain-softmax", f.plain_softmax, "single softmax attention instead of the mixture");
  cmd->add_option("--channel", f.channel, "dual | visual | sequential");
  cmd->add_option("--batch-meta", f.batch_meta, "videos per inner loop");
  cmd->add_option("--dataset", f.dataset, "target dataset manifest");
  cmd->add_option("--aux", f.aux, "auxiliary dataset manifest (repeatable)");
  cmd->add_option("--folds", f.folds, "cross-validation folds");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--inner-steps", f.inner_steps, "learner steps per task");
  cmd->add_option("--alpha", f.alpha, "learner rate");
  cmd->add_option("--beta", f.beta, "meta rate");
  cmd->add_option("--trainer", f.trainer, "single-video-meta | plain | first-order-maml");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw dmasum::InputError("cannot open config " + f.config);
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& ex) {
      throw dmasum::InputError("config " + f.config + ": " + ex.what());
    }
    c = dmasum::run_config_from_json(doc);
  }
  if (f.seed) c.seed = *f.seed;
  if (f.setting) c.setting = dmasum::parse_setting(*f.setting);
  if (f.trainer) c.trainer = dmasum::parse_trainer_kind(*f.trainer);
  if (f.no_meta) c.trainer = dmasum::TrainerKind::kPlain;
  if (f.plain_softmax) c.model.plain_softmax = true;
  if (f.channel) c.model.channel = dmasum::parse_channel(*f.channel);
  if (f.batch_meta) c.batch = *f.batch_meta;
  if (f.dataset) c.dataset = *f.dataset;
  if (!f.aux.empty()) c.auxiliary = f.aux;
  if (f.folds) c.folds = *f.folds;
  if (f.epochs) c.meta.epochs = *f.epochs;
  if (f.inner_steps) c.meta.inner_steps = *f.inner_steps;
  if (f.alpha) c.meta.learner_rate = *f.alpha;
  if (f.beta) c.meta.meta_rate = *f.beta;
  c.validate();
  return c;
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  auto number = [&](std::string_view s) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw dmasum::InputError("--t expects MIN:MAX or N, got '" + text + "'");
    }
    return v;
  };
  if (colon == std::string::npos) {
    const std::size_t v = number(text);
    return {v, v};
  }
  return {number(std::string_view(text).substr(0, colon)),
          number(std::string_view(text).substr(colon + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-channel mixture-of-attention video summarizer"};
  app.require_subcommand(1);

  dmasum::SynthOptions synth;
  std::string synth_out;
  std::string frames_range = "40:80";
  std::string label_style = "continuous";
  std::string aggregation = "mean";
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic annotated corpus");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--videos", synth.videos, "number of videos");
  synth_cmd->add_option("--t", frames_range, "frame count range MIN:MAX");
  synth_cmd->add_option("--d", synth.dim, "feature dimension");
  synth_cmd->add_option("--u", synth.annotators, "annotators per video");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--name", synth.name, "dataset name");
  synth_cmd->add_option("--fps", synth.fps, "frames per second (reporting only)");
  synth_cmd->add_option("--label-style", label_style, "continuous | binary");
  synth_cmd->add_option("--aggregation", aggregation, "F1 aggregation recorded in the manifest");

  CommonFlags flags;
  auto* train_cmd = app.add_subcommand("train", "train one model per fold");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate fold checkpoints on their test videos");
  auto* rank_cmd = app.add_subcommand("rank-diag", "rank diagnostics of attention maps");
  auto* sum_cmd = app.add_subcommand("summarize", "write per-video key-shot summaries");
  for (auto* cmd : {train_cmd, eval_cmd, rank_cmd, sum_cmd}) add_common(cmd, flags);
  eval_cmd->add_flag("--oracle", flags.oracle, "use mean annotator scores as predictions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (synth_cmd->parsed()) {
      std::tie(synth.min_frames, synth.max_frames) = parse_range(frames_range);
      synth.label_style = dmasum::parse_label_style(label_style);
      synth.aggregation = dmasum::parse_aggregation(aggregation);
      std::cout << dmasum::synth_dataset(synth, synth_out).string() << "\n";
      return 0;
    }
    const RunConfig config = resolve_config(flags);
    if (train_cmd->parsed()) {
      dmasum::run_train(config, flags.out, std::cout);
    } else if (eval_cmd->parsed()) {
      const auto report = dmasum::run_eval(config, flags.out, flags.oracle);
      std::cout << report["aggregate"].dump() << "\n";
    } else if (rank_cmd->parsed()) {
      dmasum::run_rank_diag(config, flags.out);
    } else if (sum_cmd->parsed()) {
      dmasum::run_summarize(config, flags.out);
    }
    return 0;
  } catch (const dmasum::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dmasum::LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dmasum::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
