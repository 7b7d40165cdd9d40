/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dmasum/autodiff.hpp"
#include "dmasum/model.hpp"
#include "dmasum/rng.hpp"

namespace dmasum {

// Bias-corrected Adam with fixed conventional constants.
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  ParameterVector first_moment;
  ParameterVector second_moment;
  std::uint64_t step = 0;

  static AdamState for_parameters(const ParameterVector& params);
};

void adam_step(AdamState& state, ParameterVector& params, const ParameterVector& grads, double lr);

enum class MetaOptimizer { kAdam, kSgd };

std::string_view meta_optimizer_name(MetaOptimizer opt);
MetaOptimizer parse_meta_optimizer(std::string_view text);

struct MetaConfig {
  double learner_rate = 3e-5;  // alpha, inner gradient descent
  double meta_rate = 6e-5;     // beta, outer step (Adam learning rate in adam mode)
  std::size_t inner_steps = 3;
  std::size_t epochs = 10;
  MetaOptimizer optimizer = MetaOptimizer::kAdam;
  bool inner_adam = false;  // run Adam (rate alpha) inside the learner loop
  std::uint64_t shuffle_seed = 0;

  void validate() const;

  friend bool operator==(const MetaConfig&, const MetaConfig&) = default;
};

struct VideoTask {
  std::string id;
  Matrix features;
  std::vector<double> target;
};

struct InnerLoopResult {
  ParameterVector adapted;  // theta_m
  double final_loss = 0.0;  // loss at theta_m
};

// m gradient-descent steps of size alpha from a copy of theta. theta itself is
// never modified. Throws NumericError naming task_id on a non-finite loss.
InnerLoopResult learner_inner_loop(const Objective& objective, const ParameterVector& theta,
                                   const MetaConfig& config, const std::string& task_id);

// Pseudo-gradient g = theta - theta_m. SGD mode returns theta + beta * (theta_m - theta);
// Adam mode feeds g to adam_step with rate beta.
ParameterVector meta_update(const ParameterVector& theta, const ParameterVector& adapted,
                            const MetaConfig& config, AdamState& adam);

enum class TrainerKind {
  kSingleVideoMeta,  // inner loop on one video, interpolating meta step
  kPlain,            // ordinary Adam on per-video losses, no inner/outer split
  kFirstOrderMaml,   // gradient at theta_m applied to theta through Adam
};

std::string_view trainer_kind_name(TrainerKind kind);
TrainerKind parse_trainer_kind(std::string_view text);

struct TrainerOptions {
  MetaConfig meta;
  TrainerKind kind = TrainerKind::kSingleVideoMeta;
  std::size_t batch = 1;  // videos per inner loop; 1 is the single-video rule
};

struct UpdateLogEntry {
  std::size_t epoch = 0;
  std::string task_id;  // batch members joined with '+'
  double inner_final_loss = 0.0;
  double meta_param_delta_l2 = 0.0;
};

// Everything a training run carries from one update to the next.
struct TrainingState {
  ParameterVector theta;
  AdamState adam;
  SeededRng shuffle_rng{0};
  std::size_t epoch = 0;
  std::uint64_t updates = 0;
  std::vector<UpdateLogEntry> log;

  static TrainingState start(ParameterVector theta, std::uint64_t shuffle_seed);
};

// Builds the loss of one video; dropout_seed varies per evaluation point.
using TaskObjectiveFactory =
    std::function<Objective(const VideoTask& task, std::uint64_t dropout_seed)>;

TaskObjectiveFactory model_objective_factory(const DmaSumModel& model);

// One pass over the tasks in a freshly shuffled order with one update per
// batch. Returns the log entries appended by this epoch.
std::vector<UpdateLogEntry> run_epoch(const std::vector<VideoTask>& tasks, TrainingState& state,
                                      const TrainerOptions& options,
                                      const TaskObjectiveFactory& objectives);

// Single-video meta learning epoch: exactly one meta update per task.
std::vector<UpdateLogEntry> train_epoch(const std::vector<VideoTask>& tasks, TrainingState& state,
                                        const MetaConfig& config,
                                        const TaskObjectiveFactory& objectives);

// Ablation without meta learning: one Adam step (rate beta) per video.
std::vector<UpdateLogEntry> plain_train(const std::vector<VideoTask>& tasks, TrainingState& state,
                                        const MetaConfig& config,
                                        const TaskObjectiveFactory& objectives);

// Ablation with `batch` videos per inner loop (summed loss) and one meta
// update per batch. batch = 1 reproduces train_epoch exactly.
std::vector<UpdateLogEntry> batch_meta_train(const std::vector<VideoTask>& tasks,
                                             TrainingState& state, const MetaConfig& config,
                                             std::size_t batch,
                                             const TaskObjectiveFactory& objectives);

// CSV `epoch,task_id,inner_final_loss,meta_param_delta_l2`, numbers in
// round-trip precision.
std::string training_log_csv(const std::vector<UpdateLogEntry>& log);

}  // namespace dmasum
