/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include "dmasum/meta_train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dmasum/errors.hpp"
#include "dmasum/format.hpp"

namespace dmasum {

AdamState AdamState::for_parameters(const ParameterVector& params) {
  AdamState state;
  state.first_moment = params.zeros_like();
  state.second_moment = params.zeros_like();
  return state;
}

void adam_step(AdamState& state, ParameterVector& params, const ParameterVector& grads, double lr) {
  if (!params.same_layout(grads)) throw ShapeError("adam_step: gradient layout mismatch");
  if (state.first_moment.count() == 0 && params.count() != 0) {
    state = AdamState::for_parameters(params);
  }
  if (!params.same_layout(state.first_moment)) throw ShapeError("adam_step: state layout mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double correction2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t p = 0; p < params.count(); ++p) {
    auto theta = params[p].data();
    auto g = grads[p].data();
    auto m = state.first_moment[p].data();
    auto v = state.second_moment[p].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = AdamState::kBeta1 * m[k] + (1.0 - AdamState::kBeta1) * g[k];
      v[k] = AdamState::kBeta2 * v[k] + (1.0 - AdamState::kBeta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      theta[k] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::kEpsilon);
    }
  }
}

std::string_view meta_optimizer_name(MetaOptimizer opt) {
  return opt == MetaOptimizer::kSgd ? "sgd" : "adam";
}

MetaOptimizer parse_meta_optimizer(std::string_view text) {
  if (text == "adam") return MetaOptimizer::kAdam;
  if (text == "sgd") return MetaOptimizer::kSgd;
  throw InputError("unknown meta optimizer '" + std::string(text) + "'");
}

void MetaConfig::validate() const {
  if (!(learner_rate > 0.0) || !(meta_rate > 0.0)) {
    throw InputError("meta config: learner_rate and meta_rate must be positive");
  }
}

InnerLoopResult learner_inner_loop(const Objective& objective, const ParameterVector& theta,
                                   const MetaConfig& config, const std::string& task_id) {
  InnerLoopResult result{theta, 0.0};
  AdamState inner;
  if (config.inner_adam) inner = AdamState::for_parameters(theta);
  for (std::size_t step = 0; step < config.inner_steps; ++step) {
    ParameterVector grad = theta.zeros_like();
    const double loss = objective(result.adapted, &grad);
    if (!std::isfinite(loss) || !all_finite(grad)) {
      throw NumericError("task " + task_id + ": non-finite loss or gradient at inner step " +
                         std::to_string(step + 1));
    }
    if (config.inner_adam) {
      adam_step(inner, result.adapted, grad, config.learner_rate);
    } else {
      axpy(result.adapted, -config.learner_rate, grad);
    }
  }
  result.final_loss = objective(result.adapted, nullptr);
  if (!std::isfinite(result.final_loss)) {
    throw NumericError("task " + task_id + ": non-finite loss after the inner loop");
  }
  return result;
}

ParameterVector meta_update(const ParameterVector& theta, const ParameterVector& adapted,
                            const MetaConfig& config, AdamState& adam) {
  if (!theta.same_layout(adapted)) throw ShapeError("meta_update: parameter layouts differ");
  ParameterVector next = theta;
  if (config.optimizer == MetaOptimizer::kSgd) {
    for (std::size_t p = 0; p < next.count(); ++p) {
      auto out = next[p].data();
      auto base = theta[p].data();
      auto target = adapted[p].data();
      for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = base[k] + config.meta_rate * (target[k] - base[k]);
      }
    }
    return next;
  }
  adam_step(adam, next, difference(theta, adapted), config.meta_rate);
  return next;
}

std::string_view trainer_kind_name(TrainerKind kind) {
  switch (kind) {
    case TrainerKind::kSingleVideoMeta: return "single-video-meta";
    case TrainerKind::kPlain: return "plain";
    case TrainerKind::kFirstOrderMaml: return "first-order-maml";
  }
  return "single-video-meta";
}

TrainerKind parse_trainer_kind(std::string_view text) {
  if (text == "single-video-meta") return TrainerKind::kSingleVideoMeta;
  if (text == "plain") return TrainerKind::kPlain;
  if (text == "first-order-maml") return TrainerKind::kFirstOrderMaml;
  throw InputError("unknown trainer '" + std::string(text) + "'");
}

TrainingState TrainingState::start(ParameterVector theta, std::uint64_t shuffle_seed) {
  TrainingState state;
  state.adam = AdamState::for_parameters(theta);
  state.theta = std::move(theta);
  state.shuffle_rng = SeededRng(shuffle_seed);
  return state;
}

TaskObjectiveFactory model_objective_factory(const DmaSumModel& model) {
  return [&model](const VideoTask& task, std::uint64_t dropout_seed) {
    return make_video_objective(model, task.features, task.target, dropout_seed);
  };
}

namespace {

Objective summed_objective(std::vector<Objective> parts) {
  if (parts.size() == 1) return parts.front();
  return [parts = std::move(parts)](const ParameterVector& params, ParameterVector* grad) {
    double total = 0.0;
    if (grad != nullptr) *grad = params.zeros_like();
    ParameterVector part_grad;
    for (const auto& part : parts) {
      total += part(params, grad != nullptr ? &part_grad : nullptr);
      if (grad != nullptr) axpy(*grad, 1.0, part_grad);
    }
    return total;
  };
}

}  // namespace

std::vector<UpdateLogEntry> run_epoch(const std::vector<VideoTask>& tasks, TrainingState& state,
                                      const TrainerOptions& options,
                                      const TaskObjectiveFactory& objectives) {
  if (tasks.empty()) throw InputError("run_epoch: no tasks");
  if (options.batch == 0) throw InputError("run_epoch: batch must be >= 1");
  options.meta.validate();

  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  state.shuffle_rng.shuffle(order);
  ++state.epoch;

  const std::size_t first_entry = state.log.size();
  for (std::size_t start = 0; start < order.size(); start += options.batch) {
    const std::size_t stop = std::min(order.size(), start + options.batch);
    std::vector<Objective> parts;
    std::string batch_id;
    for (std::size_t k = start; k < stop; ++k) {
      const VideoTask& task = tasks[order[k]];
      const std::uint64_t dropout_seed =
          SeededRng::derive(state.shuffle_rng.seed(), state.updates * 1024 + (k - start))
              .next_u64();
      parts.push_back(objectives(task, dropout_seed));
      if (!batch_id.empty()) batch_id += '+';
      batch_id += task.id;
    }
    const Objective objective = summed_objective(std::move(parts));

    ParameterVector next;
    double logged_loss = 0.0;
    switch (options.kind) {
      case TrainerKind::kSingleVideoMeta: {
        InnerLoopResult inner = learner_inner_loop(objective, state.theta, options.meta, batch_id);
        next = meta_update(state.theta, inner.adapted, options.meta, state.adam);
        logged_loss = inner.final_loss;
        break;
      }
      case TrainerKind::kFirstOrderMaml: {
        InnerLoopResult inner = learner_inner_loop(objective, state.theta, options.meta, batch_id);
        ParameterVector grad = state.theta.zeros_like();
        logged_loss = objective(inner.adapted, &grad);
        if (!all_finite(grad)) throw NumericError("task " + batch_id + ": non-finite gradient");
        next = state.theta;
        adam_step(state.adam, next, grad, options.meta.meta_rate);
        break;
      }
      case TrainerKind::kPlain: {
        ParameterVector grad = state.theta.zeros_like();
        logged_loss = objective(state.theta, &grad);
        if (!std::isfinite(logged_loss) || !all_finite(grad)) {
          throw NumericError("task " + batch_id + ": non-finite loss or gradient");
        }
        next = state.theta;
        adam_step(state.adam, next, grad, options.meta.meta_rate);
        break;
      }
    }
    if (!all_finite(next)) throw NumericError("task " + batch_id + ": parameters became non-finite");

    UpdateLogEntry entry;
    entry.epoch = state.epoch;
    entry.task_id = batch_id;
    entry.inner_final_loss = logged_loss;
    entry.meta_param_delta_l2 = l2_norm(difference(next, state.theta));
    state.log.push_back(std::move(entry));
    state.theta = std::move(next);
    ++state.updates;
  }
  return {state.log.begin() + static_cast<std::ptrdiff_t>(first_entry), state.log.end()};
}

std::vector<UpdateLogEntry> train_epoch(const std::vector<VideoTask>& tasks, TrainingState& state,
                                        const MetaConfig& config,
                                        const TaskObjectiveFactory& objectives) {
  return run_epoch(tasks, state, TrainerOptions{config, TrainerKind::kSingleVideoMeta, 1},
                   objectives);
}

std::vector<UpdateLogEntry> plain_train(const std::vector<VideoTask>& tasks, TrainingState& state,
                                        const MetaConfig& config,
                                        const TaskObjectiveFactory& objectives) {
  return run_epoch(tasks, state, TrainerOptions{config, TrainerKind::kPlain, 1}, objectives);
}

std::vector<UpdateLogEntry> batch_meta_train(const std::vector<VideoTask>& tasks,
                                             TrainingState& state, const MetaConfig& config,
                                             std::size_t batch,
                                             const TaskObjectiveFactory& objectives) {
  return run_epoch(tasks, state, TrainerOptions{config, TrainerKind::kSingleVideoMeta, batch},
                   objectives);
}

std::string training_log_csv(const std::vector<UpdateLogEntry>& log) {
  std::ostringstream out;
  out << "epoch,task_id,inner_final_loss,meta_param_delta_l2\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.task_id << ',' << format_double(e.inner_final_loss) << ','
        << format_double(e.meta_param_delta_l2) << '\n';
  }
  return out.str();
}

}  // namespace dmasum
