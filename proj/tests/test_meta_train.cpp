/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "dmasum/errors.hpp"
#include "dmasum/meta_train.hpp"
#include "oracles.hpp"

using namespace dmasum;

namespace {

ParameterVector random_params(SeededRng& rng) {
  ParameterVector p;
  Matrix a(3, 4), b(1, 5);
  for (double& v : a.data()) v = rng.normal();
  for (double& v : b.data()) v = rng.normal();
  p.add("a", a);
  p.add("b", b);
  return p;
}

ModelConfig tiny() {
  ModelConfig c;
  c.feature_dim = 4;
  c.attention_width = 3;
  c.lstm_hidden = 3;
  c.lstm_layers = 1;
  c.head_hidden = 4;
  c.visual_layers = 1;
  c.sequential_layers = 1;
  return c;
}

std::vector<VideoTask> make_tasks(std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<VideoTask> tasks;
  for (std::size_t i = 0; i < n; ++i) {
    VideoTask t;
    t.id = "v" + std::to_string(i);
    t.features = Matrix(6, 4);
    for (double& v : t.features.data()) v = rng.normal();
    for (std::size_t k = 0; k < 6; ++k) t.target.push_back(rng.uniform());
    tasks.push_back(std::move(t));
  }
  return tasks;
}

MetaConfig fast_meta() {
  MetaConfig m;
  m.learner_rate = 0.05;
  m.meta_rate = 0.01;
  m.inner_steps = 2;
  return m;
}

}  // namespace

TEST(MetaUpdate, SgdModeIsExactInterpolation) {
  SeededRng rng(1);
  const ParameterVector theta = random_params(rng);
  const ParameterVector adapted = random_params(rng);
  MetaConfig cfg;
  cfg.optimizer = MetaOptimizer::kSgd;
  cfg.meta_rate = 0.37;
  AdamState adam;
  const ParameterVector next = meta_update(theta, adapted, cfg, adam);
  for (std::size_t p = 0; p < theta.count(); ++p) {
    for (std::size_t k = 0; k < theta[p].size(); ++k) {
      const double t = theta[p].data()[k];
      EXPECT_EQ(next[p].data()[k], t + 0.37 * (adapted[p].data()[k] - t));
    }
  }
}

TEST(MetaUpdate, IdenticalAdaptedIsIdentity) {
  SeededRng rng(2);
  const ParameterVector theta = random_params(rng);
  MetaConfig cfg;
  AdamState adam;
  cfg.optimizer = MetaOptimizer::kSgd;
  EXPECT_EQ(meta_update(theta, theta, cfg, adam), theta);
  cfg.optimizer = MetaOptimizer::kAdam;
  EXPECT_EQ(meta_update(theta, theta, cfg, adam), theta);
}

TEST(MetaUpdate, AdamMatchesReferenceOverTenSteps) {
  SeededRng rng(3);
  ParameterVector theta = random_params(rng);
  std::vector<double> ref = theta.flatten();
  oracle::ReferenceAdam ref_adam;
  MetaConfig cfg;
  cfg.meta_rate = 0.05;
  AdamState adam;
  for (int step = 0; step < 10; ++step) {
    const ParameterVector adapted = random_params(rng);
    const std::vector<double> a = adapted.flatten();
    std::vector<double> g(ref.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = ref[i] - a[i];
    ref_adam.apply(ref, g, cfg.meta_rate);
    // Keep both trajectories on the same adapted point relative to theta.
    ParameterVector shifted = adapted;
    const std::vector<double> th = theta.flatten();
    std::vector<double> target(th.size());
    for (std::size_t i = 0; i < th.size(); ++i) target[i] = th[i] - g[i];
    shifted.unflatten(target);
    theta = meta_update(theta, shifted, cfg, adam);
    const std::vector<double> got = theta.flatten();
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
  }
}

TEST(InnerLoop, ZeroStepsReturnsTheta) {
  SeededRng rng(4);
  const ParameterVector theta = random_params(rng);
  MetaConfig cfg;
  cfg.inner_steps = 0;
  const Objective f = [](const ParameterVector& p, ParameterVector* g) {
    if (g) *g = p;
    return 0.5 * l2_norm(p) * l2_norm(p);
  };
  EXPECT_EQ(learner_inner_loop(f, theta, cfg, "t").adapted, theta);
}

TEST(InnerLoop, PlainGradientDescentSteps) {
  SeededRng rng(5);
  const ParameterVector theta = random_params(rng);
  MetaConfig cfg;
  cfg.inner_steps = 3;
  cfg.learner_rate = 0.1;
  // f = 0.5 |p|^2, gradient p: each step multiplies by 0.9.
  const Objective f = [](const ParameterVector& p, ParameterVector* g) {
    if (g) *g = p;
    return 0.5 * l2_norm(p) * l2_norm(p);
  };
  const InnerLoopResult r = learner_inner_loop(f, theta, cfg, "t");
  const auto a = theta.flatten(), b = r.adapted.flatten();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], a[i] * 0.9 * 0.9 * 0.9, 1e-14);
  EXPECT_NEAR(r.final_loss, 0.5 * l2_norm(r.adapted) * l2_norm(r.adapted), 1e-14);
}

TEST(InnerLoop, NeverMutatesTheta) {
  const DmaSumModel model(tiny(), 1);
  const auto tasks = make_tasks(1, 2);
  const ParameterVector theta = model.parameters();
  const std::uint64_t before = theta.fingerprint();
  learner_inner_loop(make_video_objective(model, tasks[0].features, tasks[0].target), theta,
                     fast_meta(), "v0");
  EXPECT_EQ(theta.fingerprint(), before);
}

TEST(InnerLoop, NonFiniteLossNamesTask) {
  SeededRng rng(6);
  const ParameterVector theta = random_params(rng);
  const Objective f = [](const ParameterVector& p, ParameterVector* g) {
    if (g) *g = p.zeros_like();
    return std::nan("");
  };
  try {
    learner_inner_loop(f, theta, MetaConfig{}, "video_42");
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("video_42"), std::string::npos);
  }
}

TEST(TrainEpoch, OneUpdatePerTaskAndPermutation) {
  const DmaSumModel model(tiny(), 1);
  const auto tasks = make_tasks(5, 3);
  TrainingState state = TrainingState::start(model.parameters(), 7);
  const auto log = train_epoch(tasks, state, fast_meta(), model_objective_factory(model));
  ASSERT_EQ(log.size(), 5u);
  std::set<std::string> ids;
  for (const auto& e : log) ids.insert(e.task_id);
  EXPECT_EQ(ids.size(), 5u);
  EXPECT_EQ(state.updates, 5u);
}

TEST(TrainEpoch, PublishedRateDefaultsAccepted) {
  MetaConfig m;
  EXPECT_EQ(m.learner_rate, 3e-5);
  EXPECT_EQ(m.meta_rate, 6e-5);
  m.inner_steps = 5;
  EXPECT_NO_THROW(m.validate());
  m.learner_rate = 0.0;
  EXPECT_THROW(m.validate(), InputError);
}

TEST(TrainEpoch, DeterministicGivenSeed) {
  const DmaSumModel model(tiny(), 1);
  const auto tasks = make_tasks(4, 4);
  TrainingState a = TrainingState::start(model.parameters(), 9);
  TrainingState b = TrainingState::start(model.parameters(), 9);
  for (int e = 0; e < 2; ++e) {
    train_epoch(tasks, a, fast_meta(), model_objective_factory(model));
    train_epoch(tasks, b, fast_meta(), model_objective_factory(model));
  }
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(training_log_csv(a.log), training_log_csv(b.log));
}

TEST(BatchMeta, BatchOneReproducesTrainEpoch) {
  const DmaSumModel model(tiny(), 1);
  const auto tasks = make_tasks(6, 5);
  TrainingState a = TrainingState::start(model.parameters(), 3);
  TrainingState b = TrainingState::start(model.parameters(), 3);
  for (int e = 0; e < 2; ++e) {
    train_epoch(tasks, a, fast_meta(), model_objective_factory(model));
    batch_meta_train(tasks, b, fast_meta(), 1, model_objective_factory(model));
  }
  EXPECT_EQ(a.theta, b.theta);
}

TEST(BatchMeta, BatchThreeGivesTwoUpdatesAndDiverges) {
  const DmaSumModel model(tiny(), 1);
  const auto tasks = make_tasks(6, 5);
  TrainingState one = TrainingState::start(model.parameters(), 3);
  TrainingState three = TrainingState::start(model.parameters(), 3);
  train_epoch(tasks, one, fast_meta(), model_objective_factory(model));
  const auto log = batch_meta_train(tasks, three, fast_meta(), 3, model_objective_factory(model));
  EXPECT_EQ(log.size(), 2u);
  EXPECT_EQ(std::count(log[0].task_id.begin(), log[0].task_id.end(), '+'), 2);
  EXPECT_NE(one.theta, three.theta);
}

TEST(PlainTrain, ZeroGradientLeavesThetaUnchanged) {
  SeededRng rng(7);
  const ParameterVector theta = random_params(rng);
  TrainingState state = TrainingState::start(theta, 1);
  const TaskObjectiveFactory zero = [](const VideoTask&, std::uint64_t) -> Objective {
    return [](const ParameterVector& p, ParameterVector* g) {
      if (g) *g = p.zeros_like();
      return 0.0;
    };
  };
  plain_train(make_tasks(1, 1), state, MetaConfig{}, zero);
  EXPECT_EQ(state.theta, theta);
  EXPECT_EQ(state.updates, 1u);
}

TEST(PlainTrain, OneUpdatePerVideo) {
  const DmaSumModel model(tiny(), 1);
  const auto tasks = make_tasks(4, 8);
  TrainingState state = TrainingState::start(model.parameters(), 1);
  EXPECT_EQ(plain_train(tasks, state, fast_meta(), model_objective_factory(model)).size(), 4u);
}

TEST(TrainingLog, CsvHeaderAndRows) {
  std::vector<UpdateLogEntry> log = {{1, "a", 0.5, 0.25}};
  EXPECT_EQ(training_log_csv(log), "epoch,task_id,inner_final_loss,meta_param_delta_l2\n1,a,0.5,0.25\n");
}

TEST(TrainerKinds, NamesRoundTrip) {
  for (TrainerKind k : {TrainerKind::kSingleVideoMeta, TrainerKind::kPlain, TrainerKind::kFirstOrderMaml}) {
    EXPECT_EQ(parse_trainer_kind(trainer_kind_name(k)), k);
  }
  EXPECT_THROW(parse_trainer_kind("maml2"), InputError);
}
