/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include <gtest/gtest.h>

#include <cmath>

#include "dmasum/errors.hpp"
#include "dmasum/model.hpp"

using namespace dmasum;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, SeededRng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

ModelConfig tiny(Channel channel = Channel::kDual) {
  ModelConfig c;
  c.feature_dim = 6;
  c.attention_width = 4;
  c.lstm_hidden = 3;
  c.lstm_layers = 2;
  c.head_hidden = 5;
  c.visual_layers = 2;
  c.sequential_layers = 1;
  c.channel = channel;
  return c;
}

void expect_scores_valid(const std::vector<double>& s, std::size_t t) {
  ASSERT_EQ(s.size(), t);
  for (double v : s) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

}  // namespace

TEST(Model, OutputShapeAndRange) {
  SeededRng rng(1);
  const DmaSumModel model(tiny(), 3);
  expect_scores_valid(model.predict(random_matrix(9, 6, rng)), 9);
}

TEST(Model, DeterministicAcrossCallsAndInstances) {
  SeededRng rng(2);
  const Matrix h = random_matrix(7, 6, rng);
  const DmaSumModel a(tiny(), 11), b(tiny(), 11);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_EQ(a.predict(h), a.predict(h));
  EXPECT_EQ(a.predict(h), b.predict(h));
  const DmaSumModel c(tiny(), 12);
  EXPECT_NE(a.predict(h), c.predict(h));
}

TEST(Model, RejectsWrongFeatureWidth) {
  const DmaSumModel model(tiny(), 1);
  EXPECT_THROW(model.predict(Matrix(5, 7, 0.1)), ShapeError);
}

TEST(Model, AblationChannelsBypassTheOtherBranch) {
  SeededRng rng(3);
  const Matrix h = random_matrix(6, 6, rng);
  const DmaSumModel visual(tiny(Channel::kVisual), 1);
  const DmaSumModel sequential(tiny(Channel::kSequential), 1);
  EXPECT_FALSE(visual.parameters().index_of("lstm.0.fwd.w_x").has_value());
  EXPECT_FALSE(sequential.parameters().index_of("visual.0.w_q").has_value());
  expect_scores_valid(visual.predict(h), 6);
  expect_scores_valid(sequential.predict(h), 6);
  EXPECT_EQ(visual.attention_maps(h).sequential.size(), 0u);
  EXPECT_EQ(sequential.attention_maps(h).visual.size(), 0u);
}

TEST(Model, PlainSoftmaxUsesStandardMapInPlaceOfMixture) {
  SeededRng rng(4);
  ModelConfig cfg = tiny();
  cfg.plain_softmax = true;
  const DmaSumModel model(cfg, 2);
  const Matrix h = random_matrix(5, 6, rng);
  expect_scores_valid(model.predict(h), 5);
  const ForwardCapture maps = model.attention_maps(h);
  ASSERT_EQ(maps.visual.size(), 2u);
  EXPECT_EQ(maps.visual[0].mixture, maps.visual[0].standard);
}

TEST(Model, SequentialChannelWidthIsTwiceLstmHidden) {
  const DmaSumModel model(tiny(), 1);
  EXPECT_EQ(model.sequential_stack().model_width, 6u);
  EXPECT_EQ(model.parameters()[*model.parameters().index_of("lstm.1.bwd.w_x")].rows(), 6u);
  EXPECT_EQ(model.parameters()[*model.parameters().index_of("lstm.0.fwd.w_h")].cols(), 12u);
  EXPECT_EQ(model.parameters()[*model.parameters().index_of("head.w1")].rows(), 12u);
}

TEST(Model, FromParametersChecksLayout) {
  const DmaSumModel model(tiny(), 1);
  EXPECT_NO_THROW(DmaSumModel::from_parameters(tiny(), model.parameters()));
  EXPECT_THROW(DmaSumModel::from_parameters(tiny(Channel::kVisual), model.parameters()), ShapeError);
}

TEST(Model, DropoutOnlyDuringTraining) {
  SeededRng rng(5);
  ModelConfig cfg = tiny();
  cfg.dropout = 0.5;
  const DmaSumModel model(cfg, 1);
  const Matrix h = random_matrix(6, 6, rng);
  EXPECT_EQ(model.predict(h), model.predict(h));
  Tape t1, t2;
  SeededRng d1(1), d2(1);
  EXPECT_EQ(t1.value(model.forward(t1, model.parameters(), h, &d1)),
            t2.value(model.forward(t2, model.parameters(), h, &d2)));
}

TEST(Model, MseLossGradientClosedForm) {
  SeededRng rng(6);
  const std::vector<double> target = {0.1, 0.9, 0.4, 0.5};
  Tape tape;
  const Matrix p = Matrix{{0.3}, {0.2}, {0.7}, {0.5}};
  const Var pred = tape.input(p);
  tape.backward(mse_loss(tape, pred, target));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(tape.grad(pred)(i, 0), 2.0 / 4.0 * (p(i, 0) - target[i]), 1e-12);
  }
  EXPECT_EQ(mse({0.0, 1.0}, {1.0, 0.0}), 1.0);
  EXPECT_THROW(mse({0.0}, {1.0, 0.0}), ShapeError);
}

TEST(Model, MseMatchesIndependentAccumulation) {
  SeededRng rng(7);
  std::vector<double> a(50), b(50);
  for (std::size_t i = 0; i < 50; ++i) a[i] = rng.uniform(), b[i] = rng.uniform();
  long double acc = 0;
  for (std::size_t i = 0; i < 50; ++i) acc += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(mse(a, b), static_cast<double>(acc / 50), 1e-12);
}

// Central differences at h = 1e-5 resolve gradients only to about 1e-11 here,
// so the element-wise relative bound applies where |g| clears that floor by
// three orders of magnitude and an absolute bound applies below it.
TEST(Model, ObjectiveGradientResolvedElementsWithinRelativeBound) {
  SeededRng rng(8);
  const DmaSumModel model(tiny(), 4);
  const Matrix h = random_matrix(5, 6, rng);
  const std::vector<double> target = {0.2, 0.8, 0.5, 0.1, 0.6};
  const Objective f = make_video_objective(model, h, target);
  const ParameterVector params = model.parameters();
  ParameterVector grad;
  f(params, &grad);
  std::size_t resolved = 0;
  for (std::size_t k = 0; k < params.count(); ++k) {
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      ParameterVector probe = params;
      probe[k].data()[i] += 1e-5;
      const double up = f(probe, nullptr);
      probe[k].data()[i] = params[k].data()[i] - 1e-5;
      const double fd = (up - f(probe, nullptr)) / 2e-5;
      const double ad = grad[k].data()[i];
      if (std::max(std::abs(ad), std::abs(fd)) > 1e-8) {
        ++resolved;
        EXPECT_LT(std::abs(fd - ad) / std::max(std::abs(ad), std::abs(fd)), 1e-4) << params.name(k) << "[" << i << "]";
      } else {
        EXPECT_LT(std::abs(fd - ad), 1e-10) << params.name(k) << "[" << i << "]";
      }
    }
  }
  EXPECT_GT(resolved, params.element_count() / 2);
}

TEST(Model, ConfigValidation) {
  ModelConfig c = tiny();
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), InputError);
  c = tiny();
  c.attention_width = 0;
  EXPECT_THROW(c.validate(), InputError);
  EXPECT_EQ(parse_channel("visual"), Channel::kVisual);
  EXPECT_THROW(parse_channel("audio"), InputError);
}

TEST(Model, FullScaleConfigValues) {
  const ModelConfig c = ModelConfig::full_scale();
  EXPECT_EQ(c.attention_width, 1024u);
  EXPECT_EQ(c.visual_layers, 4u);
  EXPECT_EQ(c.sequential_layers, 2u);
}

// Roughly 45M parameters; a short clip keeps activations small.
TEST(ModelFullScale, ForwardPassOnShortClip) {
  SeededRng rng(9);
  const DmaSumModel model(ModelConfig::full_scale(), 1);
  expect_scores_valid(model.predict(random_matrix(4, 1024, rng)), 4);
}
