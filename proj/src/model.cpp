/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include "dmasum/model.hpp"

#include "dmasum/errors.hpp"

namespace dmasum {

std::string_view channel_name(Channel channel) {
  switch (channel) {
    case Channel::kDual: return "dual";
    case Channel::kVisual: return "visual";
    case Channel::kSequential: return "sequential";
  }
  return "dual";
}

Channel parse_channel(std::string_view text) {
  if (text == "dual") return Channel::kDual;
  if (text == "visual") return Channel::kVisual;
  if (text == "sequential") return Channel::kSequential;
  throw InputError("unknown channel '" + std::string(text) + "'");
}

ModelConfig ModelConfig::desk_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.feature_dim = 1024;
  c.attention_width = 1024;
  c.lstm_hidden = 512;
  c.lstm_layers = 2;
  c.head_hidden = 1024;
  c.visual_layers = 4;
  c.sequential_layers = 2;
  return c;
}

void ModelConfig::validate() const {
  if (feature_dim == 0 || attention_width == 0 || head_hidden == 0) {
    throw InputError("model: feature_dim, attention_width and head_hidden must be positive");
  }
  if (uses_visual() && visual_layers == 0) throw InputError("model: visual_layers must be >= 1");
  if (uses_sequential() && (sequential_layers == 0 || lstm_layers == 0 || lstm_hidden == 0)) {
    throw InputError("model: sequential channel needs layers and a positive LSTM width");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw InputError("model: dropout must be in [0, 1)");
}

BiLstmLayout add_bilstm(ParameterVector& params, const std::string& prefix, std::size_t input_dim,
                        std::size_t hidden, std::size_t layers, SeededRng& rng) {
  BiLstmLayout layout;
  layout.hidden = hidden;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    std::array<LstmDirectionSlots, 2> dirs;
    for (std::size_t d = 0; d < 2; ++d) {
      const std::string base =
          prefix + "." + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
      dirs[d].w_input = params.add(base + "w_x", glorot_uniform(in, 4 * hidden, rng));
      dirs[d].w_recurrent = params.add(base + "w_h", glorot_uniform(hidden, 4 * hidden, rng));
      dirs[d].bias = params.add(base + "b", Matrix(1, 4 * hidden));
    }
    layout.layers.push_back(dirs);
    in = 2 * hidden;
  }
  return layout;
}

namespace {

// One direction of one LSTM layer; states are returned in frame order.
Var lstm_direction(Tape& tape, const ParameterVector& params, const LstmDirectionSlots& slots,
                   std::size_t hidden, Var input, bool reverse) {
  const std::size_t frames = tape.value(input).rows();
  const Var projected = tape.add_row_broadcast(
      tape.matmul(input, tape.parameter(params, slots.w_input)), tape.parameter(params, slots.bias));
  const Var recurrent = tape.parameter(params, slots.w_recurrent);

  Var h = tape.constant(Matrix(1, hidden));
  Var c = tape.constant(Matrix(1, hidden));
  std::vector<Var> states(frames);
  for (std::size_t step = 0; step < frames; ++step) {
    const std::size_t t = reverse ? frames - 1 - step : step;
    const Var pre = tape.add(tape.slice_rows(projected, t, t + 1), tape.matmul(h, recurrent));
    const Var gate_in = tape.sigmoid(tape.slice_columns(pre, 0, hidden));
    const Var gate_forget = tape.sigmoid(tape.slice_columns(pre, hidden, 2 * hidden));
    const Var candidate = tape.tanh(tape.slice_columns(pre, 2 * hidden, 3 * hidden));
    const Var gate_out = tape.sigmoid(tape.slice_columns(pre, 3 * hidden, 4 * hidden));
    c = tape.add(tape.hadamard(gate_forget, c), tape.hadamard(gate_in, candidate));
    h = tape.hadamard(gate_out, tape.tanh(c));
    states[t] = h;
  }
  return tape.concat_rows(states);
}

}  // namespace

Var sequential_encode(Tape& tape, const ParameterVector& params, const BiLstmLayout& layout,
                      Var features) {
  Var x = features;
  for (const auto& dirs : layout.layers) {
    const Var forward = lstm_direction(tape, params, dirs[0], layout.hidden, x, false);
    const Var backward = lstm_direction(tape, params, dirs[1], layout.hidden, x, true);
    x = tape.concat_columns(forward, backward);
  }
  return x;
}

DmaSumModel::DmaSumModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  SeededRng rng(seed);
  build(rng);
}

DmaSumModel DmaSumModel::from_parameters(const ModelConfig& config, ParameterVector params) {
  DmaSumModel model(config, 0);
  if (!model.params_.same_layout(params)) {
    throw ShapeError("DmaSumModel: parameter layout does not match the configuration");
  }
  model.params_ = std::move(params);
  return model;
}

void DmaSumModel::build(SeededRng& rng) {
  std::size_t head_input = 0;
  if (config_.uses_visual()) {
    StackOptions opts;
    opts.layers = config_.visual_layers;
    opts.model_width = config_.feature_dim;
    opts.attention_width = config_.attention_width;
    opts.dropout = config_.dropout;
    opts.plain_softmax = config_.plain_softmax;
    opts.renormalize_rows = config_.renormalize_rows;
    visual_ = add_layer_stack(params_, "visual", opts, rng);
    head_input += config_.feature_dim;
  }
  if (config_.uses_sequential()) {
    lstm_ = add_bilstm(params_, "lstm", config_.feature_dim, config_.lstm_hidden,
                       config_.lstm_layers, rng);
    StackOptions opts;
    opts.layers = config_.sequential_layers;
    opts.model_width = 2 * config_.lstm_hidden;
    opts.attention_width = config_.attention_width;
    opts.dropout = config_.dropout;
    opts.plain_softmax = config_.plain_softmax;
    opts.renormalize_rows = config_.renormalize_rows;
    sequential_ = add_layer_stack(params_, "sequential", opts, rng);
    head_input += 2 * config_.lstm_hidden;
  }
  head_.w_hidden = params_.add("head.w1", glorot_uniform(head_input, config_.head_hidden, rng));
  head_.b_hidden = params_.add("head.b1", Matrix(1, config_.head_hidden));
  head_.w_out = params_.add("head.w2", glorot_uniform(config_.head_hidden, 1, rng));
  head_.b_out = params_.add("head.b2", Matrix(1, 1));
}

Var DmaSumModel::forward(Tape& tape, const ParameterVector& params, const Matrix& features,
                         SeededRng* dropout_rng, ForwardCapture* capture) const {
  if (features.cols() != config_.feature_dim) {
    throw ShapeError("DmaSumModel::forward: features " + features.shape_string() +
                     " but the model expects width " + std::to_string(config_.feature_dim));
  }
  if (features.rows() == 0) throw ShapeError("DmaSumModel::forward: empty video");
  if (&params != &params_ && !params.same_layout(params_)) {
    throw ShapeError("DmaSumModel::forward: parameter layout mismatch");
  }
  const Var input = tape.constant(features);
  Var joined{};
  bool have_joined = false;
  if (config_.uses_visual()) {
    joined = stacked_forward(tape, params, visual_, input, dropout_rng,
                             capture ? &capture->visual : nullptr);
    have_joined = true;
  }
  if (config_.uses_sequential()) {
    const Var encoded = sequential_encode(tape, params, lstm_, input);
    const Var attended = stacked_forward(tape, params, sequential_, encoded, dropout_rng,
                                         capture ? &capture->sequential : nullptr);
    joined = have_joined ? tape.concat_columns(joined, attended) : attended;
  }
  const Var hidden = tape.relu(tape.add_row_broadcast(
      tape.matmul(joined, tape.parameter(params, head_.w_hidden)),
      tape.parameter(params, head_.b_hidden)));
  const Var logits = tape.add_row_broadcast(tape.matmul(hidden, tape.parameter(params, head_.w_out)),
                                            tape.parameter(params, head_.b_out));
  return tape.sigmoid(logits);
}

std::vector<double> DmaSumModel::predict(const Matrix& features,
                                         const ParameterVector& params) const {
  Tape tape;
  const Var scores = forward(tape, params, features, nullptr);
  const auto data = tape.value(scores).data();
  return {data.begin(), data.end()};
}

ForwardCapture DmaSumModel::attention_maps(const Matrix& features) const {
  Tape tape;
  ForwardCapture capture;
  forward(tape, params_, features, nullptr, &capture);
  return capture;
}

Var mse_loss(Tape& tape, Var pred, const std::vector<double>& target) {
  const Matrix& p = tape.value(pred);
  if (p.cols() != 1 || p.rows() != target.size()) {
    throw ShapeError("mse_loss: prediction " + p.shape_string() + " vs target length " +
                     std::to_string(target.size()));
  }
  return tape.mse(pred, tape.constant(Matrix::column_vector(target)));
}

double mse(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw ShapeError("mse: lengths " + std::to_string(pred.size()) + " and " +
                     std::to_string(target.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (target[i] - pred[i]) * (target[i] - pred[i]);
  return total / static_cast<double>(pred.size());
}

Objective make_video_objective(const DmaSumModel& model, const Matrix& features,
                               const std::vector<double>& target, std::uint64_t dropout_seed) {
  if (features.rows() != target.size()) {
    throw ShapeError("make_video_objective: " + std::to_string(features.rows()) +
                     " frames but " + std::to_string(target.size()) + " targets");
  }
  return [&model, &features, &target, dropout_seed](const ParameterVector& params,
                                                    ParameterVector* grad) {
    Tape tape;
    SeededRng rng(dropout_seed);
    const Var loss = mse_loss(tape, model.forward(tape, params, features, &rng), target);
    const double value = tape.value(loss)(0, 0);
    if (grad != nullptr) {
      tape.backward(loss);
      *grad = tape.parameter_gradients(params);
    }
    return value;
  };
}

}  // namespace dmasum
