/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dmasum/attention.hpp"
#include "dmasum/autodiff.hpp"
#include "dmasum/matrix.hpp"

namespace dmasum {

enum class Channel { kDual, kVisual, kSequential };

std::string_view channel_name(Channel channel);
Channel parse_channel(std::string_view text);

struct ModelConfig {
  std::size_t feature_dim = 64;
  std::size_t attention_width = 32;
  std::size_t lstm_hidden = 32;
  std::size_t lstm_layers = 2;
  std::size_t head_hidden = 64;
  std::size_t visual_layers = 4;
  std::size_t sequential_layers = 2;
  double dropout = 0.0;
  Channel channel = Channel::kDual;
  bool plain_softmax = false;
  bool renormalize_rows = false;

  // Small widths that keep finite-difference checks fast.
  static ModelConfig desk_scale();
  // 1024-d features, attention width 1024, two 512-unit LSTM layers, a
  // 1024-unit score head, four visual and two sequential layers.
  static ModelConfig full_scale();

  bool uses_visual() const { return channel != Channel::kSequential; }
  bool uses_sequential() const { return channel != Channel::kVisual; }

  // Throws InputError on zero widths or an out-of-range dropout rate.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LstmDirectionSlots {
  std::size_t w_input = 0;      // in x 4h, gate blocks ordered input|forget|cell|output
  std::size_t w_recurrent = 0;  // h x 4h
  std::size_t bias = 0;         // 1 x 4h
};

struct BiLstmLayout {
  std::size_t hidden = 0;
  // [layer][0 = forward, 1 = backward]
  std::vector<std::array<LstmDirectionSlots, 2>> layers;
};

struct ScoreHeadSlots {
  std::size_t w_hidden = 0;  // in x hidden
  std::size_t b_hidden = 0;
  std::size_t w_out = 0;  // hidden x 1
  std::size_t b_out = 0;
};

struct ForwardCapture {
  std::vector<AttentionMaps> visual;
  std::vector<AttentionMaps> sequential;
};

// Bidirectional LSTM over T x in features; returns T x 2h (forward states
// then backward states). Zero initial states.
Var sequential_encode(Tape& tape, const ParameterVector& params, const BiLstmLayout& layout,
                      Var features);

// Appends a freshly initialised bidirectional LSTM to params.
BiLstmLayout add_bilstm(ParameterVector& params, const std::string& prefix, std::size_t input_dim,
                        std::size_t hidden, std::size_t layers, SeededRng& rng);

// The dual-channel network: architecture plus its own parameter set. Forward
// passes accept any ParameterVector with the same layout, so optimisers can
// work on copies.
class DmaSumModel {
 public:
  DmaSumModel(const ModelConfig& config, std::uint64_t seed);

  // Rebuilds the architecture for `config` and adopts `params`, which must
  // match its layout exactly.
  static DmaSumModel from_parameters(const ModelConfig& config, ParameterVector params);

  const ModelConfig& config() const { return config_; }
  const ParameterVector& parameters() const { return params_; }
  ParameterVector& parameters() { return params_; }

  // T x 1 scores in (0, 1). A null dropout_rng runs without dropout.
  Var forward(Tape& tape, const ParameterVector& params, const Matrix& features,
              SeededRng* dropout_rng = nullptr, ForwardCapture* capture = nullptr) const;

  std::vector<double> predict(const Matrix& features, const ParameterVector& params) const;
  std::vector<double> predict(const Matrix& features) const { return predict(features, params_); }

  ForwardCapture attention_maps(const Matrix& features) const;

  const LayerStack& visual_stack() const { return visual_; }
  const LayerStack& sequential_stack() const { return sequential_; }
  const BiLstmLayout& lstm() const { return lstm_; }

 private:
  DmaSumModel() = default;
  void build(SeededRng& rng);

  ModelConfig config_;
  ParameterVector params_;
  LayerStack visual_;
  LayerStack sequential_;
  BiLstmLayout lstm_;
  ScoreHeadSlots head_;
};

// (1/T) * sum((target - pred)^2) on the tape; pred is T x 1.
Var mse_loss(Tape& tape, Var pred, const std::vector<double>& target);
double mse(const std::vector<double>& pred, const std::vector<double>& target);

// Loss of the model on one video; the dropout generator is re-seeded with
// dropout_seed on every evaluation so the objective is a pure function.
Objective make_video_objective(const DmaSumModel& model, const Matrix& features,
                               const std::vector<double>& target, std::uint64_t dropout_seed = 0);

}  // namespace dmasum
