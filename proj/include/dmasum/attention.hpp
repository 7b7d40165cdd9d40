/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmasum/autodiff.hpp"
#include "dmasum/linalg.hpp"
#include "dmasum/matrix.hpp"
#include "dmasum/rng.hpp"

namespace dmasum {

// Queries, keys and values in D_a x T layout (one column per frame).
struct Projections {
  Matrix queries;
  Matrix keys;
  Matrix values;
};

// The three T x T maps produced by one mixture-of-attention layer.
struct AttentionMaps {
  Matrix standard;    // A
  Matrix associated;  // A-hat
  Matrix mixture;     // A_moa = A * A-hat^T
};

// --- value-level building blocks --------------------------------------------

// Q = W_Q * H^T etc., where features is T x D and every weight is D_a x D.
Projections project_qkv(const Matrix& features, const Matrix& w_query, const Matrix& w_key,
                        const Matrix& w_value);

// row_softmax(K^T Q / sqrt(D_a)).
Matrix scaled_attention(const Matrix& keys, const Matrix& queries);

// Associated query tanh(W_Qhat Q), then scaled_attention against the keys.
Matrix associated_query(const Matrix& queries, const Matrix& w_associated);
Matrix associated_attention(const Matrix& keys, const Matrix& queries,
                            const Matrix& w_associated);

struct MixtureOutput {
  Matrix mixture;  // T x T
  Matrix output;   // D_a x T, V * A_moa
};

// A_moa = A * A-hat^T is not row-stochastic; renormalize_rows rescales it.
MixtureOutput mixture_attention(const Matrix& standard, const Matrix& associated,
                                const Matrix& values, bool renormalize_rows = false);

// --- trainable stacks ---------------------------------------------------------

// Parameter slots of one attention layer inside a ParameterVector.
struct AttentionLayerSlots {
  std::size_t w_query = 0;
  std::size_t w_key = 0;
  std::size_t w_value = 0;
  std::optional<std::size_t> w_associated;  // absent for plain-softmax layers
  std::size_t w_output = 0;                 // D_model x D_a
  std::size_t norm_gain = 0;
  std::size_t norm_bias = 0;
};

struct LayerStack {
  std::vector<AttentionLayerSlots> layers;
  std::size_t model_width = 0;
  std::size_t attention_width = 0;
  double dropout = 0.0;
  bool plain_softmax = false;
  bool renormalize_rows = false;
  double norm_eps = 1e-5;
};

struct StackOptions {
  std::size_t layers = 1;
  std::size_t model_width = 0;
  std::size_t attention_width = 0;
  double dropout = 0.0;
  bool plain_softmax = false;
  bool renormalize_rows = false;
};

// Glorot-uniform matrix in +-sqrt(6 / (fan_in + fan_out)), fan_in = cols.
Matrix glorot_uniform(std::size_t rows, std::size_t cols, SeededRng& rng);

// Appends a freshly initialised stack to params under `prefix`
// ("<prefix>.<layer>.w_q" ...). Layer-norm gains start at 1, biases at 0.
LayerStack add_layer_stack(ParameterVector& params, const std::string& prefix,
                           const StackOptions& options, SeededRng& rng);

// One attention sublayer: T x D_model in, T x D_model out (before residual).
Var attention_sublayer(Tape& tape, const ParameterVector& params, const LayerStack& stack,
                       const AttentionLayerSlots& slots, Var input,
                       AttentionMaps* capture = nullptr);

// z_n = layer_norm(dropout(attention(z_{n-1})) + z_{n-1}) for every layer.
// A null dropout_rng disables dropout (inference). When capture is non-null it
// receives one AttentionMaps per layer.
Var stacked_forward(Tape& tape, const ParameterVector& params, const LayerStack& stack, Var input,
                    SeededRng* dropout_rng, std::vector<AttentionMaps>* capture = nullptr);

// --- rank diagnostics -----------------------------------------------------------

enum class RankMode { kRaw, kLog };

std::string_view rank_mode_name(RankMode mode);
RankMode parse_rank_mode(std::string_view text);

inline constexpr std::array<std::string_view, 4> kRankBuckets = {"0-3", "4-7", "8-11", ">11"};

// Bucket label for a rank difference.
std::string_view rank_bucket(std::size_t difference);
std::size_t rank_bucket_index(std::size_t difference);

struct RankDiagnostic {
  std::size_t frames = 0;
  std::size_t rank = 0;
  std::size_t difference = 0;  // frames - rank
  double rel_tol = kDefaultRankTolerance;
  std::string_view bucket;
};

// Numerical rank of a T x T map (or of its elementwise log). Log mode throws
// NumericError on non-positive entries.
RankDiagnostic rank_diagnose(const Matrix& map, RankMode mode,
                             double rel_tol = kDefaultRankTolerance);

struct RankRecord {
  std::string video_id;
  RankDiagnostic diagnostic;
};

// CSV with header `video_id,T,rank,diff,bucket`.
std::string rank_csv(const std::vector<RankRecord>& records);

// Count of records per bucket, in kRankBuckets order.
std::array<std::size_t, 4> rank_histogram(const std::vector<RankRecord>& records);

}  // namespace dmasum
