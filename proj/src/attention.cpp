/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include "dmasum/attention.hpp"

#include <cmath>
#include <sstream>

#include "dmasum/errors.hpp"

namespace dmasum {

Projections project_qkv(const Matrix& features, const Matrix& w_query, const Matrix& w_key,
                        const Matrix& w_value) {
  for (const Matrix* w : {&w_query, &w_key, &w_value}) {
    if (w->cols() != features.cols()) {
      throw ShapeError("project_qkv: weight " + w->shape_string() + " vs features " +
                       features.shape_string());
    }
  }
  const Matrix frames = transpose(features);
  return {matmul(w_query, frames), matmul(w_key, frames), matmul(w_value, frames)};
}

Matrix scaled_attention(const Matrix& keys, const Matrix& queries) {
  if (!keys.same_shape(queries)) {
    throw ShapeError("scaled_attention: keys " + keys.shape_string() + " vs queries " +
                     queries.shape_string());
  }
  const double factor = 1.0 / std::sqrt(static_cast<double>(keys.rows()));
  return row_softmax(scale(matmul(transpose(keys), queries), factor));
}

Matrix associated_query(const Matrix& queries, const Matrix& w_associated) {
  Matrix q = matmul(w_associated, queries);
  for (double& v : q.data()) v = std::tanh(v);
  return q;
}

Matrix associated_attention(const Matrix& keys, const Matrix& queries,
                            const Matrix& w_associated) {
  return scaled_attention(keys, associated_query(queries, w_associated));
}

MixtureOutput mixture_attention(const Matrix& standard, const Matrix& associated,
                                const Matrix& values, bool renormalize_rows) {
  if (!standard.same_shape(associated) || standard.rows() != standard.cols()) {
    throw ShapeError("mixture_attention: maps " + standard.shape_string() + " and " +
                     associated.shape_string());
  }
  Matrix mixture = matmul(standard, transpose(associated));
  if (renormalize_rows) {
    for (std::size_t i = 0; i < mixture.rows(); ++i) {
      double total = 0.0;
      for (double v : mixture.row(i)) total += v;
      for (double& v : mixture.row(i)) v /= total;
    }
  }
  Matrix output = matmul(values, mixture);
  return {std::move(mixture), std::move(output)};
}

Matrix glorot_uniform(std::size_t rows, std::size_t cols, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-limit, limit);
  return m;
}

LayerStack add_layer_stack(ParameterVector& params, const std::string& prefix,
                           const StackOptions& options, SeededRng& rng) {
  if (options.layers == 0) throw InputError("add_layer_stack: at least one layer required");
  if (options.model_width == 0 || options.attention_width == 0) {
    throw InputError("add_layer_stack: widths must be positive");
  }
  LayerStack stack;
  stack.model_width = options.model_width;
  stack.attention_width = options.attention_width;
  stack.dropout = options.dropout;
  stack.plain_softmax = options.plain_softmax;
  stack.renormalize_rows = options.renormalize_rows;
  const std::size_t dm = options.model_width;
  const std::size_t da = options.attention_width;
  for (std::size_t l = 0; l < options.layers; ++l) {
    const std::string base = prefix + "." + std::to_string(l) + ".";
    AttentionLayerSlots slots;
    slots.w_query = params.add(base + "w_q", glorot_uniform(da, dm, rng));
    slots.w_key = params.add(base + "w_k", glorot_uniform(da, dm, rng));
    slots.w_value = params.add(base + "w_v", glorot_uniform(da, dm, rng));
    if (!options.plain_softmax) {
      slots.w_associated = params.add(base + "w_qhat", glorot_uniform(da, da, rng));
    }
    slots.w_output = params.add(base + "w_o", glorot_uniform(dm, da, rng));
    slots.norm_gain = params.add(base + "ln_gain", Matrix(1, dm, 1.0));
    slots.norm_bias = params.add(base + "ln_bias", Matrix(1, dm, 0.0));
    stack.layers.push_back(slots);
  }
  return stack;
}

Var attention_sublayer(Tape& tape, const ParameterVector& params, const LayerStack& stack,
                       const AttentionLayerSlots& slots, Var input, AttentionMaps* capture) {
  if (tape.value(input).cols() != stack.model_width) {
    throw ShapeError("attention_sublayer: input " + tape.value(input).shape_string() +
                     " does not have model width " + std::to_string(stack.model_width));
  }
  const double factor = 1.0 / std::sqrt(static_cast<double>(stack.attention_width));
  const Var frames = tape.transpose(input);
  const Var queries = tape.matmul(tape.parameter(params, slots.w_query), frames);
  const Var keys = tape.matmul(tape.parameter(params, slots.w_key), frames);
  const Var values = tape.matmul(tape.parameter(params, slots.w_value), frames);
  const Var keys_t = tape.transpose(keys);
  const Var standard = tape.row_softmax(tape.scale(tape.matmul(keys_t, queries), factor));

  Var mixing = standard;
  if (!stack.plain_softmax) {
    if (!slots.w_associated) throw StateError("attention_sublayer: missing associated query");
    const Var assoc_q =
        tape.tanh(tape.matmul(tape.parameter(params, *slots.w_associated), queries));
    const Var associated = tape.row_softmax(tape.scale(tape.matmul(keys_t, assoc_q), factor));
    mixing = tape.matmul(standard, tape.transpose(associated));
    if (stack.renormalize_rows) mixing = tape.row_normalize(mixing);
    if (capture != nullptr) capture->associated = tape.value(associated);
  }
  if (capture != nullptr) {
    capture->standard = tape.value(standard);
    capture->mixture = tape.value(mixing);
    if (stack.plain_softmax) capture->associated = Matrix();
  }
  const Var z = tape.matmul(values, mixing);
  return tape.transpose(tape.matmul(tape.parameter(params, slots.w_output), z));
}

Var stacked_forward(Tape& tape, const ParameterVector& params, const LayerStack& stack, Var input,
                    SeededRng* dropout_rng, std::vector<AttentionMaps>* capture) {
  const double rate = dropout_rng != nullptr ? stack.dropout : 0.0;
  SeededRng unused(0);
  Var z = input;
  for (const auto& slots : stack.layers) {
    AttentionMaps maps;
    Var attended = attention_sublayer(tape, params, stack, slots, z, capture ? &maps : nullptr);
    attended = tape.dropout(attended, rate, dropout_rng ? *dropout_rng : unused);
    z = tape.layer_norm(tape.add(attended, z), tape.parameter(params, slots.norm_gain),
                        tape.parameter(params, slots.norm_bias), stack.norm_eps);
    if (capture != nullptr) capture->push_back(std::move(maps));
  }
  return z;
}

std::string_view rank_mode_name(RankMode mode) { return mode == RankMode::kLog ? "log" : "raw"; }

RankMode parse_rank_mode(std::string_view text) {
  if (text == "raw") return RankMode::kRaw;
  if (text == "log") return RankMode::kLog;
  throw InputError("unknown rank mode '" + std::string(text) + "'");
}

std::size_t rank_bucket_index(std::size_t difference) {
  if (difference <= 3) return 0;
  if (difference <= 7) return 1;
  if (difference <= 11) return 2;
  return 3;
}

std::string_view rank_bucket(std::size_t difference) {
  return kRankBuckets[rank_bucket_index(difference)];
}

RankDiagnostic rank_diagnose(const Matrix& map, RankMode mode, double rel_tol) {
  if (map.rows() != map.cols()) throw ShapeError("rank_diagnose: map must be square");
  RankDiagnostic d;
  d.frames = map.rows();
  d.rel_tol = rel_tol;
  if (mode == RankMode::kLog) {
    for (double v : map.data()) {
      if (!(v > 0.0)) throw NumericError("rank_diagnose: log mode needs positive entries");
    }
    d.rank = numerical_rank(elementwise_log(map), rel_tol);
  } else {
    d.rank = numerical_rank(map, rel_tol);
  }
  d.difference = d.frames - d.rank;
  d.bucket = rank_bucket(d.difference);
  return d;
}

std::string rank_csv(const std::vector<RankRecord>& records) {
  std::ostringstream out;
  out << "video_id,T,rank,diff,bucket\n";
  for (const auto& r : records) {
    out << r.video_id << ',' << r.diagnostic.frames << ',' << r.diagnostic.rank << ','
        << r.diagnostic.difference << ',' << r.diagnostic.bucket << '\n';
  }
  return out.str();
}

std::array<std::size_t, 4> rank_histogram(const std::vector<RankRecord>& records) {
  std::array<std::size_t, 4> counts{};
  for (const auto& r : records) ++counts[rank_bucket_index(r.diagnostic.difference)];
  return counts;
}

}  // namespace dmasum
