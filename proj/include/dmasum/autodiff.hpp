/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmasum/matrix.hpp"
#include "dmasum/rng.hpp"

namespace dmasum {

// Ordered, named collection of trainable matrices. The order is the order of
// insertion and is the canonical flattening order.
class ParameterVector {
 public:
  std::size_t add(std::string name, Matrix value);

  std::size_t count() const { return values_.size(); }
  std::size_t element_count() const;

  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& operator[](std::size_t i) { return values_[i]; }
  const Matrix& operator[](std::size_t i) const { return values_[i]; }
  std::optional<std::size_t> index_of(const std::string& name) const;

  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  ParameterVector zeros_like() const;
  bool same_layout(const ParameterVector& other) const;

  // FNV-1a over names, shapes and the raw bytes of every value.
  std::uint64_t fingerprint() const;

  friend bool operator==(const ParameterVector& a, const ParameterVector& b) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

// y += a * x
void axpy(ParameterVector& y, double a, const ParameterVector& x);
ParameterVector difference(const ParameterVector& a, const ParameterVector& b);
double l2_norm(const ParameterVector& p);
double max_abs(const ParameterVector& p);
bool all_finite(const ParameterVector& p);

// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

enum class OpKind {
  kConstant,
  kInput,
  kParameter,
  kMatmul,
  kAdd,
  kSubtract,
  kScale,
  kHadamard,
  kAddRowBroadcast,
  kConcatColumns,
  kConcatRows,
  kSliceRows,
  kSliceColumns,
  kTranspose,
  kRowSoftmax,
  kRowNormalize,
  kTanh,
  kSigmoid,
  kRelu,
  kLayerNorm,
  kDropout,
  kMse,
  kSumSquares,
};

const char* op_name(OpKind kind);

// Reverse-mode tape. Nodes are appended in evaluation order, so the reverse of
// the append order is a valid reverse topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf without a gradient.
  Var constant(Matrix value);
  // Leaf that receives a gradient.
  Var input(Matrix value);
  // Leaf bound to params[index] by reference; params must outlive the tape.
  Var parameter(const ParameterVector& params, std::size_t index);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var subtract(Var a, Var b);
  Var scale(Var a, double factor);
  Var hadamard(Var a, Var b);
  // x (R x C) plus a 1 x C row added to every row.
  Var add_row_broadcast(Var x, Var row);
  Var concat_columns(Var a, Var b);
  Var concat_rows(std::span<const Var> parts);
  Var slice_rows(Var a, std::size_t begin, std::size_t end);
  Var slice_columns(Var a, std::size_t begin, std::size_t end);
  Var transpose(Var a);
  Var row_softmax(Var a);
  // Divides each row by its sum; rows must have positive sums.
  Var row_normalize(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  // gain and bias are 1 x C rows.
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  // Inverted dropout; rate 0 is an identity node that draws nothing.
  Var dropout(Var x, double rate, SeededRng& rng);
  // (1/N) * sum((pred - target)^2) over all N entries, as a 1x1 node.
  Var mse(Var pred, Var target);
  Var sum_squares(Var a);

  const Matrix& value(Var v) const;
  // Gradient after backward(); a zero matrix if the node was not reached.
  Matrix grad(Var v) const;
  OpKind kind(Var v) const { return nodes_[v.id].kind; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. Throws StateError when called a
  // second time without reset_gradients().
  void backward(Var loss);
  void reset_gradients();

  // Gradients for every leaf bound to `params`, summed over repeated uses.
  // Parameters that were never recorded get zero gradients.
  ParameterVector parameter_gradients(const ParameterVector& params) const;

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<std::size_t> inputs;
    Matrix owned;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool needs_grad = false;
    const ParameterVector* owner = nullptr;
    std::size_t param_index = 0;
    double scalar = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    Matrix aux;                   // dropout mask or normalised activations
    std::vector<double> aux_vec;  // per-row inverse std for layer norm

    const Matrix& value() const { return ref != nullptr ? *ref : owned; }
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void accumulate(std::size_t id, const Matrix& g);
  void propagate(const Node& n);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Loss evaluated at `params`; when grad is non-null it receives d(loss)/d(params)
// with the same layout as params.
using Objective = std::function<double(const ParameterVector& params, ParameterVector* grad)>;

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double autodiff_value = 0.0;
  double finite_diff_value = 0.0;
  std::size_t checked = 0;
};

// Central differences with step h against the objective's own gradient.
// Relative error per element is |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
GradientCheckReport finite_diff_check(const Objective& objective, const ParameterVector& params,
                                      double h = 1e-5);

}  // namespace dmasum
