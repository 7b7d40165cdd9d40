/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include "dmasum/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dmasum/errors.hpp"

namespace dmasum {

// ---------------------------------------------------------------------------
// ParameterVector

std::size_t ParameterVector::add(std::string name, Matrix value) {
  if (index_of(name)) throw InputError("ParameterVector: duplicate name " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParameterVector::element_count() const {
  std::size_t n = 0;
  for (const auto& m : values_) n += m.size();
  return n;
}

std::optional<std::size_t> ParameterVector::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<double> ParameterVector::flatten() const {
  std::vector<double> flat;
  flat.reserve(element_count());
  for (const auto& m : values_) flat.insert(flat.end(), m.data().begin(), m.data().end());
  return flat;
}

void ParameterVector::unflatten(std::span<const double> flat) {
  if (flat.size() != element_count()) {
    throw ShapeError("ParameterVector::unflatten: expected " + std::to_string(element_count()) +
                     " values, got " + std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for (auto& m : values_) {
    std::copy_n(flat.begin() + offset, m.size(), m.data().begin());
    offset += m.size();
  }
}

ParameterVector ParameterVector::zeros_like() const {
  ParameterVector out;
  out.names_ = names_;
  out.values_.reserve(values_.size());
  for (const auto& m : values_) out.values_.emplace_back(m.rows(), m.cols());
  return out;
}

bool ParameterVector::same_layout(const ParameterVector& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (!values_[i].same_shape(other.values_[i])) return false;
  return true;
}

std::uint64_t ParameterVector::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < values_.size(); ++i) {
    mix(names_[i].data(), names_[i].size());
    const std::uint64_t shape[2] = {values_[i].rows(), values_[i].cols()};
    mix(shape, sizeof(shape));
    mix(values_[i].data().data(), values_[i].size() * sizeof(double));
  }
  return h;
}

void axpy(ParameterVector& y, double a, const ParameterVector& x) {
  if (!y.same_layout(x)) throw ShapeError("axpy: parameter layouts differ");
  for (std::size_t i = 0; i < y.count(); ++i) {
    auto yd = y[i].data();
    auto xd = x[i].data();
    for (std::size_t k = 0; k < yd.size(); ++k) yd[k] += a * xd[k];
  }
}

ParameterVector difference(const ParameterVector& a, const ParameterVector& b) {
  if (!a.same_layout(b)) throw ShapeError("difference: parameter layouts differ");
  ParameterVector out = a;
  for (std::size_t i = 0; i < out.count(); ++i) {
    auto od = out[i].data();
    auto bd = b[i].data();
    for (std::size_t k = 0; k < od.size(); ++k) od[k] -= bd[k];
  }
  return out;
}

double l2_norm(const ParameterVector& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.count(); ++i)
    for (double v : p[i].data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const ParameterVector& p) {
  double best = 0.0;
  for (std::size_t i = 0; i < p.count(); ++i) best = std::max(best, max_abs(p[i]));
  return best;
}

bool all_finite(const ParameterVector& p) {
  for (std::size_t i = 0; i < p.count(); ++i)
    if (!p[i].all_finite()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Tape

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kInput: return "input";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSubtract: return "subtract";
    case OpKind::kScale: return "scale";
    case OpKind::kHadamard: return "hadamard";
    case OpKind::kAddRowBroadcast: return "add_row_broadcast";
    case OpKind::kConcatColumns: return "concat_columns";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kSliceRows: return "slice_rows";
    case OpKind::kSliceColumns: return "slice_columns";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kRowSoftmax: return "row_softmax";
    case OpKind::kRowNormalize: return "row_normalize";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kDropout: return "dropout";
    case OpKind::kMse: return "mse";
    case OpKind::kSumSquares: return "sum_squares";
  }
  return "unknown";
}

Var Tape::push(Node node) {
  if (backward_done_) throw StateError("Tape: cannot record after backward()");
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw StateError("Tape: variable does not belong to this tape");
  return nodes_[v.id];
}

const Matrix& Tape::value(Var v) const { return node(v).value(); }

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Matrix(n.value().rows(), n.value().cols());
  return n.grad;
}

Var Tape::constant(Matrix value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Matrix value) {
  Node n;
  n.kind = OpKind::kInput;
  n.owned = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(const ParameterVector& params, std::size_t index) {
  if (index >= params.count()) throw InputError("Tape::parameter: index out of range");
  Node n;
  n.kind = OpKind::kParameter;
  n.ref = &params[index];
  n.owner = &params;
  n.param_index = index;
  n.needs_grad = true;
  return push(std::move(n));
}

namespace {

Matrix apply(const Matrix& x, double (*f)(double)) {
  Matrix out = x;
  for (double& v : out.data()) v = f(v);
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double relu_scalar(double x) { return x > 0.0 ? x : 0.0; }
double tanh_scalar(double x) { return std::tanh(x); }

}  // namespace

Var Tape::matmul(Var a, Var b) {
  Node n;
  n.kind = OpKind::kMatmul;
  n.owned = dmasum::matmul(value(a), value(b));
  n.inputs = {a.id, b.id};
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  Node n;
  n.kind = OpKind::kAdd;
  n.owned = dmasum::add(value(a), value(b));
  n.inputs = {a.id, b.id};
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(n));
}

Var Tape::subtract(Var a, Var b) {
  Node n;
  n.kind = OpKind::kSubtract;
  n.owned = dmasum::subtract(value(a), value(b));
  n.inputs = {a.id, b.id};
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  Node n;
  n.kind = OpKind::kScale;
  n.owned = dmasum::scale(value(a), factor);
  n.scalar = factor;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::hadamard(Var a, Var b) {
  Node n;
  n.kind = OpKind::kHadamard;
  n.owned = dmasum::hadamard(value(a), value(b));
  n.inputs = {a.id, b.id};
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(n));
}

Var Tape::add_row_broadcast(Var x, Var row) {
  const Matrix& xv = value(x);
  const Matrix& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw ShapeError("add_row_broadcast: " + xv.shape_string() + " + " + rv.shape_string());
  }
  Node n;
  n.kind = OpKind::kAddRowBroadcast;
  n.owned = xv;
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto o = n.owned.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += rv(0, j);
  }
  n.inputs = {x.id, row.id};
  n.needs_grad = node(x).needs_grad || node(row).needs_grad;
  return push(std::move(n));
}

Var Tape::concat_columns(Var a, Var b) {
  Node n;
  n.kind = OpKind::kConcatColumns;
  n.owned = dmasum::concat_columns(value(a), value(b));
  n.inputs = {a.id, b.id};
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(n));
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += value(p).rows();
  }
  Node n;
  n.kind = OpKind::kConcatRows;
  n.owned = Matrix(rows, cols);
  std::size_t r = 0;
  for (Var p : parts) {
    const Matrix& pv = value(p);
    std::copy(pv.data().begin(), pv.data().end(), n.owned.data().begin() + r * cols);
    r += pv.rows();
    n.inputs.push_back(p.id);
    n.needs_grad = n.needs_grad || node(p).needs_grad;
  }
  return push(std::move(n));
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Matrix& av = value(a);
  if (begin >= end || end > av.rows()) throw ShapeError("slice_rows: bad range");
  Node n;
  n.kind = OpKind::kSliceRows;
  n.owned = Matrix(end - begin, av.cols());
  std::copy(av.data().begin() + begin * av.cols(), av.data().begin() + end * av.cols(),
            n.owned.data().begin());
  n.begin = begin;
  n.end = end;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::slice_columns(Var a, std::size_t begin, std::size_t end) {
  const Matrix& av = value(a);
  if (begin >= end || end > av.cols()) throw ShapeError("slice_columns: bad range");
  Node n;
  n.kind = OpKind::kSliceColumns;
  n.owned = Matrix(av.rows(), end - begin);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) n.owned(i, j - begin) = av(i, j);
  n.begin = begin;
  n.end = end;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  Node n;
  n.kind = OpKind::kTranspose;
  n.owned = dmasum::transpose(value(a));
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::row_softmax(Var a) {
  Node n;
  n.kind = OpKind::kRowSoftmax;
  n.owned = dmasum::row_softmax(value(a));
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::row_normalize(Var a) {
  const Matrix& av = value(a);
  Node n;
  n.kind = OpKind::kRowNormalize;
  n.owned = av;
  n.aux_vec.resize(av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double total = 0.0;
    for (double v : av.row(i)) total += v;
    if (!(total > 0.0)) throw NumericError("row_normalize: non-positive row sum");
    n.aux_vec[i] = total;
    for (double& v : n.owned.row(i)) v /= total;
  }
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.kind = OpKind::kTanh;
  n.owned = apply(value(a), tanh_scalar);
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.kind = OpKind::kSigmoid;
  n.owned = apply(value(a), sigmoid_scalar);
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Node n;
  n.kind = OpKind::kRelu;
  n.owned = apply(value(a), relu_scalar);
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = value(x);
  const Matrix& g = value(gain);
  const Matrix& b = value(bias);
  if (g.rows() != 1 || b.rows() != 1) throw ShapeError("layer_norm: gain/bias must be rows");
  Node n;
  n.kind = OpKind::kLayerNorm;
  n.owned = layer_normalize(xv, g.row(0), b.row(0), eps);
  // Cache the normalised activations and per-row inverse deviation.
  n.aux = Matrix(xv.rows(), xv.cols());
  n.aux_vec.resize(xv.rows());
  const double cols = static_cast<double>(xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto in = xv.row(i);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= cols;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= cols;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    n.aux_vec[i] = inv_std;
    for (std::size_t j = 0; j < in.size(); ++j) n.aux(i, j) = (in[j] - mean) * inv_std;
  }
  n.scalar = eps;
  n.inputs = {x.id, gain.id, bias.id};
  n.needs_grad = node(x).needs_grad || node(gain).needs_grad || node(bias).needs_grad;
  return push(std::move(n));
}

Var Tape::dropout(Var x, double rate, SeededRng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw InputError("dropout: rate must be in [0, 1)");
  Node n;
  n.kind = OpKind::kDropout;
  n.inputs = {x.id};
  n.needs_grad = node(x).needs_grad;
  n.scalar = rate;
  n.owned = value(x);
  if (rate > 0.0) {
    const double keep_scale = 1.0 / (1.0 - rate);
    n.aux = Matrix(n.owned.rows(), n.owned.cols());
    auto mask = n.aux.data();
    auto out = n.owned.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      mask[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
      out[i] *= mask[i];
    }
  }
  return push(std::move(n));
}

Var Tape::mse(Var pred, Var target) {
  const Matrix& p = value(pred);
  const Matrix& t = value(target);
  if (!p.same_shape(t)) {
    throw ShapeError("mse: prediction " + p.shape_string() + " vs target " + t.shape_string());
  }
  if (p.empty()) throw ShapeError("mse: empty operands");
  double total = 0.0;
  auto pd = p.data();
  auto td = t.data();
  for (std::size_t i = 0; i < pd.size(); ++i) total += (pd[i] - td[i]) * (pd[i] - td[i]);
  Node n;
  n.kind = OpKind::kMse;
  n.owned = Matrix(1, 1, total / static_cast<double>(pd.size()));
  n.inputs = {pred.id, target.id};
  n.needs_grad = node(pred).needs_grad || node(target).needs_grad;
  return push(std::move(n));
}

Var Tape::sum_squares(Var a) {
  double total = 0.0;
  for (double v : value(a).data()) total += v * v;
  Node n;
  n.kind = OpKind::kSumSquares;
  n.owned = Matrix(1, 1, total);
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
  if (backward_done_) throw StateError("Tape::backward called twice without reset_gradients()");
  const Node& root = node(loss);
  if (root.value().rows() != 1 || root.value().cols() != 1) {
    throw ShapeError("Tape::backward: loss must be 1x1, got " + root.value().shape_string());
  }
  backward_done_ = true;
  if (!root.needs_grad) return;
  nodes_[loss.id].grad = Matrix(1, 1, 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.grad.empty() || n.inputs.empty()) continue;
    propagate(n);
  }
}

void Tape::reset_gradients() {
  for (auto& n : nodes_) n.grad = Matrix();
  backward_done_ = false;
}

void Tape::propagate(const Node& n) {
  const Matrix& dy = n.grad;
  auto in_value = [this, &n](std::size_t k) -> const Matrix& { return nodes_[n.inputs[k]].value(); };
  auto wants = [this, &n](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };

  switch (n.kind) {
    case OpKind::kConstant:
    case OpKind::kInput:
    case OpKind::kParameter:
      return;
    case OpKind::kMatmul:
      if (wants(0)) accumulate(n.inputs[0], dmasum::matmul(dy, dmasum::transpose(in_value(1))));
      if (wants(1)) accumulate(n.inputs[1], dmasum::matmul(dmasum::transpose(in_value(0)), dy));
      return;
    case OpKind::kAdd:
      accumulate(n.inputs[0], dy);
      accumulate(n.inputs[1], dy);
      return;
    case OpKind::kSubtract:
      accumulate(n.inputs[0], dy);
      if (wants(1)) accumulate(n.inputs[1], dmasum::scale(dy, -1.0));
      return;
    case OpKind::kScale:
      accumulate(n.inputs[0], dmasum::scale(dy, n.scalar));
      return;
    case OpKind::kHadamard:
      if (wants(0)) accumulate(n.inputs[0], dmasum::hadamard(dy, in_value(1)));
      if (wants(1)) accumulate(n.inputs[1], dmasum::hadamard(dy, in_value(0)));
      return;
    case OpKind::kAddRowBroadcast: {
      accumulate(n.inputs[0], dy);
      if (wants(1)) {
        Matrix g(1, dy.cols());
        for (std::size_t i = 0; i < dy.rows(); ++i)
          for (std::size_t j = 0; j < dy.cols(); ++j) g(0, j) += dy(i, j);
        accumulate(n.inputs[1], g);
      }
      return;
    }
    case OpKind::kConcatColumns: {
      const std::size_t left = in_value(0).cols();
      Matrix ga(dy.rows(), left);
      Matrix gb(dy.rows(), dy.cols() - left);
      for (std::size_t i = 0; i < dy.rows(); ++i) {
        for (std::size_t j = 0; j < left; ++j) ga(i, j) = dy(i, j);
        for (std::size_t j = left; j < dy.cols(); ++j) gb(i, j - left) = dy(i, j);
      }
      accumulate(n.inputs[0], ga);
      accumulate(n.inputs[1], gb);
      return;
    }
    case OpKind::kConcatRows: {
      std::size_t r = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Matrix& part = in_value(k);
        if (wants(k)) {
          Matrix g(part.rows(), part.cols());
          std::copy_n(dy.data().begin() + r * dy.cols(), part.size(), g.data().begin());
          accumulate(n.inputs[k], g);
        }
        r += part.rows();
      }
      return;
    }
    case OpKind::kSliceRows: {
      const Matrix& src = in_value(0);
      Matrix g(src.rows(), src.cols());
      std::copy(dy.data().begin(), dy.data().end(), g.data().begin() + n.begin * src.cols());
      accumulate(n.inputs[0], g);
      return;
    }
    case OpKind::kSliceColumns: {
      const Matrix& src = in_value(0);
      Matrix g(src.rows(), src.cols());
      for (std::size_t i = 0; i < dy.rows(); ++i)
        for (std::size_t j = 0; j < dy.cols(); ++j) g(i, j + n.begin) = dy(i, j);
      accumulate(n.inputs[0], g);
      return;
    }
    case OpKind::kTranspose:
      accumulate(n.inputs[0], dmasum::transpose(dy));
      return;
    case OpKind::kRowSoftmax: {
      const Matrix& y = n.value();
      Matrix g(y.rows(), y.cols());
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += dy(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) g(i, j) = y(i, j) * (dy(i, j) - dot);
      }
      accumulate(n.inputs[0], g);
      return;
    }
    case OpKind::kRowNormalize: {
      const Matrix& y = n.value();
      Matrix g(y.rows(), y.cols());
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += dy(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) g(i, j) = (dy(i, j) - dot) / n.aux_vec[i];
      }
      accumulate(n.inputs[0], g);
      return;
    }
    case OpKind::kTanh: {
      Matrix g = dy;
      auto gd = g.data();
      auto yd = n.value().data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= 1.0 - yd[i] * yd[i];
      accumulate(n.inputs[0], g);
      return;
    }
    case OpKind::kSigmoid: {
      Matrix g = dy;
      auto gd = g.data();
      auto yd = n.value().data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= yd[i] * (1.0 - yd[i]);
      accumulate(n.inputs[0], g);
      return;
    }
    case OpKind::kRelu: {
      Matrix g = dy;
      auto gd = g.data();
      auto xd = in_value(0).data();
      for (std::size_t i = 0; i < gd.size(); ++i)
        if (!(xd[i] > 0.0)) gd[i] = 0.0;
      accumulate(n.inputs[0], g);
      return;
    }
    case OpKind::kLayerNorm: {
      const Matrix& xhat = n.aux;
      const Matrix& gain = in_value(1);
      const std::size_t rows = xhat.rows();
      const std::size_t cols = xhat.cols();
      if (wants(1) || wants(2)) {
        Matrix g_gain(1, cols);
        Matrix g_bias(1, cols);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) {
            g_gain(0, j) += dy(i, j) * xhat(i, j);
            g_bias(0, j) += dy(i, j);
          }
        }
        accumulate(n.inputs[1], g_gain);
        accumulate(n.inputs[2], g_bias);
      }
      if (wants(0)) {
        Matrix gx(rows, cols);
        const double inv_cols = 1.0 / static_cast<double>(cols);
        for (std::size_t i = 0; i < rows; ++i) {
          double mean_g = 0.0;
          double mean_gx = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gh = dy(i, j) * gain(0, j);
            mean_g += gh;
            mean_gx += gh * xhat(i, j);
          }
          mean_g *= inv_cols;
          mean_gx *= inv_cols;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gh = dy(i, j) * gain(0, j);
            gx(i, j) = n.aux_vec[i] * (gh - mean_g - xhat(i, j) * mean_gx);
          }
        }
        accumulate(n.inputs[0], gx);
      }
      return;
    }
    case OpKind::kDropout:
      if (n.scalar > 0.0) {
        accumulate(n.inputs[0], dmasum::hadamard(dy, n.aux));
      } else {
        accumulate(n.inputs[0], dy);
      }
      return;
    case OpKind::kMse: {
      const Matrix& p = in_value(0);
      const Matrix& t = in_value(1);
      const double factor = 2.0 * dy(0, 0) / static_cast<double>(p.size());
      Matrix g(p.rows(), p.cols());
      auto gd = g.data();
      auto pd = p.data();
      auto td = t.data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] = factor * (pd[i] - td[i]);
      if (wants(0)) accumulate(n.inputs[0], g);
      if (wants(1)) accumulate(n.inputs[1], dmasum::scale(g, -1.0));
      return;
    }
    case OpKind::kSumSquares:
      accumulate(n.inputs[0], dmasum::scale(in_value(0), 2.0 * dy(0, 0)));
      return;
  }
}

ParameterVector Tape::parameter_gradients(const ParameterVector& params) const {
  ParameterVector out = params.zeros_like();
  for (const Node& n : nodes_) {
    if (n.kind != OpKind::kParameter || n.owner != &params || n.grad.empty()) continue;
    auto dst = out[n.param_index].data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return out;
}

// ---------------------------------------------------------------------------

GradientCheckReport finite_diff_check(const Objective& objective, const ParameterVector& params,
                                      double h) {
  if (!(h > 0.0)) throw InputError("finite_diff_check: h must be positive");
  ParameterVector analytic = params.zeros_like();
  objective(params, &analytic);

  GradientCheckReport report;
  ParameterVector probe = params;
  for (std::size_t p = 0; p < probe.count(); ++p) {
    auto values = probe[p].data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double original = values[k];
      values[k] = original + h;
      const double up = objective(probe, nullptr);
      values[k] = original - h;
      const double down = objective(probe, nullptr);
      values[k] = original;

      const double fd = (up - down) / (2.0 * h);
      const double ad = analytic[p].data()[k];
      const double denom = std::max({std::abs(ad), std::abs(fd), 1e-8});
      const double rel = std::abs(ad - fd) / denom;
      ++report.checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = params.name(p);
        report.worst_index = k;
        report.autodiff_value = ad;
        report.finite_diff_value = fd;
      }
    }
  }
  return report;
}

}  // namespace dmasum
