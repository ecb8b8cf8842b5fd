// Copyright 2026 The softprompt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "softprompt/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "softprompt/errors.hpp"
#include "softprompt/kernels.hpp"
#include "softprompt/rng.hpp"

namespace softprompt {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void check_shape(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  }
}

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->id = detail::next_node_id();
  return node;
}

// Output node for an op. Input nodes are retained only when a gradient can flow.
NodePtr make_op(const char* op, Shape shape, std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value.assign(shape_numel(node->shape), 0.0);
  node->op = op;
  for (const Tensor* t : inputs) node->requires_grad = node->requires_grad || t->requires_grad();
  if (node->requires_grad) {
    for (const Tensor* t : inputs) node->inputs.push_back(t->node_ptr());
  }
  node->id = detail::next_node_id();
  return node;
}

// Grad accumulator for input `i`, or null when that input needs no gradient.
double* input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.grad_buffer().data();
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

// Rows/cols view for row-wise ops: the last dimension is the feature axis.
std::pair<std::size_t, std::size_t> row_view(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.empty()) return {1, 1};
  const std::size_t cols = s.back();
  return {t.numel() / cols, cols};
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  NodePtr out = make_op(op, x.shape(), {&x});
  const auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = fwd(xv[i]);
  if (out->requires_grad) {
    out->backward = [deriv](Node& self) {
      double* gx = input_grad(self, 0);
      const auto& xin = self.inputs[0]->value;
      for (std::size_t i = 0; i < xin.size(); ++i) {
        gx[i] += self.grad[i] * deriv(xin[i], self.value[i]);
      }
    };
  }
  return Tensor::wrap(out);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return wrap(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return wrap(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return wrap(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return wrap(make_leaf({}, {value}, requires_grad));
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return wrap(make_leaf({n}, std::move(values), requires_grad));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return wrap(make_leaf({rows, cols}, std::move(values), requires_grad));
}

const detail::Node& Tensor::node() const {
  if (!node_) throw UsageError("use of an undefined tensor");
  return *node_;
}

detail::Node& Tensor::node() {
  if (!node_) throw UsageError("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  if (s.size() != 2) throw DimensionError("rows() needs a rank-2 tensor, got " + shape_to_string(s));
  return s[0];
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.size() != 2) throw DimensionError("cols() needs a rank-2 tensor, got " + shape_to_string(s));
  return s[1];
}

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw UsageError("only leaf tensors may be mutated in place");
  return node().value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on a tensor of shape " + shape_to_string(shape()));
  }
  return node().value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const std::size_t n = cols();
  if (r >= rows() || c >= n) throw DimensionError("index out of range");
  return node().value[r * n + c];
}

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw UsageError("requires-grad may only be toggled on leaves");
  node().requires_grad = flag;
  if (!flag) node().grad.clear();
}

void Tensor::zero_grad() { node().grad.clear(); }

Tensor Tensor::clone() const {
  return wrap(make_leaf(shape(), node().value, requires_grad()));
}

Tensor Tensor::detach() const { return wrap(make_leaf(shape(), node().value, false)); }

// ---------------------------------------------------------------------------
// Graph execution

namespace {

std::vector<Node*> reachable(const Tensor& root, bool grad_only) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{const_cast<Node*>(&root.node())};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (grad_only && !n->requires_grad) continue;
    order.push_back(n);
    for (const NodePtr& in : n->inputs) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id < b->id; });
  return order;
}

}  // namespace

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar root, got shape " + shape_to_string(loss.shape()));
  }
  Node& root = const_cast<Node&>(loss.node());
  if (root.backward_done) {
    throw UsageError("backward() already ran on this graph; call reset_graph() first");
  }
  root.backward_done = true;
  if (!root.requires_grad) return;
  std::vector<Node*> order = reachable(loss, true);
  root.grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->has_grad()) n->backward(*n);
  }
  for (Node* n : order) n->grad_buffer();
}

void reset_graph(const Tensor& root) {
  for (Node* n : reachable(root, false)) {
    n->grad.clear();
    n->backward_done = false;
  }
}

std::vector<OpRecord> trace_graph(const Tensor& root) {
  std::vector<OpRecord> records;
  for (Node* n : reachable(root, false)) {
    OpRecord r{n->op, n->id, {}};
    for (const NodePtr& in : n->inputs) r.inputs.push_back(in->id);
    records.push_back(std::move(r));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  NodePtr out = make_op("matmul", {m, n}, {&a, &b});
  kernels::active().gemm_nn(a.values().data(), b.values().data(), out->value.data(), m, k, n);
  if (out->requires_grad) {
    out->backward = [m, k, n](Node& self) {
      const auto& av = self.inputs[0]->value;
      const auto& bv = self.inputs[1]->value;
      const auto& kt = kernels::active();
      if (double* ga = input_grad(self, 0)) kt.gemm_nt(self.grad.data(), bv.data(), ga, m, n, k);
      if (double* gb = input_grad(self, 1)) kt.gemm_tn(av.data(), self.grad.data(), gb, m, k, n);
    };
  }
  return Tensor::wrap(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()) + "^T");
  }
  NodePtr out = make_op("matmul_nt", {m, n}, {&a, &b});
  kernels::active().gemm_nt(a.values().data(), b.values().data(), out->value.data(), m, k, n);
  if (out->requires_grad) {
    out->backward = [m, k, n](Node& self) {
      const auto& av = self.inputs[0]->value;
      const auto& bv = self.inputs[1]->value;
      const auto& kt = kernels::active();
      if (double* ga = input_grad(self, 0)) kt.gemm_nn(self.grad.data(), bv.data(), ga, m, n, k);
      if (double* gb = input_grad(self, 1)) kt.gemm_tn(self.grad.data(), av.data(), gb, m, n, k);
    };
  }
  return Tensor::wrap(out);
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  NodePtr out = make_op("add", a.shape(), {&a, &b});
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i];
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      for (std::size_t s = 0; s < 2; ++s) {
        if (double* g = input_grad(self, s)) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  NodePtr out = make_op("sub", a.shape(), {&a, &b});
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] - bv[i];
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      if (double* g = input_grad(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
      if (double* g = input_grad(self, 1)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  NodePtr out = make_op("mul", a.shape(), {&a, &b});
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i];
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      const auto& av = self.inputs[0]->value;
      const auto& bv = self.inputs[1]->value;
      if (double* g = input_grad(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
      }
      if (double* g = input_grad(self, 1)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      "add_scalar", x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  const auto [rows, cols] = row_view(x);
  if (bias.numel() != cols || bias.rank() != 1) {
    throw DimensionError("add_row_bias: bias " + shape_to_string(bias.shape()) +
                         " does not match rows of " + shape_to_string(x.shape()));
  }
  NodePtr out = make_op("add_row_bias", x.shape(), {&x, &bias});
  const auto xv = x.values(), bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out->value[r * cols + c] = xv[r * cols + c] + bv[c];
  }
  if (out->requires_grad) {
    out->backward = [rows, cols](Node& self) {
      if (double* g = input_grad(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
      if (double* g = input_grad(self, 1)) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        return cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Row-wise reductions

namespace {

// Max of a row for stable exponentiation; -inf entries are allowed (masked
// positions) but NaN and +inf are not, and at least one entry must be finite.
double checked_row_max(const double* row, std::size_t n, const char* op) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    const double v = row[j];
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
    if (v == std::numeric_limits<double>::infinity()) {
      throw NumericError(std::string(op) + ": +inf input");
    }
    mx = std::max(mx, v);
  }
  if (!std::isfinite(mx)) throw NumericError(std::string(op) + ": row has no finite entry");
  return mx;
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  const auto [rows, cols] = row_view(x);
  NodePtr out = make_op("softmax_rows", x.shape(), {&x});
  const double* xv = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * cols;
    double* yr = out->value.data() + r * cols;
    const double mx = checked_row_max(xr, cols, "softmax_rows");
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= total;
  }
  if (out->requires_grad) {
    out->backward = [rows, cols](Node& self) {
      double* g = input_grad(self, 0);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.value.data() + r * cols;
        const double* gy = self.grad.data() + r * cols;
        double inner = 0.0;
        for (std::size_t j = 0; j < cols; ++j) inner += gy[j] * y[j];
        for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += y[j] * (gy[j] - inner);
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor logsumexp_rows(const Tensor& x) {
  require_rank2(x, "logsumexp_rows");
  const std::size_t rows = x.rows(), cols = x.cols();
  NodePtr out = make_op("logsumexp_rows", {rows}, {&x});
  const double* xv = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * cols;
    const double mx = checked_row_max(xr, cols, "logsumexp_rows");
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(xr[j] - mx);
    out->value[r] = mx + std::log(total);
  }
  if (out->requires_grad) {
    out->backward = [rows, cols](Node& self) {
      double* g = input_grad(self, 0);
      const auto& xin = self.inputs[0]->value;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) {
          g[r * cols + j] += self.grad[r] * std::exp(xin[r * cols + j] - self.value[r]);
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto [rows, cols] = row_view(x);
  if (gain.numel() != cols || bias.numel() != cols) {
    throw DimensionError("layer_norm: gain " + shape_to_string(gain.shape()) + " / bias " +
                         shape_to_string(bias.shape()) + " do not match last dim of " +
                         shape_to_string(x.shape()));
  }
  NodePtr out = make_op("layer_norm", x.shape(), {&x, &gain, &bias});
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const double* xv = x.values().data();
  const double* gv = gain.values().data();
  const double* bv = bias.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      const double h = (xr[j] - mu) * inv_std[r];
      xhat[r * cols + j] = h;
      out->value[r * cols + j] = gv[j] * h + bv[j];
    }
  }
  if (out->requires_grad) {
    out->backward = [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
      const auto& gv = self.inputs[1]->value;
      double* gx = input_grad(self, 0);
      double* gg = input_grad(self, 1);
      double* gb = input_grad(self, 2);
      std::vector<double> dh(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gy = self.grad.data() + r * cols;
        const double* h = xhat.data() + r * cols;
        if (gg != nullptr || gb != nullptr) {
          for (std::size_t j = 0; j < cols; ++j) {
            if (gg) gg[j] += gy[j] * h[j];
            if (gb) gb[j] += gy[j];
          }
        }
        if (gx == nullptr) continue;
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          dh[j] = gy[j] * gv[j];
          mean_dh += dh[j];
          mean_dh_h += dh[j] * h[j];
        }
        mean_dh /= static_cast<double>(cols);
        mean_dh_h /= static_cast<double>(cols);
        for (std::size_t j = 0; j < cols; ++j) {
          gx[r * cols + j] += inv_std[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor dropout(const Tensor& x, double p, std::uint64_t seed, std::uint64_t tag) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (p == 0.0) return x;
  const std::uint64_t key = rng::derive({seed, tag});
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng::uniform_at(key, i) < p ? 0.0 : keep_scale;
  }
  NodePtr out = make_op("dropout", x.shape(), {&x});
  const auto xv = x.values();
  for (std::size_t i = 0; i < mask.size(); ++i) out->value[i] = xv[i] * mask[i];
  if (out->requires_grad) {
    out->backward = [mask = std::move(mask)](Node& self) {
      double* g = input_grad(self, 0);
      for (std::size_t i = 0; i < mask.size(); ++i) g[i] += self.grad[i] * mask[i];
    };
  }
  return Tensor::wrap(out);
}

Tensor cosine(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("cosine: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  const auto av = a.values(), bv = b.values();
  const double ab = kernels::dot(av, bv);
  const double na = std::sqrt(kernels::dot(av, av));
  const double nb = std::sqrt(kernels::dot(bv, bv));
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine of a zero-norm vector");
  NodePtr out = make_op("cosine", {}, {&a, &b});
  const double c = ab / (na * nb);
  out->value[0] = c;
  if (out->requires_grad) {
    out->backward = [na, nb, c](Node& self) {
      const auto& av = self.inputs[0]->value;
      const auto& bv = self.inputs[1]->value;
      const double g = self.grad[0];
      if (double* ga = input_grad(self, 0)) {
        for (std::size_t i = 0; i < av.size(); ++i) {
          ga[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
        }
      }
      if (double* gb = input_grad(self, 1)) {
        for (std::size_t i = 0; i < bv.size(); ++i) {
          gb[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor normalize_rows(const Tensor& x) {
  const auto [rows, cols] = row_view(x);
  NodePtr out = make_op("normalize_rows", x.shape(), {&x});
  std::vector<double> norms(rows);
  const double* xv = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * cols;
    const double nrm = std::sqrt(kernels::active().dot(xr, xr, cols));
    if (nrm == 0.0) {
      throw DegenerateInputError("zero-norm row " + std::to_string(r) + " cannot be normalised");
    }
    norms[r] = nrm;
    for (std::size_t j = 0; j < cols; ++j) out->value[r * cols + j] = xr[j] / nrm;
  }
  if (out->requires_grad) {
    out->backward = [rows, cols, norms = std::move(norms)](Node& self) {
      double* g = input_grad(self, 0);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.value.data() + r * cols;
        const double* gy = self.grad.data() + r * cols;
        double inner = 0.0;
        for (std::size_t j = 0; j < cols; ++j) inner += y[j] * gy[j];
        for (std::size_t j = 0; j < cols; ++j) {
          g[r * cols + j] += (gy[j] - y[j] * inner) / norms[r];
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  return matmul_nt(normalize_rows(a), normalize_rows(b));
}

Tensor sum(const Tensor& x) {
  NodePtr out = make_op("sum", {}, {&x});
  double total = 0.0;
  for (double v : x.values()) total += v;
  out->value[0] = total;
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      double* g = input_grad(self, 0);
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    };
  }
  return Tensor::wrap(out);
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  }
  check_shape(shape);
  NodePtr out = make_op("reshape", std::move(shape), {&x});
  std::copy(x.values().begin(), x.values().end(), out->value.begin());
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      double* g = input_grad(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor::wrap(out);
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_rows");
  const std::size_t cols = x.cols();
  if (count == 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_to_string(x.shape()));
  }
  NodePtr out = make_op("slice_rows", {count, cols}, {&x});
  const auto xv = x.values();
  std::copy(xv.begin() + begin * cols, xv.begin() + (begin + count) * cols, out->value.begin());
  if (out->requires_grad) {
    out->backward = [begin, cols](Node& self) {
      double* g = input_grad(self, 0) + begin * cols;
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor::wrap(out);
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (count == 0 || begin + count > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_to_string(x.shape()));
  }
  NodePtr out = make_op("slice_cols", {rows, count}, {&x});
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.begin() + r * cols + begin, count, out->value.begin() + r * count);
  }
  if (out->requires_grad) {
    out->backward = [rows, cols, begin, count](Node& self) {
      double* g = input_grad(self, 0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < count; ++j) g[r * cols + begin + j] += self.grad[r * count + j];
      }
    };
  }
  return Tensor::wrap(out);
}

namespace {

NodePtr make_concat(const char* op, Shape shape, std::span<const Tensor> parts) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value.assign(shape_numel(node->shape), 0.0);
  node->op = op;
  for (const Tensor& t : parts) node->requires_grad = node->requires_grad || t.requires_grad();
  if (node->requires_grad) {
    for (const Tensor& t : parts) node->inputs.push_back(t.node_ptr());
  }
  node->id = detail::next_node_id();
  return node;
}

}  // namespace

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Tensor& t : parts) {
    require_rank2(t, "concat_rows");
    if (t.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " + shape_to_string(parts.front().shape()) +
                           " vs " + shape_to_string(t.shape()));
    }
    rows += t.rows();
  }
  NodePtr out = make_concat("concat_rows", {rows, cols}, parts);
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    std::copy(t.values().begin(), t.values().end(), out->value.begin() + offset);
    offset += t.numel();
  }
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      std::size_t offset = 0;
      for (std::size_t s = 0; s < self.inputs.size(); ++s) {
        const std::size_t n = self.inputs[s]->value.size();
        if (double* g = input_grad(self, s)) {
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
        }
        offset += n;
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& t : parts) {
    require_rank2(t, "concat_cols");
    if (t.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_to_string(parts.front().shape()) +
                           " vs " + shape_to_string(t.shape()));
    }
    widths.push_back(t.cols());
    cols += t.cols();
  }
  NodePtr out = make_concat("concat_cols", {rows, cols}, parts);
  std::size_t offset = 0;
  for (std::size_t s = 0; s < parts.size(); ++s) {
    const auto v = parts[s].values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.begin() + r * widths[s], widths[s], out->value.begin() + r * cols + offset);
    }
    offset += widths[s];
  }
  if (out->requires_grad) {
    out->backward = [rows, cols, widths = std::move(widths)](Node& self) {
      std::size_t offset = 0;
      for (std::size_t s = 0; s < self.inputs.size(); ++s) {
        if (double* g = input_grad(self, s)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < widths[s]; ++j) {
              g[r * widths[s] + j] += self.grad[r * cols + offset + j];
            }
          }
        }
        offset += widths[s];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank2(table, "gather_rows");
  const std::size_t vocab = table.rows(), dim = table.cols();
  if (ids.empty()) throw DimensionError("gather_rows with no ids");
  for (std::size_t id : ids) {
    if (id >= vocab) {
      throw DimensionError("gather_rows: id " + std::to_string(id) + " outside table " +
                           shape_to_string(table.shape()));
    }
  }
  NodePtr out = make_op("gather_rows", {ids.size(), dim}, {&table});
  const auto tv = table.values();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::copy_n(tv.begin() + ids[r] * dim, dim, out->value.begin() + r * dim);
  }
  if (out->requires_grad) {
    out->backward = [dim, ids = std::vector<std::size_t>(ids.begin(), ids.end())](Node& self) {
      double* g = input_grad(self, 0);
      for (std::size_t r = 0; r < ids.size(); ++r) {
        for (std::size_t j = 0; j < dim; ++j) g[ids[r] * dim + j] += self.grad[r * dim + j];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor pick(const Tensor& x, std::span<const std::size_t> index) {
  require_rank2(x, "pick");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (index.size() != rows) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " +
                         shape_to_string(x.shape()));
  }
  for (std::size_t c : index) {
    if (c >= cols) throw DimensionError("pick: column index out of range");
  }
  NodePtr out = make_op("pick", {rows}, {&x});
  for (std::size_t r = 0; r < rows; ++r) out->value[r] = x.values()[r * cols + index[r]];
  if (out->requires_grad) {
    out->backward = [cols, index = std::vector<std::size_t>(index.begin(), index.end())](Node& self) {
      double* g = input_grad(self, 0);
      for (std::size_t r = 0; r < index.size(); ++r) g[r * cols + index[r]] += self.grad[r];
    };
  }
  return Tensor::wrap(out);
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double step, double tol) {
  Tensor probe = Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()),
                              true);
  Tensor y = f(probe);
  if (y.numel() != 1) throw UsageError("grad_check needs a scalar-valued function");
  backward(y);
  const std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

  std::vector<double> numeric(x.numel());
  std::vector<double> base(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += step;
    minus[i] -= step;
    const double fp = f(Tensor::from(x.shape(), std::move(plus))).item();
    const double fm = f(Tensor::from(x.shape(), std::move(minus))).item();
    numeric[i] = (fp - fm) / (2.0 * step);
  }

  double scale_floor = 0.0;
  for (double v : numeric) scale_floor = std::max(scale_floor, std::abs(v));
  scale_floor = std::max(1e-2 * scale_floor, 1e-12);

  GradCheckReport report;
  report.checked = base.size();
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), scale_floor});
    const double err = std::abs(analytic[i] - numeric[i]) / denom;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace softprompt
