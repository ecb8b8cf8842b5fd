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

// Reverse-mode automatic differentiation over dense row-major float64 arrays.
//
// A Tensor is a shared handle to a graph node. Every op allocates a fresh node
// whose id is larger than the ids of its inputs, so creation order is a
// topological order and backward() simply walks reachable nodes by descending
// id. Nodes that do not require gradients are never given a grad buffer.

#ifndef SOFTPROMPT_TENSOR_HPP_
#define SOFTPROMPT_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace softprompt {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  bool backward_done = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool has_grad() const { return !grad.empty(); }
  // Grad buffer for accumulation, allocated on first use.
  std::vector<double>& grad_buffer();
};

std::uint64_t next_node_id();

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const { return node().value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  std::uint64_t id() const { return node().id; }
  const char* op() const { return node().op; }

  std::span<const double> values() const { return node().value; }
  // Direct mutation is reserved for leaves (parameter updates, test probes).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return node().value.at(i); }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool flag);
  bool has_grad() const { return node().has_grad(); }
  std::span<const double> grad() const { return node().grad; }
  std::span<double> mutable_grad() { return node().grad; }
  void zero_grad();  // back to the null state

  bool is_leaf() const { return node().inputs.empty(); }
  // Leaf copy of the values; requires-grad flag is preserved.
  Tensor clone() const;
  // Leaf copy of the values with requires-grad off.
  Tensor detach() const;

  const detail::Node& node() const;
  detail::Node& node();
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---------------------------------------------------------------------------
// Graph execution.

// Populates gradients of every requires-grad ancestor of `loss`. The root must
// hold exactly one element. A second call on the same root without
// reset_graph() is a UsageError.
void backward(const Tensor& loss);

// Clears grads on every node reachable from `root` and re-arms backward().
void reset_graph(const Tensor& root);

struct OpRecord {
  std::string op;
  std::uint64_t output;
  std::vector<std::uint64_t> inputs;
};

// Reachable nodes of `root` in topological order (inputs before outputs).
std::vector<OpRecord> trace_graph(const Tensor& root);

// ---------------------------------------------------------------------------
// Ops. Rank-2 ops take [rows x cols] operands; "rows" ops treat the last
// dimension as the feature axis.

Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x k] * b[n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
// x[m x n] + bias[n] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
Tensor tanh(const Tensor& x);
Tensor gelu(const Tensor& x);
// max(0, x); subgradient 0 at the kink.
Tensor relu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
// log sum_j exp(x[i, j]) for each row; output [m].
Tensor logsumexp_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-12);
// Inverted dropout. The keep decision for element i is a pure function of
// (seed, tag, i); `p == 0` returns `x` unchanged.
Tensor dropout(const Tensor& x, double p, std::uint64_t seed, std::uint64_t tag);
Tensor cosine(const Tensor& a, const Tensor& b);
Tensor normalize_rows(const Tensor& x);
// Pairwise cosine similarities between rows: [m x d], [n x d] -> [m x n].
Tensor cosine_matrix(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
// Embedding lookup: table[v x d], ids -> [ids.size() x d].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// out[i] = x[i, index[i]]
Tensor pick(const Tensor& x, std::span<const std::size_t> index);

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
};

// Compares the autodiff gradient of scalar-valued `f` at `x` with central
// differences. The error of element i is |a_i - n_i| / max(|a_i|, |n_i|,
// 1e-2 * max_j |n_j|, 1e-12); the floor keeps near-zero entries from
// dominating when the rest of the gradient is large.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double step = 1e-5,
                           double tol = 1e-4);

}  // namespace softprompt

#endif  // SOFTPROMPT_TENSOR_HPP_
