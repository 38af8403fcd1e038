// Copyright 2026 The LGS Authors
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

// Dense 2-D arrays with a reverse-mode tape.
//
// Every value lives on a Tape as a node. Primitives compute their result
// eagerly and, when the tape is recording, register a closure that pushes
// the output gradient back onto their operands. gradient() walks the nodes
// once in reverse creation order, which is a valid topological order since
// operands always precede results.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lgs::diffnum {

class Array {
 public:
  Array() = default;
  Array(std::size_t rows, std::size_t cols, double fill = 0.0);
  Array(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Array scalar(double v) { return Array(1, 1, v); }
  static Array row(std::vector<double> v);
  static Array column(std::vector<double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::string shape_string() const;

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double item() const;
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }
  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  const std::vector<double>& values() const { return data_; }

  bool operator==(const Array&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Named learnable tensors. `group` is a caller-defined tag (the model uses it
// to separate encoder and decoder parameters).
class ParamSet {
 public:
  std::size_t add(std::string name, Array value, int group = 0);
  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Array& value(std::size_t i) const { return values_[i]; }
  Array& value(std::size_t i) { return values_[i]; }
  int group(std::size_t i) const { return groups_[i]; }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t scalar_count() const;

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Array> values_;
  std::vector<int> groups_;
};

// Indexed by parameter id; a 0x0 entry means the output does not depend on it.
using Gradients = std::vector<Array>;

void accumulate(Gradients& into, const Gradients& from, double scale = 1.0);
Gradients zeros_like(const ParamSet& params);
bool all_finite(const Gradients& g);

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Array& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

using Mask = std::shared_ptr<const std::vector<std::uint8_t>>;

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Array value);
  Var parameter(std::size_t param_id, Array value);

  const Array& value(std::uint32_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  // Discards every node created after `mark`; used to keep rollout tapes
  // bounded. Parameters registered after `mark` are dropped too.
  std::size_t mark() const { return nodes_.size(); }
  void rewind(std::size_t mark);

  // d output / d parameter for every parameter id in [0, num_params).
  // Throws ContractError if `output` is not 1x1.
  Gradients gradient(Var output, std::size_t num_params);

  // Primitive plumbing.
  template <class F>
  Var push(Array value, F&& backward) {
    Node node{std::move(value), {}};
    if (record_) node.backward = Backward(std::forward<F>(backward));
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }
  const Array& grad(std::uint32_t id) const { return grads_[id]; }
  // Gradient slot of `id`, zero-initialised on first use.
  Array& grad_slot(std::uint32_t id);

 private:
  struct Node {
    Array value;
    Backward backward;
  };
  bool record_;
  std::vector<Node> nodes_;
  std::vector<Array> grads_;
  std::vector<std::pair<std::uint32_t, std::size_t>> params_;
};

// ---- primitives -----------------------------------------------------------
// Shape mismatches throw ShapeError naming the primitive.

Var matmul(Var a, Var b);     // [m x k] * [k x n]
Var matmul_nt(Var a, Var b);  // [m x k] * [n x k]^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);        // elementwise
Var add_row(Var a, Var row);  // row [1 x c] added to every row of a
Var mul_row(Var a, Var row);  // row [1 x c] multiplied into every row of a
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var gather_rows(Var a, std::span<const int> rows);
Var pick(Var a, std::span<const int> cols);  // [r x c] -> [r x 1], a(i, cols[i])
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
// Row-wise softmax over entries whose mask byte is non-zero. Masked entries
// are exactly 0 in the output and receive exactly 0 gradient. Every row must
// have at least one admissible entry.
Var masked_softmax(Var a, const Mask& mask);
Var softmax(Var a);
Var sum(Var a);                     // -> [1 x 1]
Var sum_axis(Var a, int axis);      // axis 0: -> [1 x c]; axis 1: -> [r x 1]
Var mean_axis(Var a, int axis);
// [r x 1] -> [s x 1]: consecutive blocks of `lengths[j]` rows summed.
Var segment_sum(Var a, std::span<const int> lengths);
// Per-column standardisation over rows, then gamma * xhat + beta.
Var instance_norm(Var a, Var gamma, Var beta, double eps);

// Scaled dot-product attention over `heads` column blocks of q/k/v.
// q [r x d], k/v [n x d]; mask (optional) is r x n. Returns [r x d], heads
// concatenated in order.
Var attention(Var q, Var k, Var v, int heads, const Mask& mask = nullptr);

// Full multi-head attention: projections, attention and output projection.
Var multi_head_attention(Var queries, Var keys_values, Var w_q, Var w_k,
                         Var w_v, Var w_o, int heads,
                         const Mask& mask = nullptr);

}  // namespace lgs::diffnum
