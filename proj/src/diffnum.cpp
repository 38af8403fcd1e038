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

#include "lgs/diffnum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lgs/errors.hpp"
#include "lgs/kernels.hpp"

namespace lgs::diffnum {

// ---- Array ----------------------------------------------------------------

Array::Array(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Array::Array(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Array: " + std::to_string(data_.size()) +
                     " values for shape [" + std::to_string(rows) + " x " +
                     std::to_string(cols) + "]");
  }
}

Array Array::row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Array(1, n, std::move(v));
}

Array Array::column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Array(n, 1, std::move(v));
}

std::string Array::shape_string() const {
  return "[" + std::to_string(rows_) + " x " + std::to_string(cols_) + "]";
}

double Array::item() const {
  if (data_.size() != 1) throw ShapeError("item: array is " + shape_string());
  return data_[0];
}

// ---- ParamSet / Gradients -------------------------------------------------

std::size_t ParamSet::add(std::string name, Array value, int group) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  groups_.push_back(group);
  return values_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

void accumulate(Gradients& into, const Gradients& from, double scale) {
  if (into.size() < from.size()) into.resize(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].empty()) continue;
    if (into[i].empty()) into[i] = Array(from[i].rows(), from[i].cols());
    auto dst = into[i].data();
    auto src = from[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

Gradients zeros_like(const ParamSet& params) {
  Gradients g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    g[i] = Array(params.value(i).rows(), params.value(i).cols());
  }
  return g;
}

bool all_finite(const Gradients& g) {
  for (const auto& a : g) {
    for (double v : a.data()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

// ---- Tape -----------------------------------------------------------------

const Array& Var::value() const { return tape->value(id); }

Var Tape::constant(Array value) { return push(std::move(value), [](Tape&, std::uint32_t) {}); }

Var Tape::parameter(std::size_t param_id, Array value) {
  Var v = push(std::move(value), [](Tape&, std::uint32_t) {});
  params_.emplace_back(v.id, param_id);
  return v;
}

void Tape::rewind(std::size_t mark) {
  nodes_.resize(std::min(mark, nodes_.size()));
  std::erase_if(params_, [&](const auto& p) { return p.first >= mark; });
}

Array& Tape::grad_slot(std::uint32_t id) {
  Array& g = grads_[id];
  if (g.empty()) g = Array(nodes_[id].value.rows(), nodes_[id].value.cols());
  return g;
}

Gradients Tape::gradient(Var output, std::size_t num_params) {
  if (output.tape != this) throw ContractError("gradient: output belongs to another tape");
  if (value(output.id).size() != 1) {
    throw ContractError("gradient: output must be a scalar, got " +
                        value(output.id).shape_string());
  }
  if (!record_) throw ContractError("gradient: tape was not recording");
  grads_.assign(nodes_.size(), Array());
  grads_[output.id] = Array::scalar(1.0);
  for (std::int64_t i = output.id; i >= 0; --i) {
    const auto id = static_cast<std::uint32_t>(i);
    if (grads_[id].empty() || !nodes_[id].backward) continue;
    nodes_[id].backward(*this, id);
  }
  Gradients out(num_params);
  for (const auto& [node, param] : params_) {
    if (param >= num_params || grads_[node].empty()) continue;
    if (out[param].empty()) {
      out[param] = grads_[node];
    } else {
      auto dst = out[param].data();
      auto src = grads_[node].data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
  grads_.clear();
  return out;
}

// ---- primitives -----------------------------------------------------------

namespace {

[[noreturn]] void shape_fail(const char* op, const Array& a, const Array& b) {
  std::ostringstream msg;
  msg << op << ": incompatible shapes " << a.shape_string() << " and " << b.shape_string();
  throw ShapeError(msg.str());
}

Tape& same_tape(const char* op, Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw ShapeError(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape;
}

template <class F>
Var unary(Var a, Array out, F&& local_grad) {
  Tape& t = *a.tape;
  return t.push(std::move(out), [a = a.id, local_grad](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    const Array& y = t.value(self);
    const Array& x = t.value(a);
    auto ga = t.grad_slot(a).data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * local_grad(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape("matmul", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Array out(m, n);
  kernels::gemm(av.data().data(), bv.data().data(), out.data().data(), m, k, n, false);
  return t.push(std::move(out), [a = a.id, b = b.id, m, k, n](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    // dA = G B^T, dB = A^T G
    kernels::gemm_nt(g.data().data(), t.value(b).data().data(),
                     t.grad_slot(a).data().data(), m, n, k, true);
    kernels::gemm_tn(t.value(a).data().data(), g.data().data(),
                     t.grad_slot(b).data().data(), m, k, n, true);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape("matmul_nt", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.cols() != bv.cols()) shape_fail("matmul_nt", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Array out(m, n);
  kernels::gemm_nt(av.data().data(), bv.data().data(), out.data().data(), m, k, n, false);
  return t.push(std::move(out), [a = a.id, b = b.id, m, k, n](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    // C = A B^T: dA = G B, dB = G^T A
    kernels::gemm(g.data().data(), t.value(b).data().data(),
                  t.grad_slot(a).data().data(), m, n, k, true);
    kernels::gemm_tn(g.data().data(), t.value(a).data().data(),
                     t.grad_slot(b).data().data(), m, n, k, true);
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape("add", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.shape() != bv.shape()) shape_fail("add", av, bv);
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.push(std::move(out), [a = a.id, b = b.id](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    for (auto id : {a, b}) {
      auto d = t.grad_slot(id).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape("sub", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.shape() != bv.shape()) shape_fail("sub", av, bv);
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.push(std::move(out), [a = a.id, b = b.id](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    auto da = t.grad_slot(a).data();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i];
    auto db = t.grad_slot(b).data();
    for (std::size_t i = 0; i < db.size(); ++i) db[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape("mul", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.shape() != bv.shape()) shape_fail("mul", av, bv);
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.push(std::move(out), [a = a.id, b = b.id](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    {
      const Array& bv = t.value(b);
      auto da = t.grad_slot(a).data();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
    }
    {
      const Array& av = t.value(a);
      auto db = t.grad_slot(b).data();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape("add_row", a, row);
  const Array& av = a.value();
  const Array& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_fail("add_row", av, rv);
  Array out = av;
  const std::size_t c = av.cols();
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < c; ++j) out(i, j) += rv[j];
  }
  return t.push(std::move(out), [a = a.id, row = row.id, c](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    auto da = t.grad_slot(a).data();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i];
    auto dr = t.grad_slot(row).data();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < c; ++j) dr[j] += g(i, j);
    }
  });
}

Var mul_row(Var a, Var row) {
  Tape& t = same_tape("mul_row", a, row);
  const Array& av = a.value();
  const Array& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_fail("mul_row", av, rv);
  Array out = av;
  const std::size_t c = av.cols();
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < c; ++j) out(i, j) *= rv[j];
  }
  return t.push(std::move(out), [a = a.id, row = row.id, c](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    const Array& av = t.value(a);
    const Array& rv = t.value(row);
    Array& da = t.grad_slot(a);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < c; ++j) da(i, j) += g(i, j) * rv[j];
    }
    auto dr = t.grad_slot(row).data();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < c; ++j) dr[j] += g(i, j) * av(i, j);
    }
  });
}

Var scale(Var a, double s) {
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return unary(a, std::move(out), [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return unary(a, std::move(out), [](double, double) { return 1.0; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& t = *parts[0].tape;
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    same_tape("concat_cols", parts[0], p);
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    ids.push_back(p.id);
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Array out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Array& v = p.value();
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(v.row_span(i).data(), v.cols(), &out(i, offset));
    }
    offset += v.cols();
  }
  return t.push(std::move(out), [ids, widths](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      Array& d = t.grad_slot(ids[p]);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < widths[p]; ++j) d(i, j) += g(i, offset + j);
      }
      offset += widths[p];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape& t = *parts[0].tape;
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    same_tape("concat_rows", parts[0], p);
    if (p.cols() != cols) shape_fail("concat_rows", parts[0].value(), p.value());
    ids.push_back(p.id);
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const Var& p : parts) {
    auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
  }
  return t.push(Array(rows, cols, std::move(data)), [ids](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    std::size_t offset = 0;
    for (auto id : ids) {
      auto d = t.grad_slot(id).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[offset + i];
      offset += d.size();
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Array& av = a.value();
  if (start + count > av.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") of " + av.shape_string());
  }
  Array out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    std::copy_n(av.row_ptr(i) + start, count, out.row_ptr(i));
  }
  return a.tape->push(std::move(out), [a = a.id, start, count](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    Array& d = t.grad_slot(a);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < count; ++j) d(i, start + j) += g(i, j);
    }
  });
}

Var gather_rows(Var a, std::span<const int> rows) {
  const Array& av = a.value();
  const std::size_t c = av.cols();
  Array out(rows.size(), c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= av.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " outside " +
                       av.shape_string());
    }
    std::copy_n(av.row_ptr(rows[i]), c, out.row_ptr(i));
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return a.tape->push(std::move(out), [a = a.id, idx = std::move(idx), c](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    Array& d = t.grad_slot(a);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) d(idx[i], j) += g(i, j);
    }
  });
}

Var pick(Var a, std::span<const int> cols) {
  const Array& av = a.value();
  if (cols.size() != av.rows()) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " + av.shape_string());
  }
  Array out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    if (cols[i] < 0 || static_cast<std::size_t>(cols[i]) >= av.cols()) {
      throw ShapeError("pick: column " + std::to_string(cols[i]) + " outside " + av.shape_string());
    }
    out[i] = av(i, cols[i]);
  }
  std::vector<int> idx(cols.begin(), cols.end());
  return a.tape->push(std::move(out), [a = a.id, idx = std::move(idx)](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    Array& d = t.grad_slot(a);
    for (std::size_t i = 0; i < idx.size(); ++i) d(i, idx[i]) += g[i];
  });
}

Var tanh(Var a) {
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return unary(a, std::move(out), [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  return unary(a, std::move(out), [](double, double y) { return y; });
}

Var log(Var a) {
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  return unary(a, std::move(out), [](double x, double) { return 1.0 / x; });
}

Var masked_softmax(Var a, const Mask& mask) {
  const Array& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  if (mask && mask->size() != r * c) {
    throw ShapeError("masked_softmax: mask has " + std::to_string(mask->size()) +
                     " entries for " + av.shape_string());
  }
  constexpr double kMaskedLogit = -1e300;
  Array out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const std::uint8_t* m = mask ? mask->data() + i * c : nullptr;
    double mx = kMaskedLogit;
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) {
      if (m && !m[j]) continue;
      mx = std::max(mx, av(i, j));
      any = true;
    }
    if (!any) throw ShapeError("masked_softmax: row " + std::to_string(i) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (m && !m[j]) continue;
      const double e = std::exp(av(i, j) - mx);
      out(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= z;
  }
  return a.tape->push(std::move(out), [a = a.id](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    const Array& p = t.value(self);
    Array& d = t.grad_slot(a);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) dot += p(i, j) * g(i, j);
      // p == 0 on masked entries, so they receive exactly zero.
      for (std::size_t j = 0; j < p.cols(); ++j) d(i, j) += p(i, j) * (g(i, j) - dot);
    }
  });
}

Var softmax(Var a) { return masked_softmax(a, nullptr); }

Var sum(Var a) {
  const Array& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  return a.tape->push(Array::scalar(s), [a = a.id](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    auto d = t.grad_slot(a).data();
    for (auto& v : d) v += g;
  });
}

Var sum_axis(Var a, int axis) {
  const Array& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  if (axis != 0 && axis != 1) throw ShapeError("sum_axis: axis must be 0 or 1");
  Array out = axis == 0 ? Array(1, c) : Array(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += av(i, j);
  }
  return a.tape->push(std::move(out), [a = a.id, axis](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    Array& d = t.grad_slot(a);
    for (std::size_t i = 0; i < d.rows(); ++i) {
      for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) += g[axis == 0 ? j : i];
    }
  });
}

Var mean_axis(Var a, int axis) {
  const std::size_t n = axis == 0 ? a.rows() : a.cols();
  if (n == 0) throw ShapeError("mean_axis: empty axis");
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(n));
}

Var segment_sum(Var a, std::span<const int> lengths) {
  const Array& av = a.value();
  if (av.cols() != 1) throw ShapeError("segment_sum: expects a column, got " + av.shape_string());
  std::vector<int> lens(lengths.begin(), lengths.end());
  const auto total = std::accumulate(lens.begin(), lens.end(), std::size_t{0});
  if (total != av.rows()) {
    throw ShapeError("segment_sum: segments cover " + std::to_string(total) + " of " +
                     std::to_string(av.rows()) + " rows");
  }
  Array out(lens.size(), 1);
  std::size_t row = 0;
  for (std::size_t s = 0; s < lens.size(); ++s) {
    for (int k = 0; k < lens[s]; ++k) out[s] += av[row++];
  }
  return a.tape->push(std::move(out), [a = a.id, lens = std::move(lens)](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    auto d = t.grad_slot(a).data();
    std::size_t row = 0;
    for (std::size_t s = 0; s < lens.size(); ++s) {
      for (int k = 0; k < lens[s]; ++k) d[row++] += g[s];
    }
  });
}

Var instance_norm(Var a, Var gamma, Var beta, double eps) {
  Tape& t = same_tape("instance_norm", a, gamma);
  same_tape("instance_norm", a, beta);
  const Array& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != c) shape_fail("instance_norm", x, gamma.value());
  if (beta.rows() != 1 || beta.cols() != c) shape_fail("instance_norm", x, beta.value());
  Array xhat(r, c);
  std::vector<double> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < r; ++i) mean += x(i, j);
    mean /= static_cast<double>(r);
    double var = 0.0;
    for (std::size_t i = 0; i < r; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(r);
    inv_std[j] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < r; ++i) xhat(i, j) = (x(i, j) - mean) * inv_std[j];
  }
  const Array& gv = gamma.value();
  const Array& bv = beta.value();
  Array out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out(i, j) = gv[j] * xhat(i, j) + bv[j];
  }
  return t.push(std::move(out), [a = a.id, gamma = gamma.id, beta = beta.id, xhat = std::move(xhat),
                                 inv_std = std::move(inv_std)](Tape& t, std::uint32_t self) {
    const Array& g = t.grad(self);
    const Array& gv = t.value(gamma);
    const std::size_t r = g.rows(), c = g.cols();
    const double n = static_cast<double>(r);
    Array& dx = t.grad_slot(a);
    auto dgamma = t.grad_slot(gamma).data();
    auto dbeta = t.grad_slot(beta).data();
    for (std::size_t j = 0; j < c; ++j) {
      double sum_dxhat = 0.0;
      double sum_dxhat_xhat = 0.0;
      for (std::size_t i = 0; i < r; ++i) {
        const double dxhat = g(i, j) * gv[j];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat(i, j);
        dgamma[j] += g(i, j) * xhat(i, j);
        dbeta[j] += g(i, j);
      }
      for (std::size_t i = 0; i < r; ++i) {
        const double dxhat = g(i, j) * gv[j];
        dx(i, j) += inv_std[j] / n * (n * dxhat - sum_dxhat - xhat(i, j) * sum_dxhat_xhat);
      }
    }
  });
}

Var attention(Var q, Var k, Var v, int heads, const Mask& mask) {
  const std::size_t d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw ShapeError("attention: q " + q.value().shape_string() + ", k " +
                     k.value().shape_string() + ", v " + v.value().shape_string());
  }
  if (heads <= 0 || d % static_cast<std::size_t>(heads) != 0) {
    throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var weights = masked_softmax(scale(matmul_nt(qh, kh), inv_sqrt), mask);
    outs.push_back(matmul(weights, vh));
  }
  return heads == 1 ? outs[0] : concat_cols(outs);
}

Var multi_head_attention(Var queries, Var keys_values, Var w_q, Var w_k, Var w_v,
                         Var w_o, int heads, const Mask& mask) {
  Var q = matmul(queries, w_q);
  Var k = matmul(keys_values, w_k);
  Var v = matmul(keys_values, w_v);
  return matmul(attention(q, k, v, heads, mask), w_o);
}

}  // namespace lgs::diffnum
