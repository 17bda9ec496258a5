// Copyright 2026 The SDLM Authors.
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

#include "sdlm/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "sdlm/error.h"
#include "sdlm/rng.h"

namespace sdlm::ad {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap AsMatrix(const Tensor &t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

MutMap AsMatrix(Tensor &t, std::size_t rows, std::size_t cols) {
  return MutMap(t.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

std::size_t Product(const Shape &shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

[[noreturn]] void Mismatch(const char *op, const Shape &a, const Shape &b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + ShapeString(a) +
                   " and " + ShapeString(b));
}

Tape *SameTape(const char *op, std::span<const Var> vars) {
  Tape *tape = nullptr;
  for (const Var &v : vars) {
    if (!v.valid()) throw std::invalid_argument(std::string(op) + ": null Var");
    if (tape == nullptr) tape = v.tape();
    if (v.tape() != tape) {
      throw std::invalid_argument(std::string(op) +
                                  ": operands live on different tapes");
    }
  }
  return tape;
}

enum class Bcast { kSame, kRow, kCol, kScalar };

Bcast Classify(const char *op, const Tensor &a, const Tensor &b) {
  if (a.shape() == b.shape()) return Bcast::kSame;
  if (b.size() == 1) return Bcast::kScalar;
  const bool b_row = (b.rank() == 1 && b.size() == a.cols()) ||
                     (b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.cols());
  if (b_row) return Bcast::kRow;
  if (b.rank() == 2 && b.dim(1) == 1 && b.dim(0) == a.rows()) {
    return Bcast::kCol;
  }
  Mismatch(op, a.shape(), b.shape());
}

inline std::size_t BIndex(Bcast mode, std::size_t r, std::size_t c,
                          std::size_t cols) {
  switch (mode) {
    case Bcast::kSame:
      return r * cols + c;
    case Bcast::kRow:
      return c;
    case Bcast::kCol:
      return r;
    case Bcast::kScalar:
      return 0;
  }
  return 0;
}

// Elementwise binary op with broadcasting of b. `fwd(x, y)` gives the
// output; `grads(x, y, out, g, &ga, &gb)` the contributions to each adjoint.
template <typename Fwd, typename Grads>
Var Binary(const char *op, Var a, Var b, Fwd fwd, Grads grads) {
  const Var parents[] = {a, b};
  Tape *tape = SameTape(op, parents);
  const Tensor &av = a.value();
  const Tensor &bv = b.value();
  const Bcast mode = Classify(op, av, bv);
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      out[i] = fwd(av[i], bv[BIndex(mode, r, c, cols)]);
    }
  }
  const int ia = a.id(), ib = b.id();
  return tape->Record(
      std::move(out), parents,
      [tape, ia, ib, mode, rows, cols, grads](const Tensor &g) {
        const Tensor &x = tape->Value(ia);
        const Tensor &y = tape->Value(ib);
        Tensor *ga = tape->RequiresGrad(ia) ? &tape->GradBuffer(ia) : nullptr;
        Tensor *gb = tape->RequiresGrad(ib) ? &tape->GradBuffer(ib) : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            const std::size_t j = BIndex(mode, r, c, cols);
            double da = 0.0, db = 0.0;
            grads(x[i], y[j], g[i], &da, &db);
            if (ga) (*ga)[i] += da;
            if (gb) (*gb)[j] += db;
          }
        }
      });
}

// Elementwise unary op; `deriv(x, y)` is dy/dx.
template <typename Fwd, typename Deriv>
Var Unary(const char *op, Var x, Fwd fwd, Deriv deriv) {
  const Var parents[] = {x};
  Tape *tape = SameTape(op, parents);
  const Tensor &xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const int ix = x.id();
  const int iy = static_cast<int>(tape->size());
  return tape->Record(std::move(out), parents,
                      [tape, ix, iy, deriv](const Tensor &g) {
                        const Tensor &xv = tape->Value(ix);
                        const Tensor &yv = tape->Value(iy);
                        Tensor &gx = tape->GradBuffer(ix);
                        for (std::size_t i = 0; i < xv.size(); ++i) {
                          gx[i] += g[i] * deriv(xv[i], yv[i]);
                        }
                      });
}

Shape WithLast(const Shape &shape, std::size_t last) {
  Shape s = shape.empty() ? Shape{1} : shape;
  s.back() = last;
  return s;
}

}  // namespace

std::string ShapeString(const Shape &shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(Product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != Product(shape_)) {
    throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                     " does not match shape " + ShapeString(shape_));
  }
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// ParamStore

Parameter &ParamStore::Add(const std::string &name, Tensor value) {
  if (params_.count(name)) {
    throw std::invalid_argument("duplicate parameter: " + name);
  }
  Parameter p;
  p.name = name;
  p.grad = Tensor(value.shape());
  p.value = std::move(value);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter &ParamStore::Get(const std::string &name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  return it->second;
}

const Parameter &ParamStore::Get(const std::string &name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  return it->second;
}

std::vector<std::string> ParamStore::Names() const {
  std::vector<std::string> names;
  names.reserve(params_.size());
  for (const auto &[name, p] : params_) names.push_back(name);
  return names;
}

std::size_t ParamStore::ParameterCount() const {
  std::size_t n = 0;
  for (const auto &[name, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::ZeroGrad() {
  for (auto &[name, p] : params_) {
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
    p.grad.Fill(0.0);
  }
}

double ParamStore::GradNorm() const {
  double sq = 0.0;
  for (const auto &[name, p] : params_) {
    for (double g : p.grad.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

void ParamStore::ScaleGrad(double factor) {
  for (auto &[name, p] : params_) {
    for (double &g : p.grad.values()) g *= factor;
  }
}

// ---------------------------------------------------------------------------
// Tape

const Tensor &Var::value() const { return tape_->Value(id_); }

Var Tape::Constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::Input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::Param(Parameter &p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::Record(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var &p : parents) {
    if (nodes_[p.id()].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Tensor &Tape::GradBuffer(int id) {
  Node &n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Tape::Grad(Var v) const {
  const Node &n = nodes_[v.id()];
  if (!n.has_grad) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::Backward(Var loss) {
  if (loss.tape() != this) {
    throw std::invalid_argument("Backward: loss is not on this tape");
  }
  if (loss.value().size() != 1) {
    throw ShapeError("Backward: loss must be a scalar, got shape " +
                     ShapeString(loss.shape()));
  }
  if (!nodes_[loss.id()].requires_grad) return;
  GradBuffer(loss.id())[0] += 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    Node &n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(n.grad);
    if (n.param != nullptr) {
      Tensor &dst = n.param->grad;
      if (dst.shape() != n.value.shape()) dst = Tensor(n.value.shape());
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Var Add(Var a, Var b) {
  return Binary(
      "Add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double *da, double *db) {
        *da = g;
        *db = g;
      });
}

Var Sub(Var a, Var b) {
  return Binary(
      "Sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double *da, double *db) {
        *da = g;
        *db = -g;
      });
}

Var Mul(Var a, Var b) {
  return Binary(
      "Mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double *da, double *db) {
        *da = g * y;
        *db = g * x;
      });
}

Var Div(Var a, Var b) {
  return Binary(
      "Div", a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double g, double *da, double *db) {
        *da = g / y;
        *db = -g * x / (y * y);
      });
}

Var Affine(Var x, double scale, double shift) {
  return Unary(
      "Affine", x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Var Sigmoid(Var x) {
  return Unary(
      "Sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var Tanh(Var x) {
  return Unary(
      "Tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var Relu(Var x) {
  return Unary(
      "Relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var HardTanh(Var x) {
  return Unary(
      "HardTanh", x, [](double v) { return std::clamp(v, -1.0, 1.0); },
      [](double v, double) { return (v > -1.0 && v < 1.0) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

Var MatMul(Var a, Var b, bool transpose_b) {
  const Var parents[] = {a, b};
  Tape *tape = SameTape("MatMul", parents);
  const Tensor &av = a.value();
  const Tensor &bv = b.value();
  if (bv.rank() != 2) Mismatch("MatMul", av.shape(), bv.shape());
  const std::size_t r = av.rows(), k = av.cols();
  const std::size_t n = transpose_b ? bv.dim(0) : bv.dim(1);
  const std::size_t bk = transpose_b ? bv.dim(1) : bv.dim(0);
  if (bk != k) Mismatch("MatMul", av.shape(), bv.shape());
  Tensor out(WithLast(av.shape(), n));
  {
    MutMap y = AsMatrix(out, r, n);
    ConstMap x = AsMatrix(av, r, k);
    if (transpose_b) {
      y.noalias() = x * AsMatrix(bv, n, k).transpose();
    } else {
      y.noalias() = x * AsMatrix(bv, k, n);
    }
  }
  const int ia = a.id(), ib = b.id();
  return tape->Record(
      std::move(out), parents,
      [tape, ia, ib, r, k, n, transpose_b](const Tensor &g) {
        ConstMap gm = AsMatrix(g, r, n);
        ConstMap x = AsMatrix(tape->Value(ia), r, k);
        if (tape->RequiresGrad(ia)) {
          MutMap ga = AsMatrix(tape->GradBuffer(ia), r, k);
          if (transpose_b) {
            ga.noalias() += gm * AsMatrix(tape->Value(ib), n, k);
          } else {
            ga.noalias() += gm * AsMatrix(tape->Value(ib), k, n).transpose();
          }
        }
        if (tape->RequiresGrad(ib)) {
          if (transpose_b) {
            MutMap gb = AsMatrix(tape->GradBuffer(ib), n, k);
            gb.noalias() += gm.transpose() * x;
          } else {
            MutMap gb = AsMatrix(tape->GradBuffer(ib), k, n);
            gb.noalias() += x.transpose() * gm;
          }
        }
      });
}

Var Concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("Concat: no inputs");
  Tape *tape = SameTape("Concat", parts);
  const Tensor &first = parts[0].value();
  const std::size_t rows = first.rows();
  std::vector<std::size_t> widths;
  std::vector<int> ids;
  std::size_t total = 0;
  for (const Var &p : parts) {
    const Tensor &v = p.value();
    if (v.rows() != rows || v.rank() != first.rank()) {
      Mismatch("Concat", first.shape(), v.shape());
    }
    widths.push_back(v.cols());
    ids.push_back(p.id());
    total += v.cols();
  }
  Tensor out(WithLast(first.shape(), total));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor &v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * widths[k], widths[k],
                  out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  return tape->Record(
      std::move(out), parts, [tape, ids, widths, rows, total](const Tensor &g) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (tape->RequiresGrad(ids[k])) {
            Tensor &gp = tape->GradBuffer(ids[k]);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < widths[k]; ++c) {
                gp[r * widths[k] + c] += g[r * total + offset + c];
              }
            }
          }
          offset += widths[k];
        }
      });
}

Var Slice(Var x, std::size_t begin, std::size_t length) {
  const Var parents[] = {x};
  Tape *tape = SameTape("Slice", parents);
  const Tensor &xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (begin + length > cols || length == 0) {
    throw ShapeError("Slice: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + length) + ") outside shape " +
                     ShapeString(xv.shape()));
  }
  Tensor out(WithLast(xv.shape(), length));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * cols + begin, length,
                out.data() + r * length);
  }
  const int ix = x.id();
  return tape->Record(std::move(out), parents,
                      [tape, ix, rows, cols, begin, length](const Tensor &g) {
                        Tensor &gx = tape->GradBuffer(ix);
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t c = 0; c < length; ++c) {
                            gx[r * cols + begin + c] += g[r * length + c];
                          }
                        }
                      });
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("ConcatRows: no inputs");
  Tape *tape = SameTape("ConcatRows", parts);
  const Shape &s0 = parts[0].shape();
  if (s0.empty()) throw ShapeError("ConcatRows: scalar input");
  const Shape tail(s0.begin() + 1, s0.end());
  std::size_t lead = 0;
  std::vector<int> ids;
  std::vector<std::size_t> sizes;
  for (const Var &p : parts) {
    const Shape &s = p.shape();
    if (s.empty() || Shape(s.begin() + 1, s.end()) != tail) {
      Mismatch("ConcatRows", s0, s);
    }
    lead += s[0];
    ids.push_back(p.id());
    sizes.push_back(p.value().size());
  }
  Shape shape = s0;
  shape[0] = lead;
  Tensor out(shape);
  std::size_t offset = 0;
  for (const Var &p : parts) {
    const Tensor &v = p.value();
    std::copy_n(v.data(), v.size(), out.data() + offset);
    offset += v.size();
  }
  return tape->Record(std::move(out), parts,
                      [tape, ids, sizes](const Tensor &g) {
                        std::size_t offset = 0;
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                          if (tape->RequiresGrad(ids[k])) {
                            Tensor &gp = tape->GradBuffer(ids[k]);
                            for (std::size_t i = 0; i < sizes[k]; ++i) {
                              gp[i] += g[offset + i];
                            }
                          }
                          offset += sizes[k];
                        }
                      });
}

Var SliceRows(Var x, std::size_t begin, std::size_t count) {
  const Var parents[] = {x};
  Tape *tape = SameTape("SliceRows", parents);
  const Tensor &xv = x.value();
  if (xv.rank() == 0 || begin + count > xv.dim(0) || count == 0) {
    throw ShapeError("SliceRows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside shape " +
                     ShapeString(xv.shape()));
  }
  const std::size_t stride = xv.size() / xv.dim(0);
  Shape shape = xv.shape();
  shape[0] = count;
  Tensor out(shape);
  std::copy_n(xv.data() + begin * stride, count * stride, out.data());
  const int ix = x.id();
  const std::size_t offset = begin * stride;
  return tape->Record(std::move(out), parents,
                      [tape, ix, offset](const Tensor &g) {
                        Tensor &gx = tape->GradBuffer(ix);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[offset + i] += g[i];
                        }
                      });
}

Var Reshape(Var x, Shape shape) {
  const Var parents[] = {x};
  Tape *tape = SameTape("Reshape", parents);
  const Tensor &xv = x.value();
  if (Product(shape) != xv.size()) Mismatch("Reshape", xv.shape(), shape);
  Tensor out(std::move(shape),
             std::vector<double>(xv.values().begin(), xv.values().end()));
  const int ix = x.id();
  return tape->Record(std::move(out), parents, [tape, ix](const Tensor &g) {
    Tensor &gx = tape->GradBuffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Softmax family

Var Softmax(Var x) {
  const Var parents[] = {x};
  Tape *tape = SameTape("Softmax", parents);
  const Tensor &xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (cols == 0) throw ShapeError("Softmax: empty last axis");
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double *in = xv.data() + r * cols;
    double *o = out.data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - m);
      z += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  const int ix = x.id();
  const int iy = static_cast<int>(tape->size());
  return tape->Record(std::move(out), parents,
                      [tape, ix, iy, rows, cols](const Tensor &g) {
                        const Tensor &y = tape->Value(iy);
                        Tensor &gx = tape->GradBuffer(ix);
                        for (std::size_t r = 0; r < rows; ++r) {
                          const std::size_t base = r * cols;
                          double dot = 0.0;
                          for (std::size_t c = 0; c < cols; ++c) {
                            dot += g[base + c] * y[base + c];
                          }
                          for (std::size_t c = 0; c < cols; ++c) {
                            gx[base + c] += y[base + c] * (g[base + c] - dot);
                          }
                        }
                      });
}

Var Cumsum(Var x) {
  const Var parents[] = {x};
  Tape *tape = SameTape("Cumsum", parents);
  const Tensor &xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      acc += xv[r * cols + c];
      out[r * cols + c] = acc;
    }
  }
  const int ix = x.id();
  return tape->Record(std::move(out), parents,
                      [tape, ix, rows, cols](const Tensor &g) {
                        Tensor &gx = tape->GradBuffer(ix);
                        for (std::size_t r = 0; r < rows; ++r) {
                          double acc = 0.0;
                          for (std::size_t c = cols; c-- > 0;) {
                            acc += g[r * cols + c];
                            gx[r * cols + c] += acc;
                          }
                        }
                      });
}

// Partial sums of exp(x - max) divided by their total: the last entry is
// exactly 1 and no entry can round above it.
Var Cumax(Var x) {
  const Var parents[] = {x};
  Tape *tape = SameTape("Cumax", parents);
  const Tensor &xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (cols == 0) throw ShapeError("Cumax: empty last axis");
  Tensor out(xv.shape());
  std::vector<double> e(xv.size()), total(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double *in = xv.data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      e[r * cols + c] = std::exp(in[c] - m);
      acc += e[r * cols + c];
      out[r * cols + c] = acc;
    }
    total[r] = acc;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= acc;
  }
  const int ix = x.id();
  const int iy = static_cast<int>(tape->size());
  return tape->Record(
      std::move(out), parents,
      [tape, ix, iy, rows, cols, e = std::move(e),
       total = std::move(total)](const Tensor &g) {
        const Tensor &y = tape->Value(iy);
        Tensor &gx = tape->GradBuffer(ix);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * cols;
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += g[base + c] * y[base + c];
          double suffix = 0.0;
          for (std::size_t c = cols; c-- > 0;) {
            suffix += g[base + c];
            gx[base + c] += e[base + c] / total[r] * (suffix - dot);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions

Var Sum(Var x, int axis) {
  const Var parents[] = {x};
  Tape *tape = SameTape("Sum", parents);
  const Tensor &xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  const int ix = x.id();
  if (axis == -1) {
    Tensor out(WithLast(xv.shape(), 1));
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += xv[r * cols + c];
      out[r] = acc;
    }
    return tape->Record(std::move(out), parents,
                        [tape, ix, rows, cols](const Tensor &g) {
                          Tensor &gx = tape->GradBuffer(ix);
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < cols; ++c) {
                              gx[r * cols + c] += g[r];
                            }
                          }
                        });
  }
  if (axis == 0) {
    Tensor out({1, cols});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) out[c] += xv[r * cols + c];
    }
    return tape->Record(std::move(out), parents,
                        [tape, ix, rows, cols](const Tensor &g) {
                          Tensor &gx = tape->GradBuffer(ix);
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < cols; ++c) {
                              gx[r * cols + c] += g[c];
                            }
                          }
                        });
  }
  throw ShapeError("Sum: axis must be 0 or -1");
}

Var Mean(Var x, int axis) {
  const Tensor &xv = x.value();
  const std::size_t n = axis == -1 ? xv.cols() : xv.rows();
  return Affine(Sum(x, axis), 1.0 / static_cast<double>(n), 0.0);
}

Var SumAll(Var x) {
  const Var parents[] = {x};
  Tape *tape = SameTape("SumAll", parents);
  const Tensor &xv = x.value();
  double acc = 0.0;
  for (double v : xv.values()) acc += v;
  const int ix = x.id();
  return tape->Record(Tensor::Scalar(acc), parents,
                      [tape, ix](const Tensor &g) {
                        Tensor &gx = tape->GradBuffer(ix);
                        for (std::size_t i = 0; i < gx.size(); ++i) {
                          gx[i] += g[0];
                        }
                      });
}

Var MeanAll(Var x) {
  return Affine(SumAll(x), 1.0 / static_cast<double>(x.value().size()), 0.0);
}

// ---------------------------------------------------------------------------
// Indexing

Var Embedding(Var table, std::span<const int> ids) {
  const Var parents[] = {table};
  Tape *tape = SameTape("Embedding", parents);
  const Tensor &tv = table.value();
  if (tv.rank() != 2) throw ShapeError("Embedding: table must be rank 2");
  const std::size_t vocab = tv.dim(0), dim = tv.dim(1);
  Tensor out({ids.size(), dim});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("Embedding: id " + std::to_string(ids[i]) +
                              " out of vocabulary range [0, " +
                              std::to_string(vocab) + ")");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * dim, dim,
                out.data() + i * dim);
  }
  const int it = table.id();
  std::vector<int> rows(ids.begin(), ids.end());
  return tape->Record(std::move(out), parents,
                      [tape, it, rows = std::move(rows), dim](const Tensor &g) {
                        Tensor &gt = tape->GradBuffer(it);
                        for (std::size_t i = 0; i < rows.size(); ++i) {
                          const std::size_t base =
                              static_cast<std::size_t>(rows[i]) * dim;
                          for (std::size_t c = 0; c < dim; ++c) {
                            gt[base + c] += g[i * dim + c];
                          }
                        }
                      });
}

Var Dropout(Var x, double p, Rng &rng) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("Dropout: p must lie in [0, 1)");
  }
  if (p == 0.0) return x;
  const Var parents[] = {x};
  Tape *tape = SameTape("Dropout", parents);
  const Tensor &xv = x.value();
  const double keep = 1.0 - p;
  std::vector<double> mask(xv.size());
  for (double &m : mask) m = rng.Uniform() < keep ? 1.0 / keep : 0.0;
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * mask[i];
  const int ix = x.id();
  return tape->Record(std::move(out), parents,
                      [tape, ix, mask = std::move(mask)](const Tensor &g) {
                        Tensor &gx = tape->GradBuffer(ix);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[i] += g[i] * mask[i];
                        }
                      });
}

Var RepeatCols(Var x, std::size_t k) {
  if (k == 0) throw std::invalid_argument("RepeatCols: k must be positive");
  if (k == 1) return x;
  const Var parents[] = {x};
  Tape *tape = SameTape("RepeatCols", parents);
  const Tensor &xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor out(WithLast(xv.shape(), cols * k));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t j = 0; j < k; ++j) {
        out[r * cols * k + c * k + j] = xv[r * cols + c];
      }
    }
  }
  const int ix = x.id();
  return tape->Record(std::move(out), parents,
                      [tape, ix, rows, cols, k](const Tensor &g) {
                        Tensor &gx = tape->GradBuffer(ix);
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t c = 0; c < cols; ++c) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < k; ++j) {
                              acc += g[r * cols * k + c * k + j];
                            }
                            gx[r * cols + c] += acc;
                          }
                        }
                      });
}

Var Gather(Var x, std::span<const std::size_t> indices) {
  const Var parents[] = {x};
  Tape *tape = SameTape("Gather", parents);
  const Tensor &xv = x.value();
  Tensor out({1, indices.size()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xv.size()) {
      throw ShapeError("Gather: index " + std::to_string(indices[i]) +
                       " outside shape " + ShapeString(xv.shape()));
    }
    out[i] = xv[indices[i]];
  }
  const int ix = x.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return tape->Record(std::move(out), parents,
                      [tape, ix, idx = std::move(idx)](const Tensor &g) {
                        Tensor &gx = tape->GradBuffer(ix);
                        for (std::size_t i = 0; i < idx.size(); ++i) {
                          gx[idx[i]] += g[i];
                        }
                      });
}

Var CausalConv1d(Var x, Var pad, Var weight, Var bias, std::size_t window) {
  const Var parents[] = {x, pad, weight, bias};
  Tape *tape = SameTape("CausalConv1d", parents);
  const Tensor &xv = x.value();
  const Tensor &pv = pad.value();
  const Tensor &wv = weight.value();
  const Tensor &bv = bias.value();
  if (window == 0) throw ShapeError("CausalConv1d: window must be >= 1");
  if (xv.rank() != 3) {
    throw ShapeError("CausalConv1d: input must be [T, B, C], got " +
                     ShapeString(xv.shape()));
  }
  const std::size_t T = xv.dim(0), B = xv.dim(1), C = xv.dim(2);
  const std::size_t K = (window + 1) * C;
  if (pv.rank() != 2 || pv.dim(0) != window || pv.dim(1) != C) {
    Mismatch("CausalConv1d(pad)", xv.shape(), pv.shape());
  }
  if (wv.rank() != 2 || wv.dim(0) != K) {
    Mismatch("CausalConv1d(weight)", xv.shape(), wv.shape());
  }
  const std::size_t O = wv.dim(1);
  if (bv.size() != O) Mismatch("CausalConv1d(bias)", wv.shape(), bv.shape());

  // Unfolded windows, one row per (t, b).
  Tensor unfolded({T * B, K});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      double *row = unfolded.data() + (t * B + b) * K;
      for (std::size_t k = 0; k <= window; ++k) {
        const long s = static_cast<long>(t) - static_cast<long>(window) +
                       static_cast<long>(k);
        const double *src =
            s >= 0 ? xv.data() + (static_cast<std::size_t>(s) * B + b) * C
                   : pv.data() + static_cast<std::size_t>(
                                     static_cast<long>(window) + s) *
                                     C;
        std::copy_n(src, C, row + k * C);
      }
    }
  }
  Tensor out({T, B, O});
  {
    MutMap y = AsMatrix(out, T * B, O);
    y.noalias() = AsMatrix(unfolded, T * B, K) * AsMatrix(wv, K, O);
    for (std::size_t r = 0; r < T * B; ++r) {
      for (std::size_t o = 0; o < O; ++o) out[r * O + o] += bv[o];
    }
  }
  const int ix = x.id(), ip = pad.id(), iw = weight.id(), ib = bias.id();
  return tape->Record(
      std::move(out), parents,
      [tape, ix, ip, iw, ib, T, B, C, K, O, window,
       unfolded = std::move(unfolded)](const Tensor &g) {
        ConstMap gm = AsMatrix(g, T * B, O);
        if (tape->RequiresGrad(iw)) {
          MutMap gw = AsMatrix(tape->GradBuffer(iw), K, O);
          gw.noalias() += AsMatrix(unfolded, T * B, K).transpose() * gm;
        }
        if (tape->RequiresGrad(ib)) {
          Tensor &gb = tape->GradBuffer(ib);
          for (std::size_t r = 0; r < T * B; ++r) {
            for (std::size_t o = 0; o < O; ++o) gb[o] += g[r * O + o];
          }
        }
        const bool need_x = tape->RequiresGrad(ix);
        const bool need_p = tape->RequiresGrad(ip);
        if (!need_x && !need_p) return;
        RowMat gu = gm * AsMatrix(tape->Value(iw), K, O).transpose();
        Tensor *gx = need_x ? &tape->GradBuffer(ix) : nullptr;
        Tensor *gp = need_p ? &tape->GradBuffer(ip) : nullptr;
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t r = t * B + b;
            for (std::size_t k = 0; k <= window; ++k) {
              const long s = static_cast<long>(t) -
                             static_cast<long>(window) + static_cast<long>(k);
              Tensor *dst = s >= 0 ? gx : gp;
              if (dst == nullptr) continue;
              const std::size_t base =
                  s >= 0 ? (static_cast<std::size_t>(s) * B + b) * C
                         : static_cast<std::size_t>(
                               static_cast<long>(window) + s) *
                               C;
              for (std::size_t c = 0; c < C; ++c) {
                (*dst)[base + c] +=
                    gu(static_cast<Eigen::Index>(r),
                       static_cast<Eigen::Index>(k * C + c));
              }
            }
          }
        }
      });
}

Var SuffixProduct(Var x) {
  const Var parents[] = {x};
  Tape *tape = SameTape("SuffixProduct", parents);
  const Tensor &xv = x.value();
  const std::size_t rows = xv.rows(), n = xv.cols();
  Tensor out(WithLast(xv.shape(), n + 1));
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 1.0;
    out[r * (n + 1) + n] = 1.0;
    for (std::size_t k = n; k-- > 0;) {
      acc *= xv[r * n + k];
      out[r * (n + 1) + k] = acc;
    }
  }
  const int ix = x.id();
  return tape->Record(
      std::move(out), parents, [tape, ix, rows, n](const Tensor &g) {
        const Tensor &xv = tape->Value(ix);
        Tensor &gx = tape->GradBuffer(ix);
        // d out_k / d x_j = prod_{m >= k, m != j} x_m for j >= k; computed
        // without division so zero factors are handled exactly.
        std::vector<double> prefix(n + 1);
        for (std::size_t r = 0; r < rows; ++r) {
          const double *xr = xv.data() + r * n;
          const double *gr = g.data() + r * (n + 1);
          for (std::size_t k = 0; k < n; ++k) {
            if (gr[k] == 0.0) continue;
            // suffix[j] = prod_{m > j} x_m, built right to left.
            double suffix = 1.0;
            prefix[k] = 1.0;
            for (std::size_t j = k; j < n; ++j) prefix[j + 1] = prefix[j] * xr[j];
            for (std::size_t j = n; j-- > k;) {
              gx[r * n + j] += gr[k] * prefix[j] * suffix;
              suffix *= xr[j];
            }
          }
        }
      });
}

Var BatchDot(Var m, Var q) {
  const Var parents[] = {m, q};
  Tape *tape = SameTape("BatchDot", parents);
  const Tensor &mv = m.value();
  const Tensor &qv = q.value();
  if (mv.rank() != 3 || qv.rank() != 2 || mv.dim(1) != qv.dim(0) ||
      mv.dim(2) != qv.dim(1)) {
    Mismatch("BatchDot", mv.shape(), qv.shape());
  }
  const std::size_t n = mv.dim(0), B = mv.dim(1), K = mv.dim(2);
  Tensor out({B, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < B; ++b) {
      const double *mr = mv.data() + (i * B + b) * K;
      const double *qr = qv.data() + b * K;
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) acc += mr[k] * qr[k];
      out[b * n + i] = acc;
    }
  }
  const int im = m.id(), iq = q.id();
  return tape->Record(std::move(out), parents,
                      [tape, im, iq, n, B, K](const Tensor &g) {
                        const Tensor &mv = tape->Value(im);
                        const Tensor &qv = tape->Value(iq);
                        Tensor *gm = tape->RequiresGrad(im)
                                         ? &tape->GradBuffer(im)
                                         : nullptr;
                        Tensor *gq = tape->RequiresGrad(iq)
                                         ? &tape->GradBuffer(iq)
                                         : nullptr;
                        for (std::size_t i = 0; i < n; ++i) {
                          for (std::size_t b = 0; b < B; ++b) {
                            const double gi = g[b * n + i];
                            const std::size_t base = (i * B + b) * K;
                            for (std::size_t k = 0; k < K; ++k) {
                              if (gm) (*gm)[base + k] += gi * qv[b * K + k];
                              if (gq) (*gq)[b * K + k] += gi * mv[base + k];
                            }
                          }
                        }
                      });
}

Var BatchMix(Var w, Var m) {
  const Var parents[] = {w, m};
  Tape *tape = SameTape("BatchMix", parents);
  const Tensor &wv = w.value();
  const Tensor &mv = m.value();
  if (mv.rank() != 3 || wv.rank() != 2 || wv.dim(0) != mv.dim(1) ||
      wv.dim(1) != mv.dim(0)) {
    Mismatch("BatchMix", wv.shape(), mv.shape());
  }
  const std::size_t n = mv.dim(0), B = mv.dim(1), K = mv.dim(2);
  Tensor out({B, K});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < B; ++b) {
      const double wi = wv[b * n + i];
      const double *mr = mv.data() + (i * B + b) * K;
      for (std::size_t k = 0; k < K; ++k) out[b * K + k] += wi * mr[k];
    }
  }
  const int iw = w.id(), im = m.id();
  return tape->Record(std::move(out), parents,
                      [tape, iw, im, n, B, K](const Tensor &g) {
                        const Tensor &wv = tape->Value(iw);
                        const Tensor &mv = tape->Value(im);
                        Tensor *gw = tape->RequiresGrad(iw)
                                         ? &tape->GradBuffer(iw)
                                         : nullptr;
                        Tensor *gm = tape->RequiresGrad(im)
                                         ? &tape->GradBuffer(im)
                                         : nullptr;
                        for (std::size_t i = 0; i < n; ++i) {
                          for (std::size_t b = 0; b < B; ++b) {
                            const std::size_t base = (i * B + b) * K;
                            double acc = 0.0;
                            for (std::size_t k = 0; k < K; ++k) {
                              acc += g[b * K + k] * mv[base + k];
                              if (gm) {
                                (*gm)[base + k] += wv[b * n + i] * g[b * K + k];
                              }
                            }
                            if (gw) (*gw)[b * n + i] += acc;
                          }
                        }
                      });
}

Var CrossEntropy(Var logits, std::span<const int> targets) {
  const Var parents[] = {logits};
  Tape *tape = SameTape("CrossEntropy", parents);
  const Tensor &lv = logits.value();
  const std::size_t rows = lv.rows(), cols = lv.cols();
  if (targets.size() != rows) {
    throw ShapeError("CrossEntropy: " + std::to_string(targets.size()) +
                     " targets for logits of shape " +
                     ShapeString(lv.shape()));
  }
  Tensor probs(lv.shape());
  Tensor out({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= cols) {
      throw std::out_of_range("CrossEntropy: target " +
                              std::to_string(targets[r]) + " out of range");
    }
    const double *in = lv.data() + r * cols;
    double *p = probs.data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      p[c] = std::exp(in[c] - m);
      z += p[c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[c] /= z;
    out[r] = -(in[targets[r]] - m - std::log(z));
  }
  const int il = logits.id();
  std::vector<int> tgt(targets.begin(), targets.end());
  return tape->Record(std::move(out), parents,
                      [tape, il, rows, cols, tgt = std::move(tgt),
                       probs = std::move(probs)](const Tensor &g) {
                        Tensor &gl = tape->GradBuffer(il);
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t c = 0; c < cols; ++c) {
                            gl[r * cols + c] += g[r] * probs[r * cols + c];
                          }
                          gl[r * cols + static_cast<std::size_t>(tgt[r])] -=
                              g[r];
                        }
                      });
}

// ---------------------------------------------------------------------------
// Gradient checking

double RelativeError(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double EvalScalar(const std::function<Var(Tape &, Var)> &f, const Tensor &x) {
  Tape tape;
  Var in = tape.Constant(x);
  return f(tape, in).value()[0];
}

void Track(GradCheckResult *res, const std::string &name, std::size_t i,
           double analytic, double numeric) {
  const double err = RelativeError(analytic, numeric);
  ++res->checked;
  if (err > res->max_rel_error || res->worst.empty()) {
    res->max_rel_error = std::max(res->max_rel_error, err);
    res->worst = name + "[" + std::to_string(i) + "]";
    res->analytic = analytic;
    res->numeric = numeric;
  }
}

}  // namespace

GradCheckResult GradCheck(const std::function<Var(Tape &, Var)> &f,
                          const Tensor &x, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("GradCheck: eps must be > 0");
  Tensor analytic;
  {
    Tape tape;
    Var in = tape.Input(x);
    Var y = f(tape, in);
    tape.Backward(y);
    analytic = tape.Grad(in);
  }
  GradCheckResult res;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double fp = EvalScalar(f, probe);
    probe[i] = x[i] - eps;
    const double fm = EvalScalar(f, probe);
    probe[i] = x[i];
    Track(&res, "x", i, analytic[i], (fp - fm) / (2.0 * eps));
  }
  return res;
}

GradCheckResult GradCheckParams(const std::function<Var(Tape &)> &f,
                                ParamStore &params, double eps,
                                const std::vector<std::string> &only) {
  if (eps <= 0.0) throw std::invalid_argument("GradCheck: eps must be > 0");
  params.ZeroGrad();
  {
    Tape tape;
    Var y = f(tape);
    tape.Backward(y);
  }
  std::vector<std::string> names = only.empty() ? params.Names() : only;
  GradCheckResult res;
  for (const std::string &name : names) {
    Parameter &p = params.Get(name);
    const Tensor analytic = p.grad;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      double fp, fm;
      {
        Tape tape;
        fp = f(tape).value()[0];
      }
      p.value[i] = orig - eps;
      {
        Tape tape;
        fm = f(tape).value()[0];
      }
      p.value[i] = orig;
      Track(&res, name, i, analytic[i], (fp - fm) / (2.0 * eps));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void PutU32(std::ostream &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void PutU64(std::ostream &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t GetU(std::istream &in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) {
      throw DataError("checkpoint: unexpected end of file");
    }
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

std::string GetBytes(std::istream &in, std::uint64_t n) {
  if (n > (1ULL << 32)) throw DataError("checkpoint: implausible length");
  std::string s(static_cast<std::size_t>(n), '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(in.gcount()) != n) {
    throw DataError("checkpoint: unexpected end of file");
  }
  return s;
}

}  // namespace

void WriteCheckpoint(const ParamStore &params, const std::string &header,
                     std::ostream &out) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  PutU32(out, kCheckpointVersion);
  PutU64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  PutU64(out, params.size());
  for (const auto &[name, p] : params.items()) {
    PutU32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    PutU32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) PutU64(out, d);
    for (double v : p.value.values()) PutU64(out, std::bit_cast<std::uint64_t>(v));
  }
}

std::string ReadCheckpoint(std::istream &in, ParamStore *params) {
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(magic)) ||
      !std::equal(magic, magic + sizeof(magic), kCheckpointMagic)) {
    throw DataError("checkpoint: bad magic");
  }
  const auto version = static_cast<std::uint32_t>(GetU(in, 4));
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(version));
  }
  std::string header = GetBytes(in, GetU(in, 8));
  const std::uint64_t count = GetU(in, 8);
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name = GetBytes(in, GetU(in, 4));
    const auto rank = static_cast<std::uint32_t>(GetU(in, 4));
    if (rank > 8) throw DataError("checkpoint: implausible rank for " + name);
    Shape shape(rank);
    for (auto &d : shape) d = static_cast<std::size_t>(GetU(in, 8));
    Tensor value(shape);
    for (double &v : value.values()) v = std::bit_cast<double>(GetU(in, 8));
    if (params->Has(name)) {
      Parameter &p = params->Get(name);
      if (p.value.shape() != shape) {
        throw DataError("checkpoint: shape mismatch for " + name + ": " +
                        ShapeString(shape) + " vs " +
                        ShapeString(p.value.shape()));
      }
      p.value = std::move(value);
    } else {
      params->Add(name, std::move(value));
    }
  }
  return header;
}

}  // namespace sdlm::ad
