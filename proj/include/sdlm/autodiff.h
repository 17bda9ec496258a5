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

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Tape records every primitive applied during a forward pass. Values are
// stored on the tape; a Var is a lightweight handle to one recorded node.
// Tape::Backward() visits nodes once, in reverse recording order, and
// accumulates adjoints. Parameters live in a ParamStore outside the tape and
// receive their gradients when the pass finishes, so a fresh tape can be
// used for every truncated-BPTT window.
//
// Most primitives view a tensor as a matrix: rows = product of all leading
// dimensions, cols = last dimension. "Last axis" operations act on rows.

#ifndef SDLM_AUTODIFF_H_
#define SDLM_AUTODIFF_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sdlm {
class Rng;
}

namespace sdlm::ad {

using Shape = std::vector<std::size_t>;

std::string ShapeString(const Shape &shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Scalar(double v) { return Tensor({1}, {v}); }
  static Tensor Matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
  }

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  double *data() { return data_.data(); }
  const double *data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double> &storage() { return data_; }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double &at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }

  void Fill(double v);
  bool AllFinite() const;

  bool operator==(const Tensor &other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Ordered (by name) collection of parameters. References returned by Add and
// Get stay valid for the store's lifetime.
class ParamStore {
 public:
  Parameter &Add(const std::string &name, Tensor value);
  bool Has(const std::string &name) const { return params_.count(name) > 0; }
  Parameter &Get(const std::string &name);
  const Parameter &Get(const std::string &name) const;

  std::vector<std::string> Names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t ParameterCount() const;

  void ZeroGrad();
  double GradNorm() const;
  void ScaleGrad(double factor);

  std::map<std::string, Parameter> &items() { return params_; }
  const std::map<std::string, Parameter> &items() const { return params_; }

 private:
  std::map<std::string, Parameter> params_;
};

class Tape;

// Handle to a node recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape *tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape *tape() const { return tape_; }
  int id() const { return id_; }

  const Tensor &value() const;
  const Shape &shape() const { return value().shape(); }

 private:
  Tape *tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Receives the adjoint of the node's output.
  using BackwardFn = std::function<void(const Tensor &out_grad)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  // Non-differentiable leaf.
  Var Constant(Tensor value);
  // Differentiable leaf whose gradient can be read with Grad() after
  // Backward().
  Var Input(Tensor value);
  // Leaf bound to a parameter; Backward() adds its gradient into p.grad.
  // Repeated calls with the same parameter return the same node.
  Var Param(Parameter &p);

  // Records an op output. `fn` may be empty when no parent needs gradients.
  Var Record(Tensor value, std::span<const Var> parents, BackwardFn fn);

  // Reverse sweep from a scalar loss. Throws ShapeError for non-scalars.
  void Backward(Var loss);

  const Tensor &Value(int id) const { return nodes_[id].value; }
  bool RequiresGrad(int id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated on first use. Only valid for nodes
  // that require gradients.
  Tensor &GradBuffer(int id);
  // Gradient after Backward(); zeros if the node received none.
  Tensor Grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter *param = nullptr;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter *, int> param_nodes_;
};

// ---------------------------------------------------------------------------
// Primitives. Binary elementwise ops accept b with a's shape, a {1, cols} or
// {cols} row broadcast over rows, a {rows, 1} column broadcast over columns,
// or a single-element scalar.

Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Div(Var a, Var b);

// scale * x + shift.
Var Affine(Var x, double scale, double shift);

// a [r, k] times b [k, n], or b^T when transpose_b (b is [n, k]).
Var MatMul(Var a, Var b, bool transpose_b = false);

// Along the last axis; all inputs share the leading dimensions.
Var Concat(std::span<const Var> parts);
Var Slice(Var x, std::size_t begin, std::size_t length);

// Along the first axis (row blocks); inputs share all trailing dimensions.
Var ConcatRows(std::span<const Var> parts);
Var SliceRows(Var x, std::size_t begin, std::size_t count);
Var Reshape(Var x, Shape shape);

Var Sigmoid(Var x);
Var Tanh(Var x);
Var Relu(Var x);
// clamp(x, -1, 1); subgradient 0 outside and at the kinks.
Var HardTanh(Var x);

// Softmax and inclusive cumulative sum over the last axis.
Var Softmax(Var x);
Var Cumsum(Var x);
// cumsum(softmax(x)).
Var Cumax(Var x);

// axis = -1 reduces the last axis ([rows, 1]); axis = 0 reduces rows
// ([1, cols]).
Var Sum(Var x, int axis);
Var Mean(Var x, int axis);
Var SumAll(Var x);
Var MeanAll(Var x);

// Rows of `table` [V, E] selected by ids -> [ids.size(), E].
Var Embedding(Var table, std::span<const int> ids);

// Inverted dropout: kept entries are scaled by 1 / (1 - p).
Var Dropout(Var x, double p, Rng &rng);

// Every column repeated k times in place: [r, c] -> [r, c * k].
Var RepeatCols(Var x, std::size_t k);

// Flat-index gather -> [1, indices.size()].
Var Gather(Var x, std::span<const std::size_t> indices);

// Causal window convolution. x is [T, B, C]; pad is [L, C] and stands for
// the L positions before the sequence; weight is [(L + 1) * C, O] applied to
// the window [x_{t-L}; ...; x_t] (oldest first); bias is [O] or [1, O].
// Output [T, B, O].
Var CausalConv1d(Var x, Var pad, Var weight, Var bias, std::size_t window);

// Per-row suffix products with a trailing one: [r, n] -> [r, n + 1],
// out_k = x_k * x_{k+1} * ... * x_{n-1}, out_n = 1.
Var SuffixProduct(Var x);

// m is [n, B, K] (n stacked [B, K] blocks), q is [B, K]:
// out[b, i] = sum_k m[i, b, k] * q[b, k]  -> [B, n].
Var BatchDot(Var m, Var q);
// w is [B, n]: out[b, k] = sum_i w[b, i] * m[i, b, k]  -> [B, K].
Var BatchMix(Var w, Var m);

// Per-row negative log-likelihood of targets under softmax(logits):
// [R, V] -> [R, 1].
Var CrossEntropy(Var logits, std::span<const int> targets);

// ---------------------------------------------------------------------------
// Finite-difference checking.

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<name>[index]" of the worst coordinate
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// |a - b| / max(|a|, |b|, 1e-8).
double RelativeError(double analytic, double numeric);

// Compares the analytic gradient of a scalar function of x against central
// differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps), coordinate-wise.
GradCheckResult GradCheck(const std::function<Var(Tape &, Var)> &f,
                          const Tensor &x, double eps);

// Same for every coordinate of every parameter in `params` (or just those
// listed in `only`). `f` must rebuild the computation from the store.
GradCheckResult GradCheckParams(const std::function<Var(Tape &)> &f,
                                ParamStore &params, double eps,
                                const std::vector<std::string> &only = {});

// ---------------------------------------------------------------------------
// Parameter checkpoints: versioned header, free-form header text, then
// (name, shape, little-endian doubles) records.

inline constexpr char kCheckpointMagic[8] = {'S', 'D', 'L', 'M',
                                             'P', 'A', 'R', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void WriteCheckpoint(const ParamStore &params, const std::string &header,
                     std::ostream &out);
// Returns the header text; replaces values of matching names in `params`
// (adding any missing ones). Throws DataError on malformed input.
std::string ReadCheckpoint(std::istream &in, ParamStore *params);

}  // namespace sdlm::ad

#endif  // SDLM_AUTODIFF_H_
