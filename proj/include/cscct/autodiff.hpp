#pragma once

// Reverse-mode automatic differentiation on a per-step tape.
//
// Tensors are handles into a Tape; the tape owns all node storage and is
// rebuilt for every training step (define-by-run). Leaf tensors created
// with Tape::variable participate in gradient flow; constants never do.
// All values are 64-bit floats and must stay finite — any NaN/Inf is
// surfaced as an exception at the op that produced it.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace cscct::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Denominator clamp for cosine similarity; far below any feature norm
// arising from unit-scale inputs.
inline constexpr double kCosineEps = 1e-12;

class Tape;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::uint64_t pass = 0;  // backward-pass stamp; stale grad is treated as zero
  std::size_t index = 0;   // position on the tape (topological by construction)
  bool requires_grad = false;
  bool leaf = false;
  std::function<void(Tape&, Node&)> backprop;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  const std::vector<double>& value() const;
  /// Value of a rank-0/size-1 tensor.
  double scalar() const;
  bool requires_grad() const;
  std::size_t size() const;

  /// Gradient accumulated by backward(); throws if this tensor does not
  /// participate in gradients or no backward pass has reached it.
  const std::vector<double>& grad() const;
  void zero_grad();

  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Tensor(Tape* t, detail::Node* n) : tape_(t), node_(n) {}
  Tape* tape_ = nullptr;
  detail::Node* node_ = nullptr;

  friend detail::Node* node_of(const Tensor& t);
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Gradient-carrying leaf. Data must be finite.
  Tensor variable(Shape shape, std::vector<double> data);
  /// Leaf that never receives gradient.
  Tensor constant(Shape shape, std::vector<double> data);
  Tensor scalar_constant(double v);

  /// Reverse pass from a scalar loss. Leaf gradients accumulate across
  /// calls until zero_grad(); intermediate gradients are per-pass.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }

  // Op plumbing: creates a node in creation (= topological) order.
  Tensor make_node(Shape shape, std::vector<double> value, bool requires_grad,
                   std::function<void(Tape&, detail::Node&)> backprop,
                   const char* op_name);
  // Gradient buffer of `n`, zero-initialized on first touch in the current
  // pass (leaves keep accumulating across passes instead).
  double* grad_buffer(detail::Node* n);

 private:
  std::deque<detail::Node> nodes_;
  std::uint64_t pass_ = 0;
};

// ---- operations ------------------------------------------------------

/// Matrix product [m×k]·[k×n] -> [m×n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// x·w + b with the bias added per row: [k×d]·[d×h] + [h] -> [k×h].
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);   // error on non-positive entries
Tensor exp(const Tensor& x);

// Elementwise; shapes must match exactly, except a size-1 tensor may pair
// with any shape (scalar broadcast). No other broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Row i of a matrix as a vector. Gradient scatters back into the row.
Tensor row(const Tensor& m, std::size_t i);
/// Columns [c0, c1) of a matrix.
Tensor col_slice(const Tensor& m, std::size_t c0, std::size_t c1);
/// Single element of a vector as a scalar.
Tensor pick(const Tensor& v, std::size_t idx);
/// Scalars stacked into a vector.
Tensor stack(const std::vector<Tensor>& scalars);

/// a·b / (max(|a|,eps)·max(|b|,eps)); zero vectors yield 0 and a warning.
Tensor cosine_similarity(const Tensor& a, const Tensor& b,
                         double eps = kCosineEps);

/// exp(v_i/t) / sum_j exp(v_j/t), computed with max subtraction.
Tensor softmax(const Tensor& v, double temperature);
Tensor log_softmax(const Tensor& v);

/// sum_i p_i log(p_i/q_i) with 0·log 0 = 0. p and q must be probability
/// vectors; q_i = 0 where p_i > 0 is an error, never clamped.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

}  // namespace cscct::ad
