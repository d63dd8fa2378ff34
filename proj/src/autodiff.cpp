#include "cscct/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace cscct::ad {

namespace {

void warn(const std::string& msg) { std::cerr << "[warn] " << msg << "\n"; }

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::domain_error(std::string(op) + ": non-finite value produced");
    }
  }
}

detail::Node* require_node(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw std::invalid_argument(std::string(op) + ": undefined tensor");
  }
  return node_of(t);
}

void require_same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands from different tapes");
  }
}

bool is_scalar_shape(const Shape& s) { return shape_size(s) == 1; }

double l2_norm(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace

detail::Node* node_of(const Tensor& t) { return t.node_; }

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// ---- Tensor ----------------------------------------------------------

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("Tensor::shape: undefined tensor");
  return node_->shape;
}

const std::vector<double>& Tensor::value() const {
  if (!node_) throw std::logic_error("Tensor::value: undefined tensor");
  return node_->value;
}

double Tensor::scalar() const {
  if (!node_) throw std::logic_error("Tensor::scalar: undefined tensor");
  if (node_->value.size() != 1) {
    throw std::invalid_argument("Tensor::scalar: tensor of size " +
                                std::to_string(node_->value.size()));
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::size_t Tensor::size() const {
  if (!node_) return 0;
  return node_->value.size();
}

const std::vector<double>& Tensor::grad() const {
  if (!node_) throw std::logic_error("Tensor::grad: undefined tensor");
  if (!node_->requires_grad) {
    throw std::logic_error("Tensor::grad: tensor does not carry gradients");
  }
  if (node_->grad.empty()) {
    throw std::logic_error("Tensor::grad: no backward pass has reached this tensor");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_) return;
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// ---- Tape ------------------------------------------------------------

Tensor Tape::make_node(Shape shape, std::vector<double> value, bool requires_grad,
                       std::function<void(Tape&, detail::Node&)> backprop,
                       const char* op_name) {
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw std::invalid_argument(std::string(op_name) + ": zero extent in shape " +
                                  shape_str(shape));
    }
  }
  if (shape_size(shape) != value.size()) {
    throw std::invalid_argument(std::string(op_name) + ": shape " + shape_str(shape) +
                                " does not match data length " +
                                std::to_string(value.size()));
  }
  check_finite(value, op_name);
  detail::Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = requires_grad ? std::move(backprop) : nullptr;
  n.index = nodes_.size();
  nodes_.push_back(std::move(n));
  return Tensor(this, &nodes_.back());
}

Tensor Tape::variable(Shape shape, std::vector<double> data) {
  Tensor t = make_node(std::move(shape), std::move(data), true, nullptr, "variable");
  node_of(t)->leaf = true;
  return t;
}

Tensor Tape::constant(Shape shape, std::vector<double> data) {
  return make_node(std::move(shape), std::move(data), false, nullptr, "constant");
}

Tensor Tape::scalar_constant(double v) { return constant(Shape{}, {v}); }

double* Tape::grad_buffer(detail::Node* n) {
  if (n->leaf) {
    // Leaf gradients persist and accumulate across backward calls.
    if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
    n->pass = pass_;
    return n->grad.data();
  }
  if (n->pass != pass_) {
    n->grad.assign(n->value.size(), 0.0);
    n->pass = pass_;
  }
  return n->grad.data();
}

void Tape::backward(const Tensor& loss) {
  detail::Node* root = require_node(loss, "backward");
  if (loss.tape() != this) {
    throw std::invalid_argument("backward: loss lives on another tape");
  }
  if (root->value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(root->shape));
  }
  if (!root->requires_grad) return;  // nothing reachable
  ++pass_;
  grad_buffer(root)[0] += 1.0;
  for (std::size_t i = root->index + 1; i-- > 0;) {
    detail::Node& n = nodes_[i];
    if (!n.requires_grad || n.leaf || !n.backprop) continue;
    if (n.pass != pass_) continue;  // not reached from the loss
    n.backprop(*this, n);
  }
}

// ---- op helpers ------------------------------------------------------

namespace {

struct Operand {
  detail::Node* node;
  bool grad;
};

Operand unpack(const Tensor& t, const char* op) {
  detail::Node* n = require_node(t, op);
  return {n, n->requires_grad};
}

}  // namespace

// ---- operations ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto [na, ga] = unpack(a, "matmul");
  auto [nb, gb] = unpack(b, "matmul");
  require_same_tape(a, b, "matmul");
  if (na->shape.size() != 2 || nb->shape.size() != 2) {
    throw std::invalid_argument("matmul: expects rank-2 operands, got " +
                                shape_str(na->shape) + " and " + shape_str(nb->shape));
  }
  const std::size_t m = na->shape[0], k = na->shape[1];
  const std::size_t k2 = nb->shape[0], n = nb->shape[1];
  if (k != k2) {
    throw std::invalid_argument("matmul: inner extents disagree: " +
                                shape_str(na->shape) + " vs " + shape_str(nb->shape));
  }
  std::vector<double> out(m * n, 0.0);
  const double* av = na->value.data();
  const double* bv = nb->value.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[p * n + j];
      out[i * n + j] = acc;
    }
  }
  auto back = [na, nb, ga, gb, m, n, k](Tape& tp, detail::Node& self) {
    const double* g = self.grad.data();
    if (ga) {
      double* gav = tp.grad_buffer(na);
      const double* bv = nb->value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          gav[i * k + p] += acc;
        }
    }
    if (gb) {
      double* gbv = tp.grad_buffer(nb);
      const double* av = na->value.data();
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += av[i * k + p] * g[i * n + j];
          gbv[p * n + j] += acc;
        }
    }
  };
  return a.tape()->make_node({m, n}, std::move(out), ga || gb, back, "matmul");
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  auto [nx, gx] = unpack(x, "affine");
  auto [nw, gw] = unpack(w, "affine");
  auto [nb, gb] = unpack(b, "affine");
  require_same_tape(x, w, "affine");
  require_same_tape(x, b, "affine");
  if (nx->shape.size() != 2 || nw->shape.size() != 2 || nb->shape.size() != 1) {
    throw std::invalid_argument("affine: expects [k×d]·[d×h]+[h], got " +
                                shape_str(nx->shape) + ", " + shape_str(nw->shape) +
                                ", " + shape_str(nb->shape));
  }
  const std::size_t k = nx->shape[0], d = nx->shape[1];
  const std::size_t d2 = nw->shape[0], h = nw->shape[1];
  if (d != d2 || nb->shape[0] != h) {
    throw std::invalid_argument("affine: dimension mismatch: " + shape_str(nx->shape) +
                                ", " + shape_str(nw->shape) + ", " + shape_str(nb->shape));
  }
  std::vector<double> out(k * h);
  {
    const double* xv = nx->value.data();
    const double* wv = nw->value.data();
    const double* bv = nb->value.data();
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < h; ++j) {
        double acc = bv[j];
        for (std::size_t p = 0; p < d; ++p) acc += xv[i * d + p] * wv[p * h + j];
        out[i * h + j] = acc;
      }
  }
  auto back = [nx, nw, nb, gx, gw, gb, k, d, h](Tape& tp, detail::Node& self) {
    const double* g = self.grad.data();
    if (gx) {
      double* gxv = tp.grad_buffer(nx);
      const double* wv = nw->value.data();
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t p = 0; p < d; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < h; ++j) acc += g[i * h + j] * wv[p * h + j];
          gxv[i * d + p] += acc;
        }
    }
    if (gw) {
      double* gwv = tp.grad_buffer(nw);
      const double* xv = nx->value.data();
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t j = 0; j < h; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < k; ++i) acc += xv[i * d + p] * g[i * h + j];
          gwv[p * h + j] += acc;
        }
    }
    if (gb) {
      double* gbv = tp.grad_buffer(nb);
      for (std::size_t j = 0; j < h; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) acc += g[i * h + j];
        gbv[j] += acc;
      }
    }
  };
  return x.tape()->make_node({k, h}, std::move(out), gx || gw || gb, back, "affine");
}

namespace {

Tensor unary(const Tensor& x, const char* name, const std::function<double(double)>& f,
             const std::function<double(double, double)>& dfdx_from_in_out) {
  auto [nx, gx] = unpack(x, name);
  std::vector<double> out(nx->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(nx->value[i]);
  auto back = [nx, dfdx_from_in_out](Tape& tp, detail::Node& self) {
    double* gxv = tp.grad_buffer(nx);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      gxv[i] += self.grad[i] * dfdx_from_in_out(nx->value[i], self.value[i]);
    }
  };
  return x.tape()->make_node(nx->shape, std::move(out), gx, back, name);
}

}  // namespace

Tensor relu(const Tensor& x) {
  // relu'(0) = 0 (subgradient choice).
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& x) {
  detail::Node* nx = require_node(x, "log");
  for (double v : nx->value) {
    if (!(v > 0.0)) {
      throw std::domain_error("log: non-positive input " + std::to_string(v));
    }
  }
  return unary(
      x, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double out) { return out; });
}

namespace {

enum class BinKind { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
  auto [na, ga] = unpack(a, name);
  auto [nb, gb] = unpack(b, name);
  require_same_tape(a, b, name);
  const bool a_scalar = is_scalar_shape(na->shape);
  const bool b_scalar = is_scalar_shape(nb->shape);
  if (!a_scalar && !b_scalar && na->shape != nb->shape) {
    throw std::invalid_argument(std::string(name) + ": shape mismatch " +
                                shape_str(na->shape) + " vs " + shape_str(nb->shape) +
                                " (only scalar-with-tensor broadcast is supported)");
  }
  const Shape& out_shape = a_scalar ? nb->shape : na->shape;
  const std::size_t n = shape_size(out_shape);
  std::vector<double> out(n);
  const double* av = na->value.data();
  const double* bv = nb->value.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a_scalar ? av[0] : av[i];
    const double y = b_scalar ? bv[0] : bv[i];
    switch (kind) {
      case BinKind::kAdd: out[i] = x + y; break;
      case BinKind::kSub: out[i] = x - y; break;
      case BinKind::kMul: out[i] = x * y; break;
    }
  }
  auto back = [na, nb, ga, gb, a_scalar, b_scalar, kind](Tape& tp, detail::Node& self) {
    const std::size_t n = self.grad.size();
    const double* g = self.grad.data();
    if (ga) {
      double* gav = tp.grad_buffer(na);
      for (std::size_t i = 0; i < n; ++i) {
        double contrib = g[i];
        if (kind == BinKind::kMul) {
          contrib *= b_scalar ? nb->value[0] : nb->value[i];
        }
        gav[a_scalar ? 0 : i] += contrib;
      }
    }
    if (gb) {
      double* gbv = tp.grad_buffer(nb);
      for (std::size_t i = 0; i < n; ++i) {
        double contrib = g[i];
        switch (kind) {
          case BinKind::kAdd: break;
          case BinKind::kSub: contrib = -contrib; break;
          case BinKind::kMul: contrib *= a_scalar ? na->value[0] : na->value[i]; break;
        }
        gbv[b_scalar ? 0 : i] += contrib;
      }
    }
  };
  return a.tape()->make_node(out_shape, std::move(out), ga || gb, back, name);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinKind::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinKind::kMul, "mul"); }

Tensor scale(const Tensor& x, double c) {
  if (!std::isfinite(c)) throw std::invalid_argument("scale: non-finite factor");
  auto [nx, gx] = unpack(x, "scale");
  std::vector<double> out(nx->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nx->value[i] * c;
  auto back = [nx, c](Tape& tp, detail::Node& self) {
    double* gxv = tp.grad_buffer(nx);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gxv[i] += self.grad[i] * c;
  };
  return x.tape()->make_node(nx->shape, std::move(out), gx, back, "scale");
}

Tensor add_scalar(const Tensor& x, double c) {
  if (!std::isfinite(c)) throw std::invalid_argument("add_scalar: non-finite addend");
  auto [nx, gx] = unpack(x, "add_scalar");
  std::vector<double> out(nx->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nx->value[i] + c;
  auto back = [nx](Tape& tp, detail::Node& self) {
    double* gxv = tp.grad_buffer(nx);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gxv[i] += self.grad[i];
  };
  return x.tape()->make_node(nx->shape, std::move(out), gx, back, "add_scalar");
}

Tensor sum(const Tensor& x) {
  auto [nx, gx] = unpack(x, "sum");
  double acc = 0.0;
  for (double v : nx->value) acc += v;
  auto back = [nx](Tape& tp, detail::Node& self) {
    double* gxv = tp.grad_buffer(nx);
    const double g = self.grad[0];
    for (std::size_t i = 0; i < nx->value.size(); ++i) gxv[i] += g;
  };
  return x.tape()->make_node(Shape{}, {acc}, gx, back, "sum");
}

Tensor mean(const Tensor& x) {
  auto [nx, gx] = unpack(x, "mean");
  if (nx->value.empty()) throw std::invalid_argument("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(nx->value.size());
  double acc = 0.0;
  for (double v : nx->value) acc += v;
  acc *= inv;
  auto back = [nx, inv](Tape& tp, detail::Node& self) {
    double* gxv = tp.grad_buffer(nx);
    const double g = self.grad[0] * inv;
    for (std::size_t i = 0; i < nx->value.size(); ++i) gxv[i] += g;
  };
  return x.tape()->make_node(Shape{}, {acc}, gx, back, "mean");
}

Tensor row(const Tensor& m, std::size_t i) {
  auto [nm, gm] = unpack(m, "row");
  if (nm->shape.size() != 2) {
    throw std::invalid_argument("row: expects rank-2 tensor, got " + shape_str(nm->shape));
  }
  const std::size_t rows = nm->shape[0], cols = nm->shape[1];
  if (i >= rows) throw std::invalid_argument("row: index out of range");
  std::vector<double> out(nm->value.begin() + static_cast<std::ptrdiff_t>(i * cols),
                          nm->value.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols));
  auto back = [nm, i, cols](Tape& tp, detail::Node& self) {
    double* gmv = tp.grad_buffer(nm);
    for (std::size_t j = 0; j < cols; ++j) gmv[i * cols + j] += self.grad[j];
  };
  return m.tape()->make_node({cols}, std::move(out), gm, back, "row");
}

Tensor col_slice(const Tensor& m, std::size_t c0, std::size_t c1) {
  auto [nm, gm] = unpack(m, "col_slice");
  if (nm->shape.size() != 2) {
    throw std::invalid_argument("col_slice: expects rank-2 tensor");
  }
  const std::size_t rows = nm->shape[0], cols = nm->shape[1];
  if (c0 >= c1 || c1 > cols) throw std::invalid_argument("col_slice: bad column range");
  const std::size_t w = c1 - c0;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = nm->value[r * cols + c0 + j];
  auto back = [nm, c0, w, rows, cols](Tape& tp, detail::Node& self) {
    double* gmv = tp.grad_buffer(nm);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) gmv[r * cols + c0 + j] += self.grad[r * w + j];
  };
  return m.tape()->make_node({rows, w}, std::move(out), gm, back, "col_slice");
}

Tensor pick(const Tensor& v, std::size_t idx) {
  auto [nv, gv] = unpack(v, "pick");
  if (nv->shape.size() != 1) throw std::invalid_argument("pick: expects rank-1 tensor");
  if (idx >= nv->value.size()) throw std::invalid_argument("pick: index out of range");
  auto back = [nv, idx](Tape& tp, detail::Node& self) {
    tp.grad_buffer(nv)[idx] += self.grad[0];
  };
  return v.tape()->make_node(Shape{}, {nv->value[idx]}, gv, back, "pick");
}

Tensor stack(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("stack: empty input");
  std::vector<detail::Node*> parents(scalars.size());
  bool any_grad = false;
  std::vector<double> out(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    detail::Node* n = require_node(scalars[i], "stack");
    if (n->value.size() != 1) {
      throw std::invalid_argument("stack: operand " + std::to_string(i) + " is not scalar");
    }
    require_same_tape(scalars[0], scalars[i], "stack");
    parents[i] = n;
    any_grad = any_grad || n->requires_grad;
    out[i] = n->value[0];
  }
  auto back = [parents = std::move(parents)](Tape& tp, detail::Node& self) {
    for (std::size_t i = 0; i < parents.size(); ++i) {
      if (parents[i]->requires_grad) tp.grad_buffer(parents[i])[0] += self.grad[i];
    }
  };
  const std::size_t n_out = out.size();
  return scalars[0].tape()->make_node({n_out}, std::move(out), any_grad, back, "stack");
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  auto [na, ga] = unpack(a, "cosine_similarity");
  auto [nb, gb] = unpack(b, "cosine_similarity");
  require_same_tape(a, b, "cosine_similarity");
  if (na->shape.size() != 1 || nb->shape.size() != 1 ||
      na->value.size() != nb->value.size() || na->value.empty()) {
    throw std::invalid_argument("cosine_similarity: expects equal-length vectors, got " +
                                shape_str(na->shape) + " and " + shape_str(nb->shape));
  }
  if (!(eps > 0.0)) throw std::invalid_argument("cosine_similarity: eps must be positive");
  const std::size_t d = na->value.size();
  const double norm_a = l2_norm(na->value.data(), d);
  const double norm_b = l2_norm(nb->value.data(), d);
  if (norm_a == 0.0 || norm_b == 0.0) {
    warn("cosine_similarity: zero vector input, similarity clamped to 0");
  }
  const double da = std::max(norm_a, eps);
  const double db = std::max(norm_b, eps);
  double dot = 0.0;
  for (std::size_t i = 0; i < d; ++i) dot += na->value[i] * nb->value[i];
  const double c = dot / (da * db);
  auto back = [na, nb, ga, gb, norm_a, norm_b, da, db, c, eps, d](Tape& tp,
                                                                  detail::Node& self) {
    const double g = self.grad[0];
    if (ga) {
      double* gav = tp.grad_buffer(na);
      const double through_norm = norm_a > eps ? c / (norm_a * da) : 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        gav[i] += g * (nb->value[i] / (da * db) - through_norm * na->value[i]);
      }
    }
    if (gb) {
      double* gbv = tp.grad_buffer(nb);
      const double through_norm = norm_b > eps ? c / (norm_b * db) : 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        gbv[i] += g * (na->value[i] / (da * db) - through_norm * nb->value[i]);
      }
    }
  };
  return a.tape()->make_node(Shape{}, {c}, ga || gb, back, "cosine_similarity");
}

Tensor softmax(const Tensor& v, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("softmax: temperature must be positive, got " +
                                std::to_string(temperature));
  }
  auto [nv, gv] = unpack(v, "softmax");
  if (nv->shape.size() != 1 || nv->value.empty()) {
    throw std::invalid_argument("softmax: expects a nonempty vector");
  }
  const std::size_t n = nv->value.size();
  const double m = *std::max_element(nv->value.begin(), nv->value.end());
  std::vector<double> out(n);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp((nv->value[i] - m) / temperature);
    denom += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= denom;
  auto back = [nv, temperature, n](Tape& tp, detail::Node& self) {
    double* gvv = tp.grad_buffer(nv);
    const double* p = self.value.data();
    const double* g = self.grad.data();
    double gdotp = 0.0;
    for (std::size_t i = 0; i < n; ++i) gdotp += g[i] * p[i];
    for (std::size_t i = 0; i < n; ++i) {
      gvv[i] += p[i] * (g[i] - gdotp) / temperature;
    }
  };
  return v.tape()->make_node({n}, std::move(out), gv, back, "softmax");
}

Tensor log_softmax(const Tensor& v) {
  auto [nv, gv] = unpack(v, "log_softmax");
  if (nv->shape.size() != 1 || nv->value.empty()) {
    throw std::invalid_argument("log_softmax: expects a nonempty vector");
  }
  const std::size_t n = nv->value.size();
  const double m = *std::max_element(nv->value.begin(), nv->value.end());
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) denom += std::exp(nv->value[i] - m);
  const double lse = std::log(denom);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (nv->value[i] - m) - lse;
  auto back = [nv, n](Tape& tp, detail::Node& self) {
    double* gvv = tp.grad_buffer(nv);
    const double* g = self.grad.data();
    double gsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) gsum += g[i];
    for (std::size_t i = 0; i < n; ++i) {
      gvv[i] += g[i] - std::exp(self.value[i]) * gsum;
    }
  };
  return v.tape()->make_node({n}, std::move(out), gv, back, "log_softmax");
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  auto [np, gp] = unpack(p, "kl_divergence");
  auto [nq, gq] = unpack(q, "kl_divergence");
  require_same_tape(p, q, "kl_divergence");
  if (np->shape.size() != 1 || np->shape != nq->shape || np->value.empty()) {
    throw std::invalid_argument("kl_divergence: expects equal-length vectors");
  }
  const std::size_t n = np->value.size();
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (np->value[i] < 0.0 || nq->value[i] < 0.0) {
      throw std::invalid_argument("kl_divergence: negative probability entry");
    }
    sp += np->value[i];
    sq += nq->value[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw std::invalid_argument("kl_divergence: inputs must sum to 1 (got " +
                                std::to_string(sp) + ", " + std::to_string(sq) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (np->value[i] > 0.0) {
      if (nq->value[i] == 0.0) {
        throw std::domain_error("kl_divergence: q is zero where p > 0 (infinite divergence)");
      }
      acc += np->value[i] * std::log(np->value[i] / nq->value[i]);
    }
  }
  auto back = [np, nq, gp, gq, n](Tape& tp, detail::Node& self) {
    const double g = self.grad[0];
    if (gp) {
      double* gpv = tp.grad_buffer(np);
      for (std::size_t i = 0; i < n; ++i) {
        if (np->value[i] > 0.0) {
          gpv[i] += g * (std::log(np->value[i] / nq->value[i]) + 1.0);
        }
      }
    }
    if (gq) {
      double* gqv = tp.grad_buffer(nq);
      for (std::size_t i = 0; i < n; ++i) {
        if (np->value[i] > 0.0) gqv[i] += -g * np->value[i] / nq->value[i];
      }
    }
  };
  return p.tape()->make_node(Shape{}, {acc}, gp || gq, back, "kl_divergence");
}

}  // namespace cscct::ad
