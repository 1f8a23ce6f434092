#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "attnbench/tensor.hpp"

namespace attnbench {

// Reverse-mode automatic differentiation on a tape.
//
// Every op appends a node holding its forward value plus a closure that
// scatters the node's incoming gradient into the node's inputs. Inputs are
// always created before the ops that consume them, so construction order is
// a topological order and backward() is a single reverse sweep that fires
// each closure exactly once. Gradients accumulate across fan-out, which also
// means one tape can hold a whole minibatch sharing parameter leaves: after
// one backward() the parameter gradients are the batch sums.

template <typename T>
class Tape;

// Lightweight handle into a tape. Copyable; the tape owns all storage.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t idx = 0;

  const Tensor<T>& value() const;
  const Tensor<T>& grad() const;
  bool requires_grad() const;
};

template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A leaf holds an input; set requires_grad for trainable parameters.
  Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), nullptr, requires_grad});
    return Var<T>{this, nodes_.size() - 1};
  }

  // Constant leaf: no gradient ever flows into it.
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Ops create their output node first, then attach the backward closure
  // (which needs to capture the output index).
  Var<T> result(Tensor<T> value, bool requires_grad) {
    return leaf(std::move(value), requires_grad);
  }

  void set_back(Var<T> v, BackFn fn) {
    if (nodes_[v.idx].requires_grad) nodes_[v.idx].back = std::move(fn);
  }

  const Tensor<T>& value(std::size_t idx) const { return nodes_[idx].value; }
  bool requires_grad(std::size_t idx) const { return nodes_[idx].requires_grad; }

  // Gradient buffer of a node, allocated (zeroed) on first access.
  Tensor<T>& grad(std::size_t idx) {
    Node& n = nodes_[idx];
    if (n.grad.numel() == 0) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  bool grad_touched(std::size_t idx) const {
    return nodes_[idx].grad.numel() != 0;
  }

  // Reverse sweep from a scalar loss. Nodes whose gradient was never touched
  // (dead branches) are skipped.
  void backward(Var<T> loss) {
    if (loss.tape != this) {
      throw std::invalid_argument("backward: variable lives on another tape");
    }
    if (nodes_[loss.idx].value.numel() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  nodes_[loss.idx].value.shape_str());
    }
    grad(loss.idx)[0] = T(1);
    for (std::size_t i = loss.idx + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back && n.grad.numel() != 0) n.back(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // Drops all nodes so the tape can be reused for the next step.
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackFn back;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(idx);
}

template <typename T>
const Tensor<T>& Var<T>::grad() const {
  return tape->grad(idx);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape->requires_grad(idx);
}

namespace detail {

template <typename T>
Tape<T>& tape_of(Var<T> a, Var<T> b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument(std::string(op) +
                                ": variables live on different tapes");
  }
  return *a.tape;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  }
}

template <typename T>
void check_rank2(const Tensor<T>& x, const char* op) {
  if (x.ndim() != 2) {
    throw std::invalid_argument(std::string(op) +
                                ": expected rank-2 input, got " + x.shape_str());
  }
}

template <typename T>
void check_vector(const Tensor<T>& x, std::size_t len, const char* op) {
  if (x.ndim() != 1 || x.shape()[0] != len) {
    throw std::invalid_argument(std::string(op) + ": expected vector of " +
                                std::to_string(len) + " elements, got " +
                                x.shape_str());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops (matching shapes)
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::tape_of(a, b, "add");
  const Tensor<T>& av = t.value(a.idx);
  const Tensor<T>& bv = t.value(b.idx);
  detail::check_same_shape(av, bv, "add");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  Var<T> y = t.result(std::move(out), a.requires_grad() || b.requires_grad());
  t.set_back(y, [ai = a.idx, bi = b.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    if (tp.requires_grad(ai)) {
      Tensor<T>& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(bi)) {
      Tensor<T>& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
    }
  });
  return y;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::tape_of(a, b, "sub");
  const Tensor<T>& av = t.value(a.idx);
  const Tensor<T>& bv = t.value(b.idx);
  detail::check_same_shape(av, bv, "sub");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  Var<T> y = t.result(std::move(out), a.requires_grad() || b.requires_grad());
  t.set_back(y, [ai = a.idx, bi = b.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    if (tp.requires_grad(ai)) {
      Tensor<T>& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(bi)) {
      Tensor<T>& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
  return y;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::tape_of(a, b, "mul");
  const Tensor<T>& av = t.value(a.idx);
  const Tensor<T>& bv = t.value(b.idx);
  detail::check_same_shape(av, bv, "mul");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  Var<T> y = t.result(std::move(out), a.requires_grad() || b.requires_grad());
  t.set_back(y, [ai = a.idx, bi = b.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    if (tp.requires_grad(ai)) {
      Tensor<T>& ga = tp.grad(ai);
      const Tensor<T>& bval = tp.value(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bval[i];
    }
    if (tp.requires_grad(bi)) {
      Tensor<T>& gb = tp.grad(bi);
      const Tensor<T>& aval = tp.value(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * aval[i];
    }
  });
  return y;
}

// y = c * x for a compile-time-known constant c.
template <typename T>
Var<T> scale(Var<T> x, T c) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * xv[i];
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx, c](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += c * g[i];
  });
  return y;
}

template <typename T>
Var<T> add_scalar(Var<T> x, T c) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] + c;
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
  return y;
}

// ---------------------------------------------------------------------------
// Broadcast ops over the rows/columns of a matrix
// ---------------------------------------------------------------------------

// y[i,j] = x[i,j] + b[j]
template <typename T>
Var<T> add_rowvec(Var<T> x, Var<T> b) {
  Tape<T>& t = detail::tape_of(x, b, "add_rowvec");
  const Tensor<T>& xv = t.value(x.idx);
  const Tensor<T>& bv = t.value(b.idx);
  detail::check_rank2(xv, "add_rowvec");
  detail::check_vector(bv, xv.cols(), "add_rowvec");
  Tensor<T> out(xv.shape());
  const std::size_t n = xv.rows(), d = xv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = xv(i, j) + bv[j];
  Var<T> y = t.result(std::move(out), x.requires_grad() || b.requires_grad());
  t.set_back(y, [xi = x.idx, bi = b.idx, yi = y.idx, n, d](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    if (tp.requires_grad(xi)) {
      Tensor<T>& gx = tp.grad(xi);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    }
    if (tp.requires_grad(bi)) {
      Tensor<T>& gb = tp.grad(bi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g(i, j);
    }
  });
  return y;
}

// y[i,j] = x[i,j] + u[i]
template <typename T>
Var<T> add_colvec(Var<T> x, Var<T> u) {
  Tape<T>& t = detail::tape_of(x, u, "add_colvec");
  const Tensor<T>& xv = t.value(x.idx);
  const Tensor<T>& uv = t.value(u.idx);
  detail::check_rank2(xv, "add_colvec");
  detail::check_vector(uv, xv.rows(), "add_colvec");
  Tensor<T> out(xv.shape());
  const std::size_t n = xv.rows(), d = xv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = xv(i, j) + uv[i];
  Var<T> y = t.result(std::move(out), x.requires_grad() || u.requires_grad());
  t.set_back(y, [xi = x.idx, ui = u.idx, yi = y.idx, n, d](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    if (tp.requires_grad(xi)) {
      Tensor<T>& gx = tp.grad(xi);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    }
    if (tp.requires_grad(ui)) {
      Tensor<T>& gu = tp.grad(ui);
      for (std::size_t i = 0; i < n; ++i) {
        T s = T(0);
        for (std::size_t j = 0; j < d; ++j) s += g(i, j);
        gu[i] += s;
      }
    }
  });
  return y;
}

// y[i,j] = x[i,j] * r[j]
template <typename T>
Var<T> mul_rowvec(Var<T> x, Var<T> r) {
  Tape<T>& t = detail::tape_of(x, r, "mul_rowvec");
  const Tensor<T>& xv = t.value(x.idx);
  const Tensor<T>& rv = t.value(r.idx);
  detail::check_rank2(xv, "mul_rowvec");
  detail::check_vector(rv, xv.cols(), "mul_rowvec");
  Tensor<T> out(xv.shape());
  const std::size_t n = xv.rows(), d = xv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = xv(i, j) * rv[j];
  Var<T> y = t.result(std::move(out), x.requires_grad() || r.requires_grad());
  t.set_back(y, [xi = x.idx, ri = r.idx, yi = y.idx, n, d](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    if (tp.requires_grad(xi)) {
      Tensor<T>& gx = tp.grad(xi);
      const Tensor<T>& rval = tp.value(ri);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gx(i, j) += g(i, j) * rval[j];
    }
    if (tp.requires_grad(ri)) {
      Tensor<T>& gr = tp.grad(ri);
      const Tensor<T>& xval = tp.value(xi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gr[j] += g(i, j) * xval(i, j);
    }
  });
  return y;
}

// y[i,j] = x[i,j] / den[i]
template <typename T>
Var<T> div_colvec(Var<T> x, Var<T> den) {
  Tape<T>& t = detail::tape_of(x, den, "div_colvec");
  const Tensor<T>& xv = t.value(x.idx);
  const Tensor<T>& dv = t.value(den.idx);
  detail::check_rank2(xv, "div_colvec");
  detail::check_vector(dv, xv.rows(), "div_colvec");
  Tensor<T> out(xv.shape());
  const std::size_t n = xv.rows(), d = xv.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const T inv = T(1) / dv[i];
    for (std::size_t j = 0; j < d; ++j) out(i, j) = xv(i, j) * inv;
  }
  Var<T> y = t.result(std::move(out), x.requires_grad() || den.requires_grad());
  t.set_back(y, [xi = x.idx, di = den.idx, yi = y.idx, n, d](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    const Tensor<T>& dval = tp.value(di);
    const Tensor<T>& yval = tp.value(yi);
    if (tp.requires_grad(xi)) {
      Tensor<T>& gx = tp.grad(xi);
      for (std::size_t i = 0; i < n; ++i) {
        const T inv = T(1) / dval[i];
        for (std::size_t j = 0; j < d; ++j) gx(i, j) += g(i, j) * inv;
      }
    }
    if (tp.requires_grad(di)) {
      Tensor<T>& gd = tp.grad(di);
      for (std::size_t i = 0; i < n; ++i) {
        T s = T(0);
        for (std::size_t j = 0; j < d; ++j) s += g(i, j) * yval(i, j);
        gd[i] -= s / dval[i];
      }
    }
  });
  return y;
}

// y = x + s where s is a 1-element variable broadcast over x.
template <typename T>
Var<T> add_scalarvar(Var<T> x, Var<T> s) {
  Tape<T>& t = detail::tape_of(x, s, "add_scalarvar");
  const Tensor<T>& xv = t.value(x.idx);
  const Tensor<T>& sv = t.value(s.idx);
  if (sv.numel() != 1) {
    throw std::invalid_argument("add_scalarvar: addend must be scalar, got " +
                                sv.shape_str());
  }
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] + sv[0];
  Var<T> y = t.result(std::move(out), x.requires_grad() || s.requires_grad());
  t.set_back(y, [xi = x.idx, si = s.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    if (tp.requires_grad(xi)) {
      Tensor<T>& gx = tp.grad(xi);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    }
    if (tp.requires_grad(si)) {
      T acc = T(0);
      for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i];
      tp.grad(si)[0] += acc;
    }
  });
  return y;
}

// y = x / s where s is a 1-element variable (a learned scalar).
template <typename T>
Var<T> div_scalarvar(Var<T> x, Var<T> s) {
  Tape<T>& t = detail::tape_of(x, s, "div_scalarvar");
  const Tensor<T>& xv = t.value(x.idx);
  const Tensor<T>& sv = t.value(s.idx);
  if (sv.numel() != 1) {
    throw std::invalid_argument("div_scalarvar: divisor must be scalar, got " +
                                sv.shape_str());
  }
  Tensor<T> out(xv.shape());
  const T inv = T(1) / sv[0];
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * inv;
  Var<T> y = t.result(std::move(out), x.requires_grad() || s.requires_grad());
  t.set_back(y, [xi = x.idx, si = s.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    const T sval = tp.value(si)[0];
    if (tp.requires_grad(xi)) {
      Tensor<T>& gx = tp.grad(xi);
      const T inv = T(1) / sval;
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * inv;
    }
    if (tp.requires_grad(si)) {
      const Tensor<T>& yval = tp.value(yi);
      T s_acc = T(0);
      for (std::size_t i = 0; i < g.numel(); ++i) s_acc += g[i] * yval[i];
      tp.grad(si)[0] -= s_acc / sval;
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Unary nonlinearities
// ---------------------------------------------------------------------------

template <typename T>
Var<T> exp(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(xv[i]);
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    const Tensor<T>& yval = tp.value(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * yval[i];
  });
  return y;
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    const Tensor<T>& yval = tp.value(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i)
      gx[i] += g[i] * yval[i] * (T(1) - yval[i]);
  });
  return y;
}

// ELU(x) + 1: exp(x) for x <= 0, x + 1 above. Output is strictly positive,
// and conveniently dy/dx = min(y, 1).
template <typename T>
Var<T> elu_plus_one(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = xv[i] > T(0) ? xv[i] + T(1) : std::exp(xv[i]);
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    const Tensor<T>& xval = tp.value(xi);
    const Tensor<T>& yval = tp.value(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i)
      gx[i] += g[i] * (xval[i] > T(0) ? T(1) : yval[i]);
  });
  return y;
}

// Exact GELU: x * Phi(x) with the Gaussian CDF.
template <typename T>
Var<T> gelu(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  Tensor<T> out(xv.shape());
  const T inv_sqrt2 = T(0.70710678118654752440);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T phi = T(0.5) * (T(1) + std::erf(xv[i] * inv_sqrt2));
    out[i] = xv[i] * phi;
  }
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    const Tensor<T>& xval = tp.value(xi);
    Tensor<T>& gx = tp.grad(xi);
    const T inv_sqrt2 = T(0.70710678118654752440);
    const T inv_sqrt2pi = T(0.39894228040143267794);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T v = xval[i];
      const T phi_cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T phi_pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      gx[i] += g[i] * (phi_cdf + v * phi_pdf);
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::tape_of(a, b, "matmul");
  Tensor<T> out = matmul(t.value(a.idx), t.value(b.idx));
  Var<T> y = t.result(std::move(out), a.requires_grad() || b.requires_grad());
  t.set_back(y, [ai = a.idx, bi = b.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    if (tp.requires_grad(ai)) {
      // dA += g * B^T: row dots over the shared p dimension.
      const Tensor<T>& bv = tp.value(bi);
      Tensor<T>& ga = tp.grad(ai);
      detail::matmul_nt_accum(g.data(), bv.data(), ga.data(), g.rows(),
                              g.cols(), bv.rows());
    }
    if (tp.requires_grad(bi)) {
      // dB += A^T * g
      const Tensor<T>& av = tp.value(ai);
      Tensor<T>& gb = tp.grad(bi);
      detail::matmul_tn_accum(av.data(), g.data(), gb.data(), av.rows(),
                              av.cols(), g.cols());
    }
  });
  return y;
}

template <typename T>
Var<T> transpose(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = transpose(t.value(x.idx));
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    Tensor<T> gt = transpose(g);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < gt.numel(); ++i) gx[i] += gt[i];
  });
  return y;
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = softmax_rows(t.value(x.idx));
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    const Tensor<T>& yv = tp.value(yi);
    Tensor<T>& gx = tp.grad(xi);
    const std::size_t n = yv.rows(), d = yv.cols();
    for (std::size_t i = 0; i < n; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < d; ++j) dot += g(i, j) * yv(i, j);
      for (std::size_t j = 0; j < d; ++j)
        gx(i, j) += yv(i, j) * (g(i, j) - dot);
    }
  });
  return y;
}

// Per-row log-sum-exp, returning a length-n vector. The row softmax is saved
// at forward time so backward needs no further exp calls.
template <typename T>
Var<T> logsumexp_rows(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  detail::check_rank2(xv, "logsumexp_rows");
  const std::size_t n = xv.rows(), d = xv.cols();
  Tensor<T> out({n});
  Tensor<T> probs;
  const bool rg = x.requires_grad();
  if (rg) probs = Tensor<T>(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* in = xv.data() + i * d;
    T mx = in[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, in[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < d; ++j) sum += std::exp(in[j] - mx);
    out[i] = mx + std::log(sum);
    if (rg) {
      const T inv = T(1) / sum;
      T* p = probs.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) p[j] = std::exp(in[j] - mx) * inv;
    }
  }
  Var<T> y = t.result(std::move(out), rg);
  t.set_back(y, [xi = x.idx, yi = y.idx, probs = std::move(probs), n,
                 d](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < n; ++i) {
      const T gi = g[i];
      const T* p = probs.data() + i * d;
      T* gr = gx.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) gr[j] += gi * p[j];
    }
  });
  return y;
}

// Per-column log-sum-exp, returning a length-p vector.
template <typename T>
Var<T> logsumexp_cols(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  detail::check_rank2(xv, "logsumexp_cols");
  const std::size_t n = xv.rows(), p = xv.cols();
  Tensor<T> mx({p});
  for (std::size_t j = 0; j < p; ++j) mx[j] = xv(0, j);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) mx[j] = std::max(mx[j], xv(i, j));
  Tensor<T> sum({p});
  const bool rg = x.requires_grad();
  Tensor<T> probs;
  if (rg) probs = Tensor<T>(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      const T e = std::exp(xv(i, j) - mx[j]);
      sum[j] += e;
      if (rg) probs(i, j) = e;
    }
  Tensor<T> out({p});
  for (std::size_t j = 0; j < p; ++j) out[j] = mx[j] + std::log(sum[j]);
  if (rg) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) probs(i, j) /= sum[j];
  }
  Var<T> y = t.result(std::move(out), rg);
  t.set_back(y, [xi = x.idx, yi = y.idx, probs = std::move(probs), n,
                 p](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) gx(i, j) += g[j] * probs(i, j);
  });
  return y;
}

// ---------------------------------------------------------------------------
// Shape surgery: slicing, concatenation, reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t start, std::size_t count) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  detail::check_rank2(xv, "slice_rows");
  if (start + count > xv.rows()) {
    throw std::invalid_argument("slice_rows: rows [" + std::to_string(start) +
                                ", " + std::to_string(start + count) +
                                ") out of range for " + xv.shape_str());
  }
  const std::size_t d = xv.cols();
  Tensor<T> out({count, d});
  std::copy(xv.data() + start * d, xv.data() + (start + count) * d, out.data());
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx, start, count, d](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < count * d; ++i) gx[start * d + i] += g[i];
  });
  return y;
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t count) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  detail::check_rank2(xv, "slice_cols");
  if (start + count > xv.cols()) {
    throw std::invalid_argument("slice_cols: cols [" + std::to_string(start) +
                                ", " + std::to_string(start + count) +
                                ") out of range for " + xv.shape_str());
  }
  const std::size_t n = xv.rows(), d = xv.cols();
  Tensor<T> out({n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = xv(i, start + j);
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx, start, count, n, d](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j)
        gx.data()[i * d + start + j] += g(i, j);
  });
  return y;
}

// Same data, new shape (element count must match).
template <typename T>
Var<T> reshape(Var<T> x, std::vector<std::size_t> shape) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  Tensor<T> out = Tensor<T>::from(std::move(shape), xv.values());
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
  return y;
}

// Contiguous slice of a 1-d vector.
template <typename T>
Var<T> segment(Var<T> x, std::size_t start, std::size_t count) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  if (xv.ndim() != 1 || start + count > xv.shape()[0]) {
    throw std::invalid_argument("segment: [" + std::to_string(start) + ", " +
                                std::to_string(start + count) +
                                ") out of range for " + xv.shape_str());
  }
  Tensor<T> out({count});
  std::copy(xv.data() + start, xv.data() + start + count, out.data());
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx, start, count](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < count; ++i) gx[start + i] += g[i];
  });
  return y;
}

template <typename T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::tape_of(a, b, "concat_rows");
  const Tensor<T>& av = t.value(a.idx);
  const Tensor<T>& bv = t.value(b.idx);
  detail::check_rank2(av, "concat_rows");
  detail::check_rank2(bv, "concat_rows");
  if (av.cols() != bv.cols()) {
    throw std::invalid_argument("concat_rows: column counts disagree: " +
                                av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor<T> out({av.rows() + bv.rows(), av.cols()});
  std::copy(av.data(), av.data() + av.numel(), out.data());
  std::copy(bv.data(), bv.data() + bv.numel(), out.data() + av.numel());
  Var<T> y = t.result(std::move(out), a.requires_grad() || b.requires_grad());
  t.set_back(y, [ai = a.idx, bi = b.idx, yi = y.idx, na = av.numel(),
                 nb = bv.numel()](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    if (tp.requires_grad(ai)) {
      Tensor<T>& ga = tp.grad(ai);
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(bi)) {
      Tensor<T>& gb = tp.grad(bi);
      for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
    }
  });
  return y;
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_cols: no inputs");
  }
  Tape<T>& t = *parts[0].tape;
  const std::size_t n = t.value(parts[0].idx).rows();
  std::size_t total = 0;
  bool rg = false;
  for (const Var<T>& p : parts) {
    const Tensor<T>& pv = t.value(p.idx);
    detail::check_rank2(pv, "concat_cols");
    if (pv.rows() != n) {
      throw std::invalid_argument("concat_cols: row counts disagree: " +
                                  t.value(parts[0].idx).shape_str() + " vs " +
                                  pv.shape_str());
    }
    total += pv.cols();
    rg = rg || p.requires_grad();
  }
  Tensor<T> out({n, total});
  std::size_t off = 0;
  std::vector<std::size_t> idxs, widths;
  for (const Var<T>& p : parts) {
    const Tensor<T>& pv = t.value(p.idx);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j)
        out(i, off + j) = pv(i, j);
    idxs.push_back(p.idx);
    widths.push_back(pv.cols());
    off += pv.cols();
  }
  Var<T> y = t.result(std::move(out), rg);
  t.set_back(y, [idxs = std::move(idxs), widths = std::move(widths),
                 yi = y.idx, n, total](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    std::size_t off = 0;
    for (std::size_t k = 0; k < idxs.size(); ++k) {
      if (tp.requires_grad(idxs[k])) {
        Tensor<T>& gp = tp.grad(idxs[k]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j)
            gp(i, j) += g(i, off + j);
      }
      off += widths[k];
    }
  });
  return y;
}

// Sum of all elements, as a 1-element tensor.
template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  T s = T(0);
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  Tensor<T> out({1});
  out[0] = s;
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx](Tape<T>& tp) {
    const T g = tp.grad(yi)[0];
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  });
  return y;
}

// Column means over all rows: [n x d] -> [1 x d].
template <typename T>
Var<T> mean_over_rows(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  detail::check_rank2(xv, "mean_over_rows");
  const std::size_t n = xv.rows(), d = xv.cols();
  Tensor<T> out({1, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += xv(i, j);
  const T inv = T(1) / static_cast<T>(n);
  for (std::size_t j = 0; j < d; ++j) out[j] *= inv;
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx, n, d](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    Tensor<T>& gx = tp.grad(xi);
    const T inv = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) gx(i, j) += g[j] * inv;
  });
  return y;
}

// ---------------------------------------------------------------------------
// Normalization ops
// ---------------------------------------------------------------------------

// Rows rescaled to unit L2 norm. Norms are floored at `floor` so an
// all-zero row maps to an all-zero row instead of NaN (guarded, by design).
template <typename T>
Var<T> l2_normalize_rows(Var<T> x, T floor = T(1e-12)) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x.idx);
  detail::check_rank2(xv, "l2_normalize_rows");
  const std::size_t n = xv.rows(), d = xv.cols();
  Tensor<T> out(xv.shape());
  Tensor<T> inv_norm({n});
  for (std::size_t i = 0; i < n; ++i) {
    T sq = T(0);
    for (std::size_t j = 0; j < d; ++j) sq += xv(i, j) * xv(i, j);
    const T nu = std::max(std::sqrt(sq), floor);
    inv_norm[i] = T(1) / nu;
    for (std::size_t j = 0; j < d; ++j) out(i, j) = xv(i, j) * inv_norm[i];
  }
  Var<T> y = t.result(std::move(out), x.requires_grad());
  t.set_back(y, [xi = x.idx, yi = y.idx, inv_norm = std::move(inv_norm), n,
                 d](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    const Tensor<T>& yv = tp.value(yi);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < n; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < d; ++j) dot += g(i, j) * yv(i, j);
      for (std::size_t j = 0; j < d; ++j)
        gx(i, j) += inv_norm[i] * (g(i, j) - yv(i, j) * dot);
    }
  });
  return y;
}

// Per-row layer normalization with learned gain/shift.
template <typename T>
Var<T> layer_norm_rows(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
  Tape<T>& t = detail::tape_of(x, gamma, "layer_norm_rows");
  detail::tape_of(x, beta, "layer_norm_rows");
  const Tensor<T>& xv = t.value(x.idx);
  detail::check_rank2(xv, "layer_norm_rows");
  const std::size_t n = xv.rows(), d = xv.cols();
  detail::check_vector(t.value(gamma.idx), d, "layer_norm_rows");
  detail::check_vector(t.value(beta.idx), d, "layer_norm_rows");
  const Tensor<T>& gv = t.value(gamma.idx);
  const Tensor<T>& bv = t.value(beta.idx);
  Tensor<T> out(xv.shape());
  Tensor<T> xhat(xv.shape());
  Tensor<T> rstd({n});
  for (std::size_t i = 0; i < n; ++i) {
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += xv(i, j);
    mean /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      const T c = xv(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    rstd[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (xv(i, j) - mean) * rstd[i];
      out(i, j) = gv[j] * xhat(i, j) + bv[j];
    }
  }
  const bool rg =
      x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  Var<T> y = t.result(std::move(out), rg);
  t.set_back(y, [xi = x.idx, gi = gamma.idx, bi = beta.idx, yi = y.idx,
                 xhat = std::move(xhat), rstd = std::move(rstd), n,
                 d](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(yi);
    const Tensor<T>& gv = tp.value(gi);
    if (tp.requires_grad(gi)) {
      Tensor<T>& gg = tp.grad(gi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gg[j] += g(i, j) * xhat(i, j);
    }
    if (tp.requires_grad(bi)) {
      Tensor<T>& gb = tp.grad(bi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g(i, j);
    }
    if (tp.requires_grad(xi)) {
      Tensor<T>& gx = tp.grad(xi);
      const T invd = T(1) / static_cast<T>(d);
      for (std::size_t i = 0; i < n; ++i) {
        T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
        for (std::size_t j = 0; j < d; ++j) {
          const T dxh = g(i, j) * gv[j];
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xhat(i, j);
        }
        mean_dxhat *= invd;
        mean_dxhat_xhat *= invd;
        for (std::size_t j = 0; j < d; ++j) {
          const T dxh = g(i, j) * gv[j];
          gx(i, j) +=
              rstd[i] * (dxh - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
        }
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// Cross-entropy from raw logits (a single [1 x C] or [C] row) against an
// integer class label. Computed as logsumexp(z) - z[label].
template <typename T>
Var<T> cross_entropy_with_logits(Var<T> logits, std::size_t label) {
  Tape<T>& t = *logits.tape;
  const Tensor<T>& zv = t.value(logits.idx);
  const std::size_t c = zv.numel();
  if (zv.ndim() == 2 && zv.rows() != 1) {
    throw std::invalid_argument(
        "cross_entropy_with_logits: expected a single row of logits, got " +
        zv.shape_str());
  }
  if (label >= c) {
    throw std::out_of_range("cross_entropy_with_logits: label " +
                            std::to_string(label) + " out of range for " +
                            std::to_string(c) + " classes");
  }
  T mx = zv[0];
  for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, zv[j]);
  T sum = T(0);
  Tensor<T> probs({c});
  for (std::size_t j = 0; j < c; ++j) {
    probs[j] = std::exp(zv[j] - mx);
    sum += probs[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < c; ++j) probs[j] *= inv;
  Tensor<T> out({1});
  out[0] = mx + std::log(sum) - zv[label];
  Var<T> y = t.result(std::move(out), logits.requires_grad());
  t.set_back(y, [zi = logits.idx, yi = y.idx, probs = std::move(probs),
                 label](Tape<T>& tp) {
    const T g = tp.grad(yi)[0];
    Tensor<T>& gz = tp.grad(zi);
    for (std::size_t j = 0; j < gz.numel(); ++j) gz[j] += g * probs[j];
    gz[label] -= g;
  });
  return y;
}

// ---------------------------------------------------------------------------
// Numerical differentiation oracle
// ---------------------------------------------------------------------------

// Central-difference gradient of a scalar function of one tensor. This is
// the reference every analytic gradient is checked against.
template <typename T>
Tensor<T> finite_difference(const std::function<T(const Tensor<T>&)>& f,
                            const Tensor<T>& x, T step) {
  Tensor<T> g(x.shape());
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + step;
    const T hi = f(probe);
    probe[i] = orig - step;
    const T lo = f(probe);
    probe[i] = orig;
    g[i] = (hi - lo) / (T(2) * step);
  }
  return g;
}

}  // namespace attnbench
