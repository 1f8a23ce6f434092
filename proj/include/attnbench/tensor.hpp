#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnbench {

// Dense row-major tensor over float or double. Rank is dynamic but in
// practice everything here is 1-d (vectors) or 2-d (matrices); images are
// handled by the corruption module with its own type.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), T(0)) {}

  static Tensor zeros(std::vector<std::size_t> shape) {
    return Tensor(std::move(shape));
  }

  static Tensor full(std::vector<std::size_t> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor ones(std::vector<std::size_t> shape) {
    return full(std::move(shape), T(1));
  }

  static Tensor from(std::vector<std::size_t> shape, std::vector<T> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (values.size() != count(t.shape_)) {
      throw std::invalid_argument("Tensor::from: " +
                                  std::to_string(values.size()) +
                                  " values do not fill shape " +
                                  shape_string(t.shape_));
    }
    t.data_ = std::move(values);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }

  std::size_t rows() const {
    require_ndim(2, "rows");
    return shape_[0];
  }
  std::size_t cols() const {
    require_ndim(2, "cols");
    return shape_[1];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  T operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const { return shape_string(shape_); }

  static std::string shape_string(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) os << "x";
      os << s[i];
    }
    os << "]";
    return os.str();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out = Tensor<U>(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  void require_ndim(std::size_t n, const char* what) const {
    if (shape_.size() != n) {
      throw std::invalid_argument(std::string("Tensor::") + what +
                                  ": expected rank " + std::to_string(n) +
                                  " tensor, got shape " + shape_str());
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

namespace detail {

// Raw matmul kernels on row-major buffers. The loop orders are chosen so the
// innermost loop is a contiguous stream the compiler can vectorize.

// c[m x p] += a[m x k] * b[k x p]
template <typename T>
void matmul_nn_accum(const T* a, const T* b, T* c, std::size_t m,
                     std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * p;
    for (std::size_t l = 0; l < k; ++l) {
      const T aik = arow[l];
      const T* brow = b + l * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c[m x p] += a[m x k] * b[p x k]^T  (dot products of rows)
template <typename T>
void matmul_nt_accum(const T* a, const T* b, T* c, std::size_t m,
                     std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * p;
    for (std::size_t j = 0; j < p; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

// c[m x p] += a[n x m]^T * b[n x p]
template <typename T>
void matmul_tn_accum(const T* a, const T* b, T* c, std::size_t n,
                     std::size_t m, std::size_t p) {
  for (std::size_t l = 0; l < n; ++l) {
    const T* arow = a + l * m;
    const T* brow = b + l * p;
    for (std::size_t i = 0; i < m; ++i) {
      const T ali = arow[i];
      T* crow = c + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += ali * brow[j];
    }
  }
}

}  // namespace detail

template <typename T>
void check_matmul_shapes(const Tensor<T>& a, const Tensor<T>& b,
                         const char* op) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2 inputs, got " +
                                a.shape_str() + " and " + b.shape_str());
  }
}

// C = A * B with A [m x k], B [k x p].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_matmul_shapes(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                a.shape_str() + " vs " + b.shape_str());
  }
  Tensor<T> c({a.rows(), b.cols()});
  detail::matmul_nn_accum(a.data(), b.data(), c.data(), a.rows(), a.cols(),
                          b.cols());
  return c;
}

// C = A * B^T with A [m x k], B [p x k].
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  check_matmul_shapes(a, b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: inner dimensions disagree: " +
                                a.shape_str() + " vs " + b.shape_str());
  }
  Tensor<T> c({a.rows(), b.rows()});
  detail::matmul_nt_accum(a.data(), b.data(), c.data(), a.rows(), a.cols(),
                          b.rows());
  return c;
}

// C = A^T * B with A [n x m], B [n x p].
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  check_matmul_shapes(a, b, "matmul_tn");
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("matmul_tn: inner dimensions disagree: " +
                                a.shape_str() + " vs " + b.shape_str());
  }
  Tensor<T> c({a.cols(), b.cols()});
  detail::matmul_tn_accum(a.data(), b.data(), c.data(), a.rows(), a.cols(),
                          b.cols());
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.ndim() != 2) {
    throw std::invalid_argument("transpose: expected rank-2 input, got " +
                                x.shape_str());
  }
  Tensor<T> y({x.cols(), x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) y(j, i) = x(i, j);
  return y;
}

// Row-wise softmax with the usual max-shift for stability.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  if (x.ndim() != 2) {
    throw std::invalid_argument("softmax_rows: expected rank-2 input, got " +
                                x.shape_str());
  }
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const T* in = x.data() + i * x.cols();
    T* out = y.data() + i * x.cols();
    T mx = in[0];
    for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, in[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] *= inv;
  }
  return y;
}

// log(sum(exp(row))) per row, max-shifted. Returns a length-n vector.
template <typename T>
Tensor<T> logsumexp_rows(const Tensor<T>& x) {
  if (x.ndim() != 2) {
    throw std::invalid_argument("logsumexp_rows: expected rank-2 input, got " +
                                x.shape_str());
  }
  Tensor<T> y({x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const T* in = x.data() + i * x.cols();
    T mx = in[0];
    for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, in[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < x.cols(); ++j) sum += std::exp(in[j] - mx);
    y[i] = mx + std::log(sum);
  }
  return y;
}

// log(sum(exp(column))) per column. Returns a length-p vector.
template <typename T>
Tensor<T> logsumexp_cols(const Tensor<T>& x) {
  if (x.ndim() != 2) {
    throw std::invalid_argument("logsumexp_cols: expected rank-2 input, got " +
                                x.shape_str());
  }
  const std::size_t n = x.rows(), p = x.cols();
  Tensor<T> mx({p});
  for (std::size_t j = 0; j < p; ++j) mx[j] = x(0, j);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) mx[j] = std::max(mx[j], x(i, j));
  Tensor<T> sum({p});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) sum[j] += std::exp(x(i, j) - mx[j]);
  Tensor<T> y({p});
  for (std::size_t j = 0; j < p; ++j) y[j] = mx[j] + std::log(sum[j]);
  return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    y[i] = T(1) / (T(1) + std::exp(-x[i]));
  return y;
}

// ELU(x) + 1: strictly positive feature map (exp(x) for x <= 0, x + 1 above).
template <typename T>
Tensor<T> elu_plus_one(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    y[i] = x[i] > T(0) ? x[i] + T(1) : std::exp(x[i]);
  return y;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff: shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  }
  T m = T(0);
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

}  // namespace attnbench
