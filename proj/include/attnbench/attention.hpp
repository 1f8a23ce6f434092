#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnbench/autodiff.hpp"
#include "attnbench/tensor.hpp"

namespace attnbench {

// The five attention kernels, each a pure differentiable function of
// (Q, K, V) plus variant-specific parameters, and the multi-head wrapper.

enum class AttentionVariant {
  kSoftmax,
  kSigmoid,
  kLinear,
  kDoublyStochastic,
  kCosine,
};

inline const char* variant_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kSoftmax: return "softmax";
    case AttentionVariant::kSigmoid: return "sigmoid";
    case AttentionVariant::kLinear: return "linear";
    case AttentionVariant::kDoublyStochastic: return "doubly-stochastic";
    case AttentionVariant::kCosine: return "cosine";
  }
  return "?";
}

inline AttentionVariant variant_from_name(const std::string& s) {
  if (s == "softmax") return AttentionVariant::kSoftmax;
  if (s == "sigmoid") return AttentionVariant::kSigmoid;
  if (s == "linear") return AttentionVariant::kLinear;
  if (s == "doubly-stochastic") return AttentionVariant::kDoublyStochastic;
  if (s == "cosine") return AttentionVariant::kCosine;
  throw std::invalid_argument(
      "unknown attention mechanism '" + s +
      "' (expected softmax|sigmoid|linear|doubly-stochastic|cosine)");
}

// Variant selector plus every per-variant hyperparameter. Irrelevant fields
// are simply ignored by the other variants.
struct AttentionConfig {
  AttentionVariant variant = AttentionVariant::kSoftmax;
  int heads = 4;
  int head_dim = 16;

  // Sigmoid: bias added inside the logistic. Unset means the default
  // -log(n) for the sequence length n in use.
  std::optional<double> sigmoid_bias;

  // Linear: stability constant in the denominator.
  double linear_eps = 1e-6;

  // Doubly stochastic: Sinkhorn iteration cap and step size.
  int sinkhorn_max_iter = 20;
  double sinkhorn_eps = 2.0;

  // Cosine: initial value of the learnable stabilization parameter m.
  double cosine_m_init = 0.0;

  void validate() const {
    if (heads < 1 || head_dim < 1) {
      throw std::invalid_argument("AttentionConfig: heads and head_dim must be >= 1");
    }
    if (linear_eps <= 0) {
      throw std::invalid_argument("AttentionConfig: linear_eps must be > 0");
    }
    if (sinkhorn_eps <= 0) {
      throw std::invalid_argument("AttentionConfig: sinkhorn_eps must be > 0");
    }
    if (sinkhorn_max_iter < 1) {
      throw std::invalid_argument("AttentionConfig: sinkhorn_max_iter must be >= 1");
    }
  }
};

// Bias default: -log(n), evaluated for the sequence length actually used.
inline double resolve_sigmoid_bias(const AttentionConfig& cfg, std::size_t n) {
  if (cfg.sigmoid_bias.has_value()) return *cfg.sigmoid_bias;
  return -std::log(static_cast<double>(n));
}

// Final state of a Sinkhorn run, for inspection and tests. Plain tensors;
// the differentiable path lives on the tape.
template <typename T>
struct SinkhornState {
  Tensor<T> M;   // stabilized log-domain matrix (-c + u + v) / eps
  Tensor<T> u;   // row potentials
  Tensor<T> v;   // column potentials
  Tensor<T> mu;  // target row sums
  Tensor<T> nu;  // target column sums
  int iterations_run = 0;
};

namespace detail {

// Q and K must agree exactly; V shares the sequence length but may carry
// its own value width (useful for probing the weight matrix with V = I).
template <typename T>
void check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
               const char* op) {
  check_rank2(q, op);
  check_rank2(k, op);
  check_rank2(v, op);
  if (q.rows() != k.rows() || q.rows() != v.rows() || q.cols() != k.cols()) {
    throw std::invalid_argument(std::string(op) +
                                ": Q, K, V shapes disagree: " + q.shape_str() +
                                ", " + k.shape_str() + ", " + v.shape_str());
  }
  if (q.cols() < 1 || q.rows() < 1) {
    throw std::invalid_argument(std::string(op) + ": empty sequence");
  }
}

// Scaled scores QK^T / sqrt(d), shared by softmax / sigmoid / sinkhorn.
template <typename T>
Var<T> scaled_scores(Var<T> q, Var<T> k) {
  const T inv_sqrt_d =
      T(1) / std::sqrt(static_cast<T>(q.value().cols()));
  return scale(matmul(q, transpose(k)), inv_sqrt_d);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Softmax attention: softmax_rows(QK^T / sqrt(d)) V
// ---------------------------------------------------------------------------

template <typename T>
Var<T> softmax_attention(Var<T> q, Var<T> k, Var<T> v) {
  detail::check_qkv(q.value(), k.value(), v.value(), "softmax_attention");
  return matmul(softmax_rows(detail::scaled_scores(q, k)), v);
}

// ---------------------------------------------------------------------------
// Sigmoid attention: sigma(QK^T / sqrt(d) + b) V, then LayerScale gamma
// ---------------------------------------------------------------------------

// gamma is the per-channel LayerScale vector for the slice attended here
// (length = value dimension). Rows of the weight matrix are not normalized;
// each entry lies in (0,1) independently. The Var overload keeps the bias
// differentiable for gradient checks; the plain-real overload wraps it in a
// constant (the bias is a hyperparameter, not a trained weight).
template <typename T>
Var<T> sigmoid_attention(Var<T> q, Var<T> k, Var<T> v, Var<T> bias,
                         Var<T> gamma) {
  detail::check_qkv(q.value(), k.value(), v.value(), "sigmoid_attention");
  Var<T> weights = sigmoid(add_scalarvar(detail::scaled_scores(q, k), bias));
  return mul_rowvec(matmul(weights, v), gamma);
}

template <typename T>
Var<T> sigmoid_attention(Var<T> q, Var<T> k, Var<T> v, T bias, Var<T> gamma) {
  Var<T> b = q.tape->constant(Tensor<T>::full({1}, bias));
  return sigmoid_attention(q, k, v, b, gamma);
}

// ---------------------------------------------------------------------------
// Linear attention: psi(Q) (psi(K)^T V) / (psi(Q) psi(K)^T 1 + eps)
// ---------------------------------------------------------------------------

// Factorized form: the n x n weight matrix is never materialized. psi is
// ELU(x)+1 applied to both Q and K, keeping every factor strictly positive.
template <typename T>
Var<T> linear_attention(Var<T> q, Var<T> k, Var<T> v, T eps) {
  detail::check_qkv(q.value(), k.value(), v.value(), "linear_attention");
  if (eps <= T(0)) {
    throw std::invalid_argument("linear_attention: eps must be > 0");
  }
  Var<T> pq = elu_plus_one(q);             // [n x d]
  Var<T> pk = elu_plus_one(k);             // [n x d]
  Var<T> kv = matmul(transpose(pk), v);    // [d x d], cost O(n d^2)
  Var<T> numer = matmul(pq, kv);           // [n x d]
  // Denominator rows: psi(Q)_i . (sum of psi(K) rows).
  Var<T> ones = q.tape->constant(Tensor<T>::ones({k.value().rows(), 1}));
  Var<T> ksum = matmul(transpose(pk), ones);        // [d x 1]
  Var<T> denom_col = matmul(pq, ksum);              // [n x 1]
  Var<T> denom = reshape(denom_col, {q.value().rows()});
  return div_colvec(numer, add_scalar(denom, eps));
}

// ---------------------------------------------------------------------------
// Sinkhorn normalization
// ---------------------------------------------------------------------------

// Naive exp-domain iteration on K^0 = exp(C): alternating row and column
// normalizations, starting with rows. `max_iter` counts HALF-steps (each
// single normalization), matching the printed per-step indexing. Reference
// implementation used as a test oracle only; plain exp overflows for large
// C, so callers keep |C| small.
template <typename T>
Tensor<T> sinkhorn_naive(const Tensor<T>& c, int max_iter) {
  if (c.ndim() != 2 || c.rows() != c.cols()) {
    throw std::invalid_argument("sinkhorn_naive: expected square matrix, got " +
                                c.shape_str());
  }
  if (max_iter < 1) {
    throw std::invalid_argument("sinkhorn_naive: max_iter must be >= 1");
  }
  const std::size_t n = c.rows();
  Tensor<T> k(c.shape());
  for (std::size_t i = 0; i < k.numel(); ++i) k[i] = std::exp(c[i]);
  for (int l = 0; l < max_iter; ++l) {
    if (l % 2 == 0) {
      for (std::size_t i = 0; i < n; ++i) {
        T s = T(0);
        for (std::size_t j = 0; j < n; ++j) s += k(i, j);
        for (std::size_t j = 0; j < n; ++j) k(i, j) /= s;
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        T s = T(0);
        for (std::size_t i = 0; i < n; ++i) s += k(i, j);
        for (std::size_t i = 0; i < n; ++i) k(i, j) /= s;
      }
    }
  }
  return k;
}

template <typename T>
struct SinkhornRun {
  Var<T> transport;  // exp(M) after the final iteration
  SinkhornState<T> state;
};

// Log-domain Sinkhorn with potentials u, v:
//   M_ij = (-c_ij + u_i + v_j) / eps
//   u_i += eps * (log mu_i - logsumexp_j M_ij)   then recompute M,
//   v_j += eps * (log nu_j - logsumexp_i M_ij)
// One iteration is a (u, v) pair. Each u-update makes the row sums of
// exp(M) exactly mu (and likewise v for columns), which is what ties this
// to the naive exp-domain normalizations. Differentiation is through the
// unrolled iterations recorded on the tape.
template <typename T>
SinkhornRun<T> sinkhorn_log(Var<T> cost, const Tensor<T>& mu,
                            const Tensor<T>& nu, T eps, int max_iter) {
  Tape<T>& t = *cost.tape;
  const Tensor<T>& cv = cost.value();
  if (cv.ndim() != 2) {
    throw std::invalid_argument("sinkhorn_log: expected rank-2 cost, got " +
                                cv.shape_str());
  }
  const std::size_t n = cv.rows(), p = cv.cols();
  if (mu.ndim() != 1 || mu.shape()[0] != n || nu.ndim() != 1 ||
      nu.shape()[0] != p) {
    throw std::invalid_argument(
        "sinkhorn_log: marginal shapes " + mu.shape_str() + ", " +
        nu.shape_str() + " do not match cost " + cv.shape_str());
  }
  if (eps <= T(0)) {
    throw std::invalid_argument("sinkhorn_log: eps must be > 0");
  }
  if (max_iter < 1) {
    throw std::invalid_argument("sinkhorn_log: max_iter must be >= 1");
  }
  T mu_sum = T(0), nu_sum = T(0);
  Tensor<T> log_mu({n}), log_nu({p});
  for (std::size_t i = 0; i < n; ++i) {
    if (!(mu[i] > T(0))) {
      throw std::domain_error("sinkhorn_log: mu[" + std::to_string(i) +
                              "] = " + std::to_string(mu[i]) +
                              " is not strictly positive");
    }
    mu_sum += mu[i];
    log_mu[i] = std::log(mu[i]);
  }
  for (std::size_t j = 0; j < p; ++j) {
    if (!(nu[j] > T(0))) {
      throw std::domain_error("sinkhorn_log: nu[" + std::to_string(j) +
                              "] = " + std::to_string(nu[j]) +
                              " is not strictly positive");
    }
    nu_sum += nu[j];
    log_nu[j] = std::log(nu[j]);
  }
  const T scale_ref = std::max(std::abs(mu_sum), std::abs(nu_sum));
  if (std::abs(mu_sum - nu_sum) > T(1e-9) * std::max(scale_ref, T(1))) {
    throw std::domain_error("sinkhorn_log: marginal sums disagree: sum(mu) = " +
                            std::to_string(mu_sum) + ", sum(nu) = " +
                            std::to_string(nu_sum));
  }

  const T inv_eps = T(1) / eps;
  Var<T> neg_c = scale(cost, T(-1));
  Var<T> log_mu_v = t.constant(log_mu);
  Var<T> log_nu_v = t.constant(log_nu);
  Var<T> u = t.constant(Tensor<T>::zeros({n}));
  Var<T> v = t.constant(Tensor<T>::zeros({p}));

  auto build_m = [&](Var<T> uu, Var<T> vv) {
    return scale(add_rowvec(add_colvec(neg_c, uu), vv), inv_eps);
  };

  Var<T> m = build_m(u, v);
  for (int it = 0; it < max_iter; ++it) {
    u = add(u, scale(sub(log_mu_v, logsumexp_rows(m)), eps));
    m = build_m(u, v);
    v = add(v, scale(sub(log_nu_v, logsumexp_cols(m)), eps));
    m = build_m(u, v);
  }
  Var<T> transport = exp(m);

  SinkhornState<T> state{m.value(), u.value(), v.value(), mu, nu, max_iter};
  return SinkhornRun<T>{transport, std::move(state)};
}

// ---------------------------------------------------------------------------
// Doubly stochastic attention: Sinkhorn(QK^T / sqrt(d)) V
// ---------------------------------------------------------------------------

// Cost is c = -QK^T/sqrt(d) (high similarity = low transport cost) with
// uniform marginals mu = nu = 1/n; the converged transport has row and
// column sums 1/n, so it is rescaled by n to make rows and columns each sum
// to one, and that matrix weights V.
template <typename T>
Var<T> doubly_stochastic_attention(Var<T> q, Var<T> k, Var<T> v,
                                   const AttentionConfig& cfg) {
  detail::check_qkv(q.value(), k.value(), v.value(),
                    "doubly_stochastic_attention");
  const std::size_t n = q.value().rows();
  Var<T> cost = scale(detail::scaled_scores(q, k), T(-1));
  Tensor<T> marg = Tensor<T>::full({n}, T(1) / static_cast<T>(n));
  SinkhornRun<T> run =
      sinkhorn_log(cost, marg, marg, static_cast<T>(cfg.sinkhorn_eps),
                   cfg.sinkhorn_max_iter);
  Var<T> weights = scale(run.transport, static_cast<T>(n));
  return matmul(weights, v);
}

// ---------------------------------------------------------------------------
// Cosine attention: (cos(Q, K) / n^{sigma(m)}) V
// ---------------------------------------------------------------------------

// Rows of Q and K are independently L2-normalized (norms floored at 1e-12,
// so an all-zero row yields zero similarities instead of NaN), giving a true
// cosine-similarity matrix in [-1, 1]. m is the learnable stabilization
// scalar; n^{sigma(m)} is computed as exp(sigma(m) * log n) so the gradient
// flows into m.
template <typename T>
Var<T> cosine_attention(Var<T> q, Var<T> k, Var<T> v, Var<T> m) {
  detail::check_qkv(q.value(), k.value(), v.value(), "cosine_attention");
  if (m.value().numel() != 1) {
    throw std::invalid_argument("cosine_attention: m must be scalar, got " +
                                m.value().shape_str());
  }
  const std::size_t n = q.value().rows();
  Var<T> qn = l2_normalize_rows(q);
  Var<T> kn = l2_normalize_rows(k);
  Var<T> cos_sim = matmul(qn, transpose(kn));
  Var<T> denom = exp(scale(sigmoid(m), std::log(static_cast<T>(n))));
  return matmul(div_scalarvar(cos_sim, denom), v);
}

// ---------------------------------------------------------------------------
// Multi-head wrapper
// ---------------------------------------------------------------------------

// Per-layer attention parameters as tape variables. gamma (LayerScale) is
// used by the sigmoid variant only; m by cosine only.
template <typename T>
struct MultiHeadParams {
  Var<T> w_q, b_q;
  Var<T> w_k, b_k;
  Var<T> w_v, b_v;
  Var<T> w_o, b_o;
  Var<T> gamma;  // [dim], sigmoid only
  Var<T> m;      // [1], cosine only
};

// Projects X to Q, K, V, runs the configured kernel independently per head
// on column slices, concatenates and output-projects. LayerScale, being a
// per-channel scale, commutes with the concat, so applying each gamma slice
// inside its head is identical to scaling the concatenated output.
template <typename T>
Var<T> multi_head(Var<T> x, const MultiHeadParams<T>& p,
                  const AttentionConfig& cfg) {
  cfg.validate();
  const std::size_t n = x.value().rows();
  const std::size_t dim = x.value().cols();
  const std::size_t h = static_cast<std::size_t>(cfg.heads);
  const std::size_t hd = static_cast<std::size_t>(cfg.head_dim);
  if (h * hd != dim) {
    throw std::invalid_argument(
        "multi_head: heads (" + std::to_string(h) + ") x head_dim (" +
        std::to_string(hd) + ") != embedding dim (" + std::to_string(dim) +
        ")");
  }
  Var<T> q = add_rowvec(matmul(x, p.w_q), p.b_q);
  Var<T> k = add_rowvec(matmul(x, p.w_k), p.b_k);
  Var<T> v = add_rowvec(matmul(x, p.w_v), p.b_v);

  const T bias = static_cast<T>(resolve_sigmoid_bias(cfg, n));
  std::vector<Var<T>> heads;
  heads.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    Var<T> qh = slice_cols(q, i * hd, hd);
    Var<T> kh = slice_cols(k, i * hd, hd);
    Var<T> vh = slice_cols(v, i * hd, hd);
    switch (cfg.variant) {
      case AttentionVariant::kSoftmax:
        heads.push_back(softmax_attention(qh, kh, vh));
        break;
      case AttentionVariant::kSigmoid:
        heads.push_back(
            sigmoid_attention(qh, kh, vh, bias, segment(p.gamma, i * hd, hd)));
        break;
      case AttentionVariant::kLinear:
        heads.push_back(
            linear_attention(qh, kh, vh, static_cast<T>(cfg.linear_eps)));
        break;
      case AttentionVariant::kDoublyStochastic:
        heads.push_back(doubly_stochastic_attention(qh, kh, vh, cfg));
        break;
      case AttentionVariant::kCosine:
        heads.push_back(cosine_attention(qh, kh, vh, p.m));
        break;
    }
  }
  Var<T> cat = h == 1 ? heads[0] : concat_cols(heads);
  return add_rowvec(matmul(cat, p.w_o), p.b_o);
}

}  // namespace attnbench
