#pragma once

// Dense row-major tensors and the deterministic kernels everything else is
// built on. Summations run in fixed ascending-index order; two calls with the
// same inputs produce bit-identical outputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mimlab {

template <typename S>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> sh, S fill = S(0)) : shape(std::move(sh)) {
    data.assign(static_cast<size_t>(numel_of(shape)), fill);
  }

  // Zero extents are allowed so that empty selections (e.g. no visible
  // patches) stay representable.
  static int64_t numel_of(const std::vector<int64_t>& sh) {
    int64_t n = 1;
    for (int64_t e : sh) {
      if (e < 0) throw std::invalid_argument("tensor extents must be non-negative");
      n *= e;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int64_t rows() const { return shape.at(rank() - 2); }
  int64_t cols() const { return shape.at(rank() - 1); }

  S& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  S at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  S& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  S at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Named parameter set. std::map keeps iteration in name order, which the
// optimizer and the archive writer rely on.
template <typename S>
using ParamMap = std::map<std::string, TensorT<S>>;

template <typename To, typename From>
TensorT<To> cast(const TensorT<From>& t) {
  TensorT<To> out(t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

template <typename To, typename From>
ParamMap<To> cast_params(const ParamMap<From>& p) {
  ParamMap<To> out;
  for (const auto& [k, v] : p) out.emplace(k, cast<To>(v));
  return out;
}

template <typename S>
bool all_finite(const TensorT<S>& t) {
  for (S v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename S>
void assert_finite(const TensorT<S>& t, const char* what) {
  if (!all_finite(t)) throw std::runtime_error(std::string("non-finite values in ") + what);
}

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

// C = A * B with the inner sum taken in ascending k. The i-k-j loop performs
// the additions for each output element in exactly that order.
template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("matmul: rank-2 tensors required");
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner extents disagree");
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  TensorT<S> c({m, n});
  for (int64_t i = 0; i < m; ++i) {
    S* crow = &c.data[static_cast<size_t>(i * n)];
    for (int64_t kk = 0; kk < k; ++kk) {
      const S aik = a.at(i, kk);
      const S* brow = &b.data[static_cast<size_t>(kk * n)];
      for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

template <typename S>
TensorT<S> transpose(const TensorT<S>& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
  TensorT<S> t({a.cols(), a.rows()});
  for (int64_t i = 0; i < a.rows(); ++i)
    for (int64_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  TensorT<S> c(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] + b.data[i];
  return c;
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("sub: shape mismatch");
  TensorT<S> c(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] - b.data[i];
  return c;
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mul: shape mismatch");
  TensorT<S> c(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] * b.data[i];
  return c;
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S s) {
  TensorT<S> c(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] * s;
  return c;
}

// x[n,d] + v[d] broadcast over rows
template <typename S>
TensorT<S> add_rowvec(const TensorT<S>& x, const TensorT<S>& v) {
  if (x.rank() != 2 || v.rank() != 1 || v.shape[0] != x.cols())
    throw std::invalid_argument("add_rowvec: shape mismatch");
  TensorT<S> c(x.shape);
  for (int64_t i = 0; i < x.rows(); ++i)
    for (int64_t j = 0; j < x.cols(); ++j) c.at(i, j) = x.at(i, j) + v.at(j);
  return c;
}

// Row-wise softmax with max subtraction.
template <typename S>
TensorT<S> softmax_rows(const TensorT<S>& x) {
  if (x.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 tensor required");
  if (x.rows() > 0 && x.cols() == 0) throw std::invalid_argument("softmax_rows: empty axis");
  TensorT<S> y(x.shape);
  for (int64_t i = 0; i < x.rows(); ++i) {
    S mx = x.at(i, 0);
    for (int64_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
    S sum = S(0);
    for (int64_t j = 0; j < x.cols(); ++j) {
      const S e = std::exp(x.at(i, j) - mx);
      y.at(i, j) = e;
      sum += e;
    }
    for (int64_t j = 0; j < x.cols(); ++j) y.at(i, j) /= sum;
  }
  return y;
}

// Per-row standardization (population variance) followed by gamma*x + beta.
template <typename S>
TensorT<S> layernorm_rows(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                          S eps = S(1e-6)) {
  if (x.rank() != 2) throw std::invalid_argument("layernorm_rows: rank-2 tensor required");
  const int64_t d = x.cols();
  if (gamma.numel() != d || beta.numel() != d) throw std::invalid_argument("layernorm_rows: affine width mismatch");
  if (!(eps > S(0))) throw std::invalid_argument("layernorm_rows: eps must be positive");
  TensorT<S> y(x.shape);
  for (int64_t i = 0; i < x.rows(); ++i) {
    S mean = S(0);
    for (int64_t j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= S(d);
    S var = S(0);
    for (int64_t j = 0; j < d; ++j) {
      const S c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= S(d);
    const S inv = S(1) / std::sqrt(var + eps);
    for (int64_t j = 0; j < d; ++j) y.at(i, j) = gamma.at(j) * ((x.at(i, j) - mean) * inv) + beta.at(j);
  }
  return y;
}

// Standardize each row to mean 0 / variance 1, no affine. Used on teacher
// patch features.
template <typename S>
TensorT<S> standardize_rows(const TensorT<S>& x, S eps = S(1e-6)) {
  TensorT<S> ones({x.cols()}, S(1));
  TensorT<S> zeros({x.cols()}, S(0));
  return layernorm_rows(x, ones, zeros, eps);
}

// Exact erf form: 0.5 * x * (1 + erf(x / sqrt(2)))
template <typename S>
S gelu_scalar(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(0.7071067811865475)));
}

template <typename S>
S gelu_grad_scalar(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(0.7071067811865475)));
  const S pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);
  return cdf + x * pdf;
}

template <typename S>
TensorT<S> gelu(const TensorT<S>& x) {
  TensorT<S> y(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = gelu_scalar(x.data[i]);
  return y;
}

template <typename S>
TensorT<S> gather_rows(const TensorT<S>& x, const std::vector<int>& idx) {
  if (x.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 tensor required");
  TensorT<S> y({static_cast<int64_t>(idx.size()), x.cols()});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows()) throw std::out_of_range("gather_rows: index out of range");
    for (int64_t j = 0; j < x.cols(); ++j) y.at(static_cast<int64_t>(i), j) = x.at(idx[i], j);
  }
  return y;
}

template <typename S>
S sum_all(const TensorT<S>& x) {
  S s = S(0);
  for (S v : x.data) s += v;
  return s;
}

template <typename S>
S mean_all(const TensorT<S>& x) {
  return sum_all(x) / S(x.numel());
}

template <typename S>
bool bit_equal(const TensorT<S>& a, const TensorT<S>& b) {
  if (!a.same_shape(b)) return false;
  for (size_t i = 0; i < a.data.size(); ++i) {
    // bitwise comparison, so -0.0 != 0.0 and NaN == NaN by pattern
    if (std::memcmp(&a.data[i], &b.data[i], sizeof(S)) != 0) return false;
  }
  return true;
}

template <typename S>
int64_t param_count(const ParamMap<S>& p) {
  int64_t n = 0;
  for (const auto& [k, v] : p) n += v.numel();
  return n;
}

}  // namespace mimlab
