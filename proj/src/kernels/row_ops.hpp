#pragma once

// Per-row arithmetic shared by the serial and OpenMP kernels. Keeping one
// definition is what makes the two paths bit-identical.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "rbcssl/kernels.hpp"

namespace rbc::kernels::detail {

// One output row of C = op(A)·B for B in k×n layout (already un-transposed).
template <typename T>
inline void gemm_row(const GemmShape& s, const T* a, const T* b, T* c_row, std::size_t i,
                     bool accumulate) {
  if (!accumulate) std::fill(c_row, c_row + s.n, T(0));
  for (std::size_t p = 0; p < s.k; ++p) {
    const T av = s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
    if (av == T(0)) continue;
    const T* b_row = b + p * s.n;
    for (std::size_t j = 0; j < s.n; ++j) c_row[j] += av * b_row[j];
  }
}

// B stored n×k is transposed into k×n scratch so every row runs the axpy loop.
template <typename T>
inline const T* untranspose_b(const GemmShape& s, const T* b, std::vector<T>& scratch) {
  if (!s.trans_b) return b;
  scratch.resize(s.k * s.n);
  for (std::size_t j = 0; j < s.n; ++j)
    for (std::size_t p = 0; p < s.k; ++p) scratch[p * s.n + j] = b[j * s.k + p];
  return scratch.data();
}

template <typename T>
inline void softmax_row(const T* x, T* y, std::size_t cols, T inv_temp) {
  T mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  T sum = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp((x[j] - mx) * inv_temp);
    sum += y[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

template <typename T>
inline void log_softmax_row(const T* x, T* y, std::size_t cols, T inv_temp) {
  T mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  T sum = 0;
  for (std::size_t j = 0; j < cols; ++j) sum += std::exp((x[j] - mx) * inv_temp);
  const T lse = std::log(sum);
  for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mx) * inv_temp - lse;
}

template <typename T>
inline void layernorm_row(const T* x, T* xhat, T* inv_std, std::size_t cols, T eps) {
  T mean = 0;
  for (std::size_t j = 0; j < cols; ++j) mean += x[j];
  mean /= T(cols);
  T var = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    const T d = x[j] - mean;
    var += d * d;
  }
  var /= T(cols);
  // A constant row has var == 0; with eps == 0 it maps to zeros instead of NaN.
  const T denom = std::sqrt(var + eps);
  const T is = denom > T(0) ? T(1) / denom : T(0);
  *inv_std = is;
  for (std::size_t j = 0; j < cols; ++j) xhat[j] = (x[j] - mean) * is;
}

template <typename T>
inline T gelu_scalar(T x) {
  constexpr T kAlpha = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kBeta = T(0.044715);
  return T(0.5) * x * (T(1) + std::tanh(kAlpha * (x + kBeta * x * x * x)));
}

}  // namespace rbc::kernels::detail
