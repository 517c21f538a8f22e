#pragma once

// Dense numeric kernels behind the tensor primitives.
//
// Every kernel exists twice: `serial::` is the single-threaded reference and
// `parallel::` distributes independent output rows over OpenMP threads. Both
// run the same per-row arithmetic in the same order, so their results are
// bit-identical; tests assert exact equality. The unqualified entry points
// dispatch to `parallel::`.

#include <cstddef>
#include <span>

namespace rbc::kernels {

struct GemmShape {
  std::size_t m = 0;  // rows of C
  std::size_t n = 0;  // cols of C
  std::size_t k = 0;  // contracted extent
  bool trans_a = false;  // A stored k×m instead of m×k
  bool trans_b = false;  // B stored n×k instead of k×n
};

#define RBC_KERNEL_DECLS                                                                         \
  /* C (+)= op(A)·op(B), row-major. */                                                           \
  template <typename T>                                                                          \
  void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,      \
            bool accumulate);                                                                    \
  /* `batch` independent gemms over contiguous blocks of A, B and C. */                          \
  template <typename T>                                                                          \
  void gemm_batched(std::size_t batch, const GemmShape& s, std::span<const T> a,                 \
                    std::span<const T> b, std::span<T> c, bool accumulate);                      \
  /* y = softmax(x * inv_temp) per row of length `cols`. */                                      \
  template <typename T>                                                                          \
  void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t cols, T inv_temp);         \
  template <typename T>                                                                          \
  void log_softmax_rows(std::span<const T> x, std::span<T> y, std::size_t cols, T inv_temp);     \
  /* Normalizes each row to zero mean / unit population variance; writes xhat and 1/std. */     \
  template <typename T>                                                                          \
  void layernorm_rows(std::span<const T> x, std::span<T> xhat, std::span<T> inv_std,             \
                      std::size_t cols, T eps);                                                  \
  template <typename T>                                                                          \
  void gelu(std::span<const T> x, std::span<T> y);

namespace serial {
RBC_KERNEL_DECLS
}  // namespace serial

namespace parallel {
RBC_KERNEL_DECLS
/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();
}  // namespace parallel

#undef RBC_KERNEL_DECLS

template <typename T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
  parallel::gemm(s, a, b, c, accumulate);
}

template <typename T>
void gemm_batched(std::size_t batch, const GemmShape& s, std::span<const T> a,
                  std::span<const T> b, std::span<T> c, bool accumulate) {
  parallel::gemm_batched(batch, s, a, b, c, accumulate);
}

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t cols, T inv_temp) {
  parallel::softmax_rows(x, y, cols, inv_temp);
}

template <typename T>
void log_softmax_rows(std::span<const T> x, std::span<T> y, std::size_t cols, T inv_temp) {
  parallel::log_softmax_rows(x, y, cols, inv_temp);
}

template <typename T>
void layernorm_rows(std::span<const T> x, std::span<T> xhat, std::span<T> inv_std,
                    std::size_t cols, T eps) {
  parallel::layernorm_rows(x, xhat, inv_std, cols, eps);
}

template <typename T>
void gelu(std::span<const T> x, std::span<T> y) {
  parallel::gelu(x, y);
}

}  // namespace rbc::kernels
