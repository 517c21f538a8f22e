#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "row_ops.hpp"

namespace rbc::kernels::parallel {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kMinParallelWork = 1 << 15;

using Index = long long;  // OpenMP loop index
}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
  std::vector<T> scratch;
  const T* bp = detail::untranspose_b(s, b.data(), scratch);
  const bool par = s.m * s.n * s.k >= kMinParallelWork;
  const Index m = static_cast<Index>(s.m);
#pragma omp parallel for schedule(static) if (par)
  for (Index i = 0; i < m; ++i)
    detail::gemm_row(s, a.data(), bp, c.data() + i * s.n, static_cast<std::size_t>(i),
                     accumulate);
}

template <typename T>
void gemm_batched(std::size_t batch, const GemmShape& s, std::span<const T> a,
                  std::span<const T> b, std::span<T> c, bool accumulate) {
  const std::size_t a_step = s.m * s.k, b_step = s.k * s.n, c_step = s.m * s.n;
  std::vector<T> scratch;
  const T* b_base = b.data();
  if (s.trans_b) {
    scratch.resize(batch * b_step);
    std::vector<T> one;
    for (std::size_t q = 0; q < batch; ++q) {
      const T* bp = detail::untranspose_b(s, b.data() + q * b_step, one);
      std::copy(bp, bp + b_step, scratch.begin() + q * b_step);
    }
    b_base = scratch.data();
  }
  GemmShape plain = s;
  plain.trans_b = false;
  const bool par = batch * s.m * s.n * s.k >= kMinParallelWork;
  const Index rows = static_cast<Index>(batch * s.m);
#pragma omp parallel for schedule(static) if (par)
  for (Index r = 0; r < rows; ++r) {
    const std::size_t q = static_cast<std::size_t>(r) / s.m;
    const std::size_t i = static_cast<std::size_t>(r) % s.m;
    detail::gemm_row(plain, a.data() + q * a_step, b_base + q * b_step,
                     c.data() + q * c_step + i * s.n, i, accumulate);
  }
}

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t cols, T inv_temp) {
  const Index rows = static_cast<Index>(x.size() / cols);
#pragma omp parallel for schedule(static) if (x.size() >= kMinParallelWork)
  for (Index r = 0; r < rows; ++r)
    detail::softmax_row(x.data() + r * cols, y.data() + r * cols, cols, inv_temp);
}

template <typename T>
void log_softmax_rows(std::span<const T> x, std::span<T> y, std::size_t cols, T inv_temp) {
  const Index rows = static_cast<Index>(x.size() / cols);
#pragma omp parallel for schedule(static) if (x.size() >= kMinParallelWork)
  for (Index r = 0; r < rows; ++r)
    detail::log_softmax_row(x.data() + r * cols, y.data() + r * cols, cols, inv_temp);
}

template <typename T>
void layernorm_rows(std::span<const T> x, std::span<T> xhat, std::span<T> inv_std,
                    std::size_t cols, T eps) {
  const Index rows = static_cast<Index>(x.size() / cols);
#pragma omp parallel for schedule(static) if (x.size() >= kMinParallelWork)
  for (Index r = 0; r < rows; ++r)
    detail::layernorm_row(x.data() + r * cols, xhat.data() + r * cols, inv_std.data() + r, cols,
                          eps);
}

template <typename T>
void gelu(std::span<const T> x, std::span<T> y) {
  const Index n = static_cast<Index>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kMinParallelWork)
  for (Index i = 0; i < n; ++i) y[i] = detail::gelu_scalar(x[i]);
}

#define RBC_INSTANTIATE(T)                                                                      \
  template void gemm<T>(const GemmShape&, std::span<const T>, std::span<const T>, std::span<T>, \
                        bool);                                                                  \
  template void gemm_batched<T>(std::size_t, const GemmShape&, std::span<const T>,              \
                                std::span<const T>, std::span<T>, bool);                        \
  template void softmax_rows<T>(std::span<const T>, std::span<T>, std::size_t, T);              \
  template void log_softmax_rows<T>(std::span<const T>, std::span<T>, std::size_t, T);          \
  template void layernorm_rows<T>(std::span<const T>, std::span<T>, std::span<T>, std::size_t,  \
                                  T);                                                           \
  template void gelu<T>(std::span<const T>, std::span<T>);

RBC_INSTANTIATE(float)
RBC_INSTANTIATE(double)

}  // namespace rbc::kernels::parallel
