#include <vector>

#include "row_ops.hpp"

namespace rbc::kernels::serial {

template <typename T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
  std::vector<T> scratch;
  const T* bp = detail::untranspose_b(s, b.data(), scratch);
  for (std::size_t i = 0; i < s.m; ++i)
    detail::gemm_row(s, a.data(), bp, c.data() + i * s.n, i, accumulate);
}

template <typename T>
void gemm_batched(std::size_t batch, const GemmShape& s, std::span<const T> a,
                  std::span<const T> b, std::span<T> c, bool accumulate) {
  const std::size_t a_step = s.m * s.k, b_step = s.k * s.n, c_step = s.m * s.n;
  std::vector<T> scratch;
  for (std::size_t q = 0; q < batch; ++q) {
    const T* bp = detail::untranspose_b(s, b.data() + q * b_step, scratch);
    for (std::size_t i = 0; i < s.m; ++i)
      detail::gemm_row(s, a.data() + q * a_step, bp, c.data() + q * c_step + i * s.n, i,
                       accumulate);
  }
}

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t cols, T inv_temp) {
  for (std::size_t r = 0; r < x.size() / cols; ++r)
    detail::softmax_row(x.data() + r * cols, y.data() + r * cols, cols, inv_temp);
}

template <typename T>
void log_softmax_rows(std::span<const T> x, std::span<T> y, std::size_t cols, T inv_temp) {
  for (std::size_t r = 0; r < x.size() / cols; ++r)
    detail::log_softmax_row(x.data() + r * cols, y.data() + r * cols, cols, inv_temp);
}

template <typename T>
void layernorm_rows(std::span<const T> x, std::span<T> xhat, std::span<T> inv_std,
                    std::size_t cols, T eps) {
  for (std::size_t r = 0; r < x.size() / cols; ++r)
    detail::layernorm_row(x.data() + r * cols, xhat.data() + r * cols, inv_std.data() + r, cols,
                          eps);
}

template <typename T>
void gelu(std::span<const T> x, std::span<T> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = detail::gelu_scalar(x[i]);
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

}  // namespace rbc::kernels::serial
