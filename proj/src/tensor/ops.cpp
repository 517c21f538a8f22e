#include <algorithm>
#include <cmath>
#include <numeric>

#include "rbcssl/errors.hpp"
#include "rbcssl/kernels.hpp"
#include "rbcssl/tensor.hpp"

namespace rbc {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

template <typename T>
bool tracking(std::initializer_list<const BasicTensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const BasicTensor<T>* t) { return t->requires_grad(); });
}

template <typename T>
NodePtr<T> make_node(Shape shape, std::vector<T> data, bool track) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = track;
  if (track) node->grad.assign(node->data.size(), T(0));
  return node;
}

template <typename T>
void record(std::function<void()> fn) {
  active_tape<T>()->record(std::move(fn));
}

// outer × extent × inner decomposition of a shape around one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

enum class Binary { Add, Sub, Mul };

template <typename T>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, Binary op) {
  if (!is_suffix(a.shape(), b.shape()))
    throw DimensionError("cannot combine " + shape_str(a.shape()) + " with " +
                         shape_str(b.shape()));
  const std::size_t na = a.numel(), nb = b.numel();
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(na);
  for (std::size_t i = 0; i < na; ++i) {
    const T x = ad[i], y = bd[i % nb];
    out[i] = op == Binary::Add ? x + y : op == Binary::Sub ? x - y : x * y;
  }
  const bool track = tracking<T>({&a, &b});
  auto on = make_node<T>(a.shape(), std::move(out), track);
  if (track) {
    record<T>([an = a.node(), bn = b.node(), on, op]() {
      const std::size_t n = on->data.size(), m = bn->data.size();
      if (an->requires_grad)
        for (std::size_t i = 0; i < n; ++i)
          an->grad[i] += op == Binary::Mul ? on->grad[i] * bn->data[i % m] : on->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < n; ++i) {
          const T g = on->grad[i];
          bn->grad[i % m] += op == Binary::Add   ? g
                             : op == Binary::Sub ? -g
                                                 : g * an->data[i];
        }
    });
  }
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> unary(const BasicTensor<T>& x, std::vector<T> out,
                     std::function<T(T x, T y)> dydx) {
  const bool track = tracking<T>({&x});
  auto on = make_node<T>(x.shape(), std::move(out), track);
  if (track) {
    record<T>([xn = x.node(), on, dydx = std::move(dydx)]() {
      for (std::size_t i = 0; i < on->data.size(); ++i)
        xn->grad[i] += on->grad[i] * dydx(xn->data[i], on->data[i]);
    });
  }
  return BasicTensor<T>::wrap(on);
}

// Multi-index iteration helper for permute.
std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> st(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const std::size_t k = a.shape().back();
  const std::size_t kb = b.shape()[b.rank() - 2];
  const std::size_t n = b.shape().back();
  if (k != kb)
    throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  const bool batched = b.rank() > 2;
  std::size_t batch = 1, m = 0;
  if (batched) {
    if (b.rank() != a.rank() ||
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()))
      throw DimensionError("batched matmul leading extents differ: " + shape_str(a.shape()) +
                           " x " + shape_str(b.shape()));
    m = a.shape()[a.rank() - 2];
    batch = a.numel() / (m * k);
  } else {
    m = a.numel() / k;
  }
  std::vector<T> out(batch * m * n);
  kernels::gemm_batched<T>(batch, {m, n, k, false, false}, a.data(), b.data(), out, false);
  const bool track = tracking<T>({&a, &b});
  auto on = make_node<T>(std::move(out_shape), std::move(out), track);
  if (track) {
    record<T>([an = a.node(), bn = b.node(), on, batch, m, n, k, batched]() {
      if (an->requires_grad)  // dA = dC · Bᵀ
        kernels::gemm_batched<T>(batch, {m, k, n, false, true}, on->grad, bn->data, an->grad,
                                 true);
      if (bn->requires_grad) {  // dB = Aᵀ · dC
        if (batched)
          kernels::gemm_batched<T>(batch, {k, n, m, true, false}, an->data, on->grad, bn->grad,
                                   true);
        else
          kernels::gemm<T>({k, n, m, true, false}, an->data, on->grad, bn->grad, true);
      }
    });
  }
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, Binary::Add);
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, Binary::Sub);
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, Binary::Mul);
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v *= factor;
  return unary<T>(x, std::move(out), [factor](T, T) { return factor; });
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  std::transform(x.data().begin(), x.data().end(), out.begin(), [](T v) { return std::exp(v); });
  return unary<T>(x, std::move(out), [](T, T y) { return y; });
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  std::transform(x.data().begin(), x.data().end(), out.begin(), [](T v) { return std::log(v); });
  return unary<T>(x, std::move(out), [](T v, T) { return T(1) / v; });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  kernels::gelu<T>(x.data(), out);
  return unary<T>(x, std::move(out), [](T v, T) {
    constexpr T kAlpha = T(0.7978845608028654);
    constexpr T kBeta = T(0.044715);
    const T t = std::tanh(kAlpha * (v + kBeta * v * v * v));
    return T(0.5) * (T(1) + t) +
           T(0.5) * v * (T(1) - t * t) * kAlpha * (T(1) + T(3) * kBeta * v * v);
  });
}

namespace {

template <typename T>
void softmax_generic(const T* x, T* y, const AxisSplit& s, T inv_temp, bool log_space) {
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T mx = x[base];
      for (std::size_t j = 1; j < s.extent; ++j) mx = std::max(mx, x[base + j * s.inner]);
      T sum = 0;
      for (std::size_t j = 0; j < s.extent; ++j) sum += std::exp((x[base + j * s.inner] - mx) * inv_temp);
      const T lse = std::log(sum);
      for (std::size_t j = 0; j < s.extent; ++j) {
        const T z = (x[base + j * s.inner] - mx) * inv_temp - lse;
        y[base + j * s.inner] = log_space ? z : std::exp(z);
      }
    }
}

template <typename T>
BasicTensor<T> softmax_impl(const BasicTensor<T>& x, std::size_t axis, T temperature,
                            bool log_space) {
  if (!(temperature > T(0)))
    throw ParameterError("softmax temperature must be positive, got " +
                         std::to_string(temperature));
  const AxisSplit s = split_axis(x.shape(), axis);
  const T inv_temp = T(1) / temperature;
  std::vector<T> out(x.numel());
  if (s.inner == 1) {
    if (log_space)
      kernels::log_softmax_rows<T>(x.data(), out, s.extent, inv_temp);
    else
      kernels::softmax_rows<T>(x.data(), out, s.extent, inv_temp);
  } else {
    softmax_generic(x.data().data(), out.data(), s, inv_temp, log_space);
  }
  const bool track = tracking<T>({&x});
  auto on = make_node<T>(x.shape(), std::move(out), track);
  if (track) {
    record<T>([xn = x.node(), on, s, inv_temp, log_space]() {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.extent * s.inner + in;
          T dot = 0;
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t idx = base + j * s.inner;
            dot += log_space ? on->grad[idx] : on->grad[idx] * on->data[idx];
          }
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t idx = base + j * s.inner;
            const T g = on->grad[idx];
            xn->grad[idx] += log_space ? inv_temp * (g - std::exp(on->data[idx]) * dot)
                                       : inv_temp * on->data[idx] * (g - dot);
          }
        }
    });
  }
  return BasicTensor<T>::wrap(on);
}

}  // namespace

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis, T temperature) {
  return softmax_impl(x, axis, temperature, false);
}

template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x, std::size_t axis, T temperature) {
  return softmax_impl(x, axis, temperature, true);
}

template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                         const BasicTensor<T>& bias, T eps) {
  if (x.rank() == 0) throw DimensionError("layernorm on a scalar");
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d)
    throw DimensionError("layernorm gain/bias must have " + std::to_string(d) + " entries");
  const std::size_t rows = x.numel() / d;
  std::vector<T> xhat(x.numel()), inv_std(rows), out(x.numel());
  kernels::layernorm_rows<T>(x.data(), xhat, inv_std, d, eps);
  const auto g = gain.data();
  const auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xhat[r * d + j] * g[j] + b[j];
  const bool track = tracking<T>({&x, &gain, &bias});
  auto on = make_node<T>(x.shape(), std::move(out), track);
  if (track) {
    record<T>([xn = x.node(), gn = gain.node(), bn = bias.node(), on, xhat = std::move(xhat),
               inv_std = std::move(inv_std), rows, d]() {
      std::vector<T> dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = on->grad.data() + r * d;
        const T* xh = xhat.data() + r * d;
        if (gn->requires_grad)
          for (std::size_t j = 0; j < d; ++j) gn->grad[j] += gr[j] * xh[j];
        if (bn->requires_grad)
          for (std::size_t j = 0; j < d; ++j) bn->grad[j] += gr[j];
        if (!xn->requires_grad) continue;
        T mean_dxhat = 0, mean_dxhat_xhat = 0;
        for (std::size_t j = 0; j < d; ++j) {
          dxhat[j] = gr[j] * gn->data[j];
          mean_dxhat += dxhat[j];
          mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= T(d);
        mean_dxhat_xhat /= T(d);
        for (std::size_t j = 0; j < d; ++j)
          xn->grad[r * d + j] += inv_std[r] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
      }
    });
  }
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> l2_normalize(const BasicTensor<T>& x, std::size_t axis, T eps) {
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto xd = x.data();
  std::vector<T> out(x.numel());
  std::vector<T> norms(s.outer * s.inner);
  std::vector<char> clamped(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T ss = 0;
      for (std::size_t j = 0; j < s.extent; ++j) ss += xd[base + j * s.inner] * xd[base + j * s.inner];
      const T nrm = std::sqrt(ss);
      const std::size_t slot = o * s.inner + in;
      clamped[slot] = nrm <= eps;
      norms[slot] = std::max(nrm, eps);
      for (std::size_t j = 0; j < s.extent; ++j)
        out[base + j * s.inner] = xd[base + j * s.inner] / norms[slot];
    }
  const bool track = tracking<T>({&x});
  auto on = make_node<T>(x.shape(), std::move(out), track);
  if (track) {
    record<T>([xn = x.node(), on, s, norms = std::move(norms), clamped = std::move(clamped)]() {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.extent * s.inner + in;
          const std::size_t slot = o * s.inner + in;
          T dot = 0;
          if (!clamped[slot])
            for (std::size_t j = 0; j < s.extent; ++j)
              dot += on->grad[base + j * s.inner] * on->data[base + j * s.inner];
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t idx = base + j * s.inner;
            xn->grad[idx] += (on->grad[idx] - on->data[idx] * dot) / norms[slot];
          }
        }
    });
  }
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> norm(const BasicTensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto xd = x.data();
  std::vector<T> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T ss = 0;
      for (std::size_t j = 0; j < s.extent; ++j) ss += xd[base + j * s.inner] * xd[base + j * s.inner];
      out[o * s.inner + in] = std::sqrt(ss);
    }
  const bool track = tracking<T>({&x});
  auto on = make_node<T>(std::move(out_shape), std::move(out), track);
  if (track) {
    record<T>([xn = x.node(), on, s]() {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t slot = o * s.inner + in;
          const T r = on->data[slot];
          if (r == T(0)) continue;
          const T g = on->grad[slot] / r;
          const std::size_t base = o * s.extent * s.inner + in;
          for (std::size_t j = 0; j < s.extent; ++j)
            xn->grad[base + j * s.inner] += g * xn->data[base + j * s.inner];
        }
    });
  }
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  const bool track = tracking<T>({&x});
  auto on = make_node<T>({}, {total}, track);
  if (track)
    record<T>([xn = x.node(), on]() {
      for (T& g : xn->grad) g += on->grad[0];
    });
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / T(x.numel()));
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto xd = x.data();
  std::vector<T> out(s.outer * s.inner, T(0));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.extent; ++j)
      for (std::size_t in = 0; in < s.inner; ++in)
        out[o * s.inner + in] += xd[(o * s.extent + j) * s.inner + in];
  const bool track = tracking<T>({&x});
  auto on = make_node<T>(std::move(out_shape), std::move(out), track);
  if (track)
    record<T>([xn = x.node(), on, s]() {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < s.extent; ++j)
          for (std::size_t in = 0; in < s.inner; ++in)
            xn->grad[(o * s.extent + j) * s.inner + in] += on->grad[o * s.inner + in];
    });
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x, std::size_t axis) {
  return scale(sum(x, axis), T(1) / T(split_axis(x.shape(), axis).extent));
}

template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw DimensionError("permute needs one entry per axis");
  std::vector<char> seen(r, 0);
  for (std::size_t a : axes) {
    if (a >= r || seen[a]) throw DimensionError("permute axes are not a permutation");
    seen[a] = 1;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[axes[i]];
  const auto in_strides = strides_of(x.shape());
  // src_offset[i] = input offset of the i-th output element
  std::vector<std::size_t> src(x.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[axes[i]];
    src[flat] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  const auto xd = x.data();
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = xd[src[i]];
  const bool track = tracking<T>({&x});
  auto on = make_node<T>(std::move(out_shape), std::move(out), track);
  if (track)
    record<T>([xn = x.node(), on, src = std::move(src)]() {
      for (std::size_t i = 0; i < src.size(); ++i) xn->grad[src[i]] += on->grad[i];
    });
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2");
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
  return permute(x, axes);
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  const bool track = tracking<T>({&x});
  auto on = make_node<T>(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()), track);
  if (track)
    record<T>([xn = x.node(), on]() {
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  const Shape& ref = parts.front().shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw DimensionError("concat rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (i != axis && p.shape()[i] != ref[i])
        throw DimensionError("concat extent mismatch: " + shape_str(p.shape()) + " vs " +
                             shape_str(ref));
    total += p.shape().at(axis);
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  const AxisSplit s = split_axis(out_shape, axis);
  std::vector<T> out(shape_numel(out_shape));
  std::size_t offset = 0;
  bool track = false;
  for (const auto& p : parts) {
    const std::size_t e = p.shape()[axis];
    const auto pd = p.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pd.begin() + o * e * s.inner, e * s.inner,
                  out.begin() + (o * s.extent + offset) * s.inner);
    offset += e;
    track = track || tracking<T>({&p});
  }
  auto on = make_node<T>(std::move(out_shape), std::move(out), track);
  if (track) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    record<T>([nodes = std::move(nodes), on, s, axis]() {
      std::size_t off = 0;
      for (const auto& pn : nodes) {
        const std::size_t e = pn->shape[axis];
        if (pn->requires_grad)
          for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < e * s.inner; ++i)
              pn->grad[o * e * s.inner + i] += on->grad[(o * s.extent + off) * s.inner + i];
        off += e;
      }
    });
  }
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin,
                     std::size_t end) {
  const AxisSplit s = split_axis(x.shape(), axis);
  if (begin >= end || end > s.extent)
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  const std::size_t e = end - begin;
  Shape out_shape = x.shape();
  out_shape[axis] = e;
  std::vector<T> out(s.outer * e * s.inner);
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xd.begin() + (o * s.extent + begin) * s.inner, e * s.inner,
                out.begin() + o * e * s.inner);
  const bool track = tracking<T>({&x});
  auto on = make_node<T>(std::move(out_shape), std::move(out), track);
  if (track)
    record<T>([xn = x.node(), on, s, begin, e]() {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < e * s.inner; ++i)
          xn->grad[(o * s.extent + begin) * s.inner + i] += on->grad[o * e * s.inner + i];
    });
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> expand(const BasicTensor<T>& x, std::size_t n) {
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin(), n);
  const std::size_t m = x.numel();
  std::vector<T> out(n * m);
  for (std::size_t r = 0; r < n; ++r) std::copy(x.data().begin(), x.data().end(), out.begin() + r * m);
  const bool track = tracking<T>({&x});
  auto on = make_node<T>(std::move(out_shape), std::move(out), track);
  if (track)
    record<T>([xn = x.node(), on, n, m]() {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < m; ++i) xn->grad[i] += on->grad[r * m + i];
    });
  return BasicTensor<T>::wrap(on);
}

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, const std::vector<std::size_t>& rows) {
  if (x.rank() != 2) throw DimensionError("gather_rows needs a 2-D tensor");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<T> out(rows.size() * d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("gather_rows index out of range");
    std::copy_n(x.data().begin() + rows[r] * d, d, out.begin() + r * d);
  }
  const bool track = tracking<T>({&x});
  auto on = make_node<T>({rows.size(), d}, std::move(out), track);
  if (track)
    record<T>([xn = x.node(), on, rows, d]() {
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) xn->grad[rows[r] * d + j] += on->grad[r * d + j];
    });
  return BasicTensor<T>::wrap(on);
}

#define RBC_INSTANTIATE(T)                                                                         \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                        \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                             \
  template BasicTensor<T> log(const BasicTensor<T>&);                                             \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                            \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t, T);                         \
  template BasicTensor<T> log_softmax(const BasicTensor<T>&, std::size_t, T);                     \
  template BasicTensor<T> layernorm(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                    const BasicTensor<T>&, T);                                    \
  template BasicTensor<T> l2_normalize(const BasicTensor<T>&, std::size_t, T);                    \
  template BasicTensor<T> norm(const BasicTensor<T>&, std::size_t);                               \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                             \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                            \
  template BasicTensor<T> sum(const BasicTensor<T>&, std::size_t);                                \
  template BasicTensor<T> mean(const BasicTensor<T>&, std::size_t);                               \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                       \
  template BasicTensor<T> permute(const BasicTensor<T>&, const std::vector<std::size_t>&);        \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                  \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, std::size_t);                \
  template BasicTensor<T> slice(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t);    \
  template BasicTensor<T> expand(const BasicTensor<T>&, std::size_t);                             \
  template BasicTensor<T> gather_rows(const BasicTensor<T>&, const std::vector<std::size_t>&);

RBC_INSTANTIATE(float)
RBC_INSTANTIATE(double)

}  // namespace rbc
