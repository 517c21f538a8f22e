#pragma once

// Dense row-major tensor with a reverse-mode gradient tape.
//
// Training runs in float; the same code instantiated for double is used by the
// gradient checks. Operations record a backward closure on the thread's active
// tape when one is installed (see TapeScope) and at least one input requires a
// gradient. Without an active tape every operation is a plain forward
// computation, which is how teacher passes run.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rbc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // sized like data iff requires_grad
  bool requires_grad = false;
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  static BasicTensor zeros(Shape shape);
  static BasicTensor full(Shape shape, T value);
  static BasicTensor from(Shape shape, std::vector<T> values);
  static BasicTensor scalar(T value) { return from({}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Direct writes bypass the tape; reserved for parameter updates and loaders.
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on);
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  void zero_grad();

  /// Copy of the values with no gradient tracking.
  BasicTensor detach() const;
  /// Same values in another precision, no gradient tracking.
  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>::from(shape(), std::vector<U>(node_->data.begin(), node_->data.end()));
  }

  bool same_node(const BasicTensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }
  static BasicTensor wrap(std::shared_ptr<TensorNode<T>> node);

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Ordered record of backward closures for one forward pass.
template <typename T>
class BasicTape {
 public:
  void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

  /// Seeds d(loss)/d(loss) = 1 and runs the recorded closures newest-first.
  /// Gradients accumulate into every reachable requires_grad tensor.
  void backward(BasicTensor<T>& loss);

  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

 private:
  std::vector<std::function<void()>> ops_;
};

using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;

template <typename T>
BasicTape<T>*& active_tape();

/// Installs a tape as the thread's recording target for its lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(BasicTape<T>& tape) : previous_(active_tape<T>()) { active_tape<T>() = &tape; }
  ~TapeScope() { active_tape<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  BasicTape<T>* previous_;
};

/// Suspends recording (teacher forward passes, evaluation).
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : previous_(active_tape<T>()) { active_tape<T>() = nullptr; }
  ~NoGradScope() { active_tape<T>() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  BasicTape<T>* previous_;
};

/// Throws NumericError naming `what` if any element is NaN or infinite.
template <typename T>
void check_finite(const BasicTensor<T>& t, const std::string& what);

// ---------------------------------------------------------------------------
// Differentiable primitives
// ---------------------------------------------------------------------------

/// a: [..., m, k] with b: [k, n] contracts over k for every leading index.
/// With b of the same rank as a and equal leading extents, multiplies batch-wise.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Elementwise; `b` may match `a` or be a trailing suffix of a's shape
/// (broadcast along the leading axes).
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> log(const BasicTensor<T>& x);
/// tanh approximation.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis, T temperature = T(1));
template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x, std::size_t axis, T temperature = T(1));

/// Normalizes over the last axis (population variance) then applies gain/bias.
template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                         const BasicTensor<T>& bias, T eps);

/// Divides each slice along `axis` by max(||slice||_2, eps).
template <typename T>
BasicTensor<T> l2_normalize(const BasicTensor<T>& x, std::size_t axis, T eps);
/// Euclidean norm along `axis` (axis removed). Gradient is 0 at the origin.
template <typename T>
BasicTensor<T> norm(const BasicTensor<T>& x, std::size_t axis);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x, std::size_t axis);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x, std::size_t axis);

/// Swaps the last two axes.
template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, const std::vector<std::size_t>& axes);
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis);
/// Elements [begin, end) along `axis`.
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin,
                     std::size_t end);
/// Prepends a leading axis of extent n (repeats x n times).
template <typename T>
BasicTensor<T> expand(const BasicTensor<T>& x, std::size_t n);
/// Rows of a 2-D tensor selected by index.
template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, const std::vector<std::size_t>& rows);

}  // namespace rbc
