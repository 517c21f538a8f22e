#include "rbcssl/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "rbcssl/errors.hpp"

namespace rbc {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::wrap(std::shared_ptr<TensorNode<T>> node) {
  BasicTensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  auto node = std::make_shared<TensorNode<T>>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  return wrap(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != values.size())
    throw DimensionError("shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  return wrap(std::move(node));
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
T BasicTensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw DimensionError("index rank mismatch");
  std::size_t flat = 0, i = 0;
  for (std::size_t v : index) {
    if (v >= node_->shape[i]) throw DimensionError("index out of range");
    flat = flat * node_->shape[i++] + v;
  }
  return node_->data[flat];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on)
    node_->grad.assign(node_->data.size(), T(0));
  else
    node_->grad.clear();
  return *this;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from(shape(), node_->data);
}

template <typename T>
BasicTape<T>*& active_tape() {
  thread_local BasicTape<T>* tape = nullptr;
  return tape;
}

template <typename T>
void BasicTape<T>::backward(BasicTensor<T>& loss) {
  if (loss.numel() != 1) throw DimensionError("backward() needs a scalar loss");
  if (!loss.requires_grad()) return;
  loss.mutable_grad()[0] = T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

template <typename T>
void check_finite(const BasicTensor<T>& t, const std::string& what) {
  for (T v : t.data())
    if (!std::isfinite(v)) throw NumericError("non-finite value in " + what);
}

#define RBC_INSTANTIATE(T)                                              \
  template class BasicTensor<T>;                                        \
  template class BasicTape<T>;                                          \
  template BasicTape<T>*& active_tape<T>();                             \
  template void check_finite<T>(const BasicTensor<T>&, const std::string&);

RBC_INSTANTIATE(float)
RBC_INSTANTIATE(double)

}  // namespace rbc
