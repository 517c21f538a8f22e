#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rbcssl/errors.hpp"
#include "rbcssl/tensor.hpp"

namespace rbc {

/// Ordered, named collection of trainable tensors. Order is insertion order and
/// is the serialization order of checkpoints.
template <typename T>
class ParameterSet {
 public:
  using Entry = std::pair<std::string, BasicTensor<T>>;

  BasicTensor<T>& add(std::string name, BasicTensor<T> value) {
    for (const auto& e : entries_)
      if (e.first == name) throw ParameterError("duplicate parameter name " + name);
    entries_.emplace_back(std::move(name), std::move(value));
    return entries_.back().second;
  }

  const BasicTensor<T>& get(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return e.second;
    throw ParameterError("unknown parameter " + name);
  }
  BasicTensor<T>& get(const std::string& name) {
    return const_cast<BasicTensor<T>&>(static_cast<const ParameterSet&>(*this).get(name));
  }

  bool contains(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return true;
    return false;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
  }

  void set_requires_grad(bool on) {
    for (auto& e : entries_) e.second.set_requires_grad(on);
  }
  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  /// Deep copy with fresh storage and no gradient tracking.
  ParameterSet clone() const {
    ParameterSet out;
    for (const auto& e : entries_) out.add(e.first, e.second.detach());
    return out;
  }

  /// Copies values from `other`, which must hold the same names and shapes.
  void assign_values(const ParameterSet& other) {
    if (other.size() != size()) throw DimensionError("parameter sets differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& dst = entries_[i];
      const auto& src = other.entries_[i];
      if (dst.first != src.first || dst.second.shape() != src.second.shape())
        throw DimensionError("parameter mismatch at " + dst.first);
      std::copy(src.second.data().begin(), src.second.data().end(),
                dst.second.mutable_data().begin());
    }
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& e : entries_) out.add(e.first, e.second.template cast<U>());
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace rbc
