#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbgt/numerics/tensor.hpp"

namespace cbgt::numerics {

/// Named parameter tensors, each paired with a gradient buffer of the same
/// shape. Iteration order is insertion order. Non-trainable entries hold
/// state such as batch-norm running statistics and are skipped by the
/// optimizer.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;
  };

  std::size_t add(const std::string& name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Tensor<T> grad(value.shape());
    entries_.push_back(Entry{name, std::move(value), std::move(grad), trainable});
    index_[name] = entries_.size() - 1;
    return entries_.size() - 1;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Entry& entry(std::size_t i) { return entries_.at(i); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Tensor<T>& value(std::size_t i) { return entries_.at(i).value; }
  const Tensor<T>& value(std::size_t i) const { return entries_.at(i).value; }
  Tensor<T>& grad(std::size_t i) { return entries_.at(i).grad; }
  const Tensor<T>& grad(std::size_t i) const { return entries_.at(i).grad; }

  Tensor<T>& value(const std::string& name) { return value(index_of(name)); }
  const Tensor<T>& value(const std::string& name) const { return value(index_of(name)); }
  Tensor<T>& grad(const std::string& name) { return grad(index_of(name)); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(T{0});
  }

  /// Number of trainable scalars.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace cbgt::numerics
