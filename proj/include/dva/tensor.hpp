#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dva {

/// Thrown when tensor shapes do not agree with what an operation needs.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a value that must be finite is NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major tensor. Scalar type is float for training and double for
/// the finite-difference checks.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_dims();
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
  const T& at(std::size_t r, std::size_t c) const {
    return data_[r * shape_.back() + c];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive");
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Ordered name -> tensor collection. Iteration follows insertion order.
template <class T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  std::size_t add(std::string name, Tensor<T> tensor) {
    if (index_.contains(name)) {
      throw std::invalid_argument("duplicate parameter name: " + name);
    }
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(tensor)});
    return entries_.size() - 1;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::out_of_range("no parameter named " + name);
    }
    return it->second;
  }

  Tensor<T>& operator[](const std::string& name) {
    return entries_[index_of(name)].tensor;
  }
  const Tensor<T>& operator[](const std::string& name) const {
    return entries_[index_of(name)].tensor;
  }

  Tensor<T>& tensor(std::size_t i) { return entries_[i].tensor; }
  const Tensor<T>& tensor(std::size_t i) const { return entries_[i].tensor; }
  const std::string& name(std::size_t i) const { return entries_[i].name; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Total number of scalar parameters.
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& e : entries_) out.add(e.name, Tensor<T>(e.tensor.shape()));
    return out;
  }

  void zero() {
    for (auto& e : entries_) e.tensor.fill(T{0});
  }

  bool same_layout(const ParamSet& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (entries_[i].name != other.entries_[i].name ||
          entries_[i].tensor.shape() != other.entries_[i].tensor.shape()) {
        return false;
      }
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& e : entries_) {
      if (!e.tensor.all_finite()) return false;
    }
    return true;
  }

  /// Copies values from a same-layout set without reallocating.
  void assign_values(const ParamSet& other) {
    if (!same_layout(other)) throw ShapeError("parameter layouts differ");
    for (std::size_t i = 0; i < size(); ++i) {
      std::copy(other.entries_[i].tensor.data().begin(),
                other.entries_[i].tensor.data().end(),
                entries_[i].tensor.data().begin());
    }
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name ||
          !(a.entries_[i].tensor == b.entries_[i].tensor)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Global L2 norm over every tensor in the set.
template <class T>
double global_norm(const ParamSet<T>& set) {
  double sq = 0.0;
  for (const auto& e : set) {
    for (T v : e.tensor.data()) sq += static_cast<double>(v) * v;
  }
  return std::sqrt(sq);
}

/// Rescales the set so its global norm is at most max_norm. Returns the norm
/// measured before clipping.
template <class T>
double clip_global_norm(ParamSet<T>& set, double max_norm) {
  const double norm = global_norm(set);
  if (norm > max_norm && norm > 0.0) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& e : set) {
      for (T& v : e.tensor.data()) v *= scale;
    }
  }
  return norm;
}

}  // namespace dva
