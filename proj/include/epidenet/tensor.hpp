#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "epidenet/errors.hpp"

namespace epidenet {

// Dense rank-<=4 tensor. Row-major, contiguous. Carries activations, weights
// and gradients; the usual axis meaning is (batch, channels, height, width).
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<size_t>(element_count(shape_)), T(0));
  }

  TensorT(std::vector<int64_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<int64_t>(data_.size()) != element_count(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string());
    }
  }

  static TensorT zeros(std::vector<int64_t> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<int64_t> shape, T value) {
    TensorT t(std::move(shape));
    for (auto& x : t.data_) x = value;
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t extent(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  const T& at(int64_t i, int64_t j) const {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }

  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[flat4(n, c, h, w)];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[flat4(n, c, h, w)];
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  std::string shape_string() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) os << ",";
      os << shape_[i];
    }
    os << ")";
    return os.str();
  }

  // Reinterpret with a new shape of equal element count.
  TensorT reshaped(std::vector<int64_t> shape) const {
    TensorT t;
    t.shape_ = std::move(shape);
    t.validate_shape();
    if (element_count(t.shape_) != size()) {
      throw ShapeError("reshape " + shape_string() + " -> " + t.shape_string() +
                       " changes element count");
    }
    t.data_ = data_;
    return t;
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(out));
  }

  static int64_t element_count(const std::vector<int64_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), int64_t{1}, std::multiplies<>());
  }

 private:
  size_t flat4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w);
  }

  void validate_shape() const {
    if (shape_.empty() || shape_.size() > 4) {
      throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape_.size()));
    }
    for (int64_t e : shape_) {
      if (e < 1) throw ShapeError("tensor extent must be >= 1, got shape " + shape_string());
    }
  }

  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

}  // namespace epidenet
