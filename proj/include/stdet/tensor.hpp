// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.hpp
 * @brief  Dense row-major tensor used by the feature front-end and the
 *         network engine.
 */
#ifndef STDET_TENSOR_HPP_
#define STDET_TENSOR_HPP_

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stdet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape &shape);

/// Thrown when operands disagree on extents.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <class T> class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  const Shape &shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T *data() noexcept { return data_.data(); }
  const T *data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T> &values() noexcept { return data_; }
  const std::vector<T> &values() const noexcept { return data_; }

  T &operator[](std::size_t i) noexcept { return data_[i]; }
  const T &operator[](std::size_t i) const noexcept { return data_[i]; }

  T &at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T &at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  T &at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T &at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape shape) {
    if (shape_size(shape) != data_.size())
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " +
                       shape_string(shape));
    shape_ = std::move(shape);
  }

  template <class U> Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Tensor &) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

inline std::string shape_string(const Shape &shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class T>
void require_shape(const Tensor<T> &t, const Shape &expected,
                   const char *what) {
  if (t.shape() != expected)
    throw ShapeError(std::string(what) + ": expected " +
                     shape_string(expected) + ", got " +
                     shape_string(t.shape()));
}

}  // namespace stdet

#endif  // STDET_TENSOR_HPP_
