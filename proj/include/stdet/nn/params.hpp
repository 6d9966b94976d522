// SPDX-License-Identifier: Apache-2.0
/**
 * @file   params.hpp
 * @brief  Named parameter tensors with paired gradients.
 */
#ifndef STDET_NN_PARAMS_HPP_
#define STDET_NN_PARAMS_HPP_

#include <map>
#include <stdexcept>
#include <string>

#include "stdet/tensor.hpp"

namespace stdet::nn {

template <class T> struct Param {
  Tensor<T> value;
  Tensor<T> grad;
};

/// Iteration order is sorted by name, which is also the serialization order.
template <class T> class ParamSet {
 public:
  Param<T> &add(const std::string &name, const Shape &shape) {
    auto [it, inserted] =
        params_.try_emplace(name, Param<T>{Tensor<T>(shape), Tensor<T>(shape)});
    if (!inserted)
      throw std::invalid_argument("duplicate parameter " + name);
    return it->second;
  }

  bool contains(const std::string &name) const { return params_.count(name); }

  Param<T> &operator[](const std::string &name) { return get(name); }
  const Param<T> &operator[](const std::string &name) const {
    auto it = params_.find(name);
    if (it == params_.end())
      throw std::out_of_range("no parameter named " + name);
    return it->second;
  }
  Param<T> &get(const std::string &name) {
    auto it = params_.find(name);
    if (it == params_.end())
      throw std::out_of_range("no parameter named " + name);
    return it->second;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  void zero_grad() {
    for (auto &[name, p] : params_)
      p.grad.fill(T{0});
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto &[name, p] : params_)
      n += p.value.size();
    return n;
  }

  template <class U> ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto &[name, p] : params_) {
      auto &q = out.add(name, p.value.shape());
      q.value = p.value.template cast<U>();
      q.grad = p.grad.template cast<U>();
    }
    return out;
  }

  bool values_equal(const ParamSet &other) const {
    if (params_.size() != other.params_.size())
      return false;
    for (const auto &[name, p] : params_) {
      auto it = other.params_.find(name);
      if (it == other.params_.end() || !(it->second.value == p.value))
        return false;
    }
    return true;
  }

 private:
  std::map<std::string, Param<T>> params_;
};

}  // namespace stdet::nn

#endif  // STDET_NN_PARAMS_HPP_
