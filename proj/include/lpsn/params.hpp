#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lpsn/tensor.hpp"

namespace lpsn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  bool regularized = true;  // included in the L2 penalty
};

/// Ordered, named collection of trainable tensors. Order is registration
/// order and is what checkpoints and optimizers rely on.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> add(std::string name, Tensor<T> value, bool regularized = true);

  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter<T>>& entries() { return entries_; }
  const std::vector<Parameter<T>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;

  void zero_grad();

  /// Sum of squared values over regularized parameters, as a [1] tensor.
  Tensor<T> l2_penalty() const;

  /// Overwrites values from `other`, which must have the same names and shapes.
  void assign(const ParameterSet& other);

 private:
  std::vector<Parameter<T>> entries_;
};

/// Seeded weight initializer. Values are drawn in double precision and then
/// converted, so float and double models built from one seed agree.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  template <typename T>
  Tensor<T> uniform(Shape shape, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> data(shape_numel(shape));
    for (T& v : data) v = static_cast<T>(dist(rng_));
    return Tensor<T>::from_data(std::move(shape), std::move(data));
  }

  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  template <typename T>
  Tensor<T> fan_in(Shape shape, std::size_t fan) {
    return uniform<T>(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan)));
  }

 private:
  std::mt19937_64 rng_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace lpsn
