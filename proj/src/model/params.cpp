#include "lpsn/params.hpp"

#include <algorithm>

#include "lpsn/error.hpp"
#include "lpsn/ops.hpp"

namespace lpsn {

template <typename T>
Tensor<T> ParameterSet<T>::add(std::string name, Tensor<T> value, bool regularized) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(true);
  entries_.push_back({std::move(name), value, regularized});
  return value;
}

template <typename T>
bool ParameterSet<T>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Parameter<T>& p) { return p.name == name; });
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  for (const auto& p : entries_) {
    if (p.name == name) return p.tensor;
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

template <typename T>
std::size_t ParameterSet<T>::numel() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : entries_) p.tensor.zero_grad();
}

template <typename T>
Tensor<T> ParameterSet<T>::l2_penalty() const {
  Tensor<T> total;
  for (const auto& p : entries_) {
    if (!p.regularized) continue;
    Tensor<T> term = sum_squares(p.tensor);
    total = total.defined() ? lpsn::add(total, term) : term;
  }
  return total.defined() ? total : Tensor<T>::zeros({1});
}

template <typename T>
void ParameterSet<T>::assign(const ParameterSet& other) {
  if (other.entries_.size() != entries_.size()) throw ConfigError("parameter sets differ in size");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i];
    const auto& src = other.entries_[i];
    if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
      throw ConfigError("parameter mismatch: '" + dst.name + "' " + shape_string(dst.tensor.shape()) + " vs '" +
                        src.name + "' " + shape_string(src.tensor.shape()));
    }
    auto values = dst.tensor.values_mut();
    std::copy(src.tensor.values().begin(), src.tensor.values().end(), values.begin());
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace lpsn
