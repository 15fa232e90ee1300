#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lpsn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor handle. Copies share storage; use `clone()` for a
/// deep copy. Values produced by operations are treated as immutable; only
/// leaves (parameters, inputs) are mutated through `values_mut()`.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return storage_->value.size(); }

  std::span<const T> values() const { return storage_->value; }
  std::span<T> values_mut() { return storage_->value; }
  std::span<const T> grad() const { return storage_->grad; }
  std::span<T> grad_mut() { return storage_->ensure_grad(); }
  bool has_grad() const { return !storage_->grad.empty(); }
  void zero_grad() { storage_->grad.clear(); }

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool flag) { storage_->requires_grad = flag; }

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  Tensor clone() const;
  /// Same values, detached from any gradient tracking.
  Tensor detach() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(storage_->value.begin(), storage_->value.end());
    return Tensor<U>::from_data(storage_->shape, std::move(out), storage_->requires_grad);
  }

  const std::shared_ptr<TensorStorage<T>>& storage() const { return storage_; }

 private:
  explicit Tensor(std::shared_ptr<TensorStorage<T>> storage) : storage_(std::move(storage)) {}
  std::shared_ptr<TensorStorage<T>> storage_;
};

/// Reverse-mode recording of operations.
///
/// Constructing a Tape makes it the active recorder for element type T on the
/// current thread; operations whose inputs require gradients append a backward
/// step to it. `backward()` replays the steps in reverse order exactly once and
/// stops recording. Destroying the tape restores the previously active one.
template <typename T>
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> backward_step);
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return steps_.size(); }
  bool consumed() const { return consumed_; }

 private:
  void deactivate();

  std::vector<std::function<void()>> steps_;
  Tape* previous_ = nullptr;
  bool active_ = false;
  bool consumed_ = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace lpsn
