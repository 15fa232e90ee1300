#include "lpsn/tensor.hpp"

#include <sstream>

#include "lpsn/error.hpp"

namespace lpsn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  auto storage = std::make_shared<TensorStorage<T>>();
  storage->value.assign(shape_numel(shape), value);
  storage->shape = std::move(shape);
  storage->requires_grad = requires_grad;
  return Tensor(std::move(storage));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto storage = std::make_shared<TensorStorage<T>>();
  storage->shape = std::move(shape);
  storage->value = std::move(data);
  storage->requires_grad = requires_grad;
  return Tensor(std::move(storage));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape()));
  }
  return storage_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
  return storage_->value[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw DimensionError("index rank mismatch for " + shape_string(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= storage_->shape[axis]) throw DimensionError("index out of range for " + shape_string(shape()));
    flat = flat * storage_->shape[axis] + i;
    ++axis;
  }
  return storage_->value[flat];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto storage = std::make_shared<TensorStorage<T>>(*storage_);
  return Tensor(std::move(storage));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(storage_->shape, storage_->value, false);
}

namespace {

template <typename T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

}  // namespace

template <typename T>
Tape<T>::Tape() : previous_(active_tape<T>()), active_(true) {
  active_tape<T>() = this;
}

template <typename T>
Tape<T>::~Tape() {
  deactivate();
}

template <typename T>
void Tape<T>::deactivate() {
  if (!active_) return;
  active_ = false;
  if (active_tape<T>() == this) active_tape<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  Tape* tape = active_tape<T>();
  return (tape && tape->active_) ? tape : nullptr;
}

template <typename T>
void Tape<T>::record(std::function<void()> backward_step) {
  if (consumed_) throw UsageError("cannot record onto a tape after backward()");
  steps_.push_back(std::move(backward_step));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (consumed_) throw UsageError("backward() called twice on the same tape; run a new forward pass");
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) throw UsageError("loss is not connected to any tensor requiring gradients");
  consumed_ = true;
  deactivate();
  loss.storage()->ensure_grad()[0] += T(1);
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  steps_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace lpsn
