#pragma once

#include <initializer_list>
#include <vector>

#include "lpsn/tensor.hpp"

namespace lpsn::detail {

// Output is contiguous over `out`; `sizes`/`stride_*` describe the coalesced
// iteration space (unit dims dropped, contiguous runs merged).
struct BroadcastLayout {
  Shape out;
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
};

BroadcastLayout broadcast_layout(const Shape& a, const Shape& b, const char* op);

// Calls f(out_index, a_index, b_index) for every output element in order.
template <class F>
void for_each_broadcast(const BroadcastLayout& layout, F&& f) {
  const std::size_t rank = layout.sizes.size();
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t inner = layout.sizes[rank - 1];
  const std::size_t step_a = layout.stride_a[rank - 1];
  const std::size_t step_b = layout.stride_b[rank - 1];
  std::size_t outer = 1;
  for (std::size_t d = 0; d + 1 < rank; ++d) outer *= layout.sizes[d];

  std::vector<std::size_t> counter(rank, 0);
  std::size_t base_a = 0, base_b = 0, out = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t ia = base_a, ib = base_b;
    for (std::size_t i = 0; i < inner; ++i, ++out, ia += step_a, ib += step_b) f(out, ia, ib);
    for (std::size_t d = rank - 1; d-- > 0;) {
      if (++counter[d] < layout.sizes[d]) {
        base_a += layout.stride_a[d];
        base_b += layout.stride_b[d];
        break;
      }
      base_a -= layout.stride_a[d] * (layout.sizes[d] - 1);
      base_b -= layout.stride_b[d] * (layout.sizes[d] - 1);
      counter[d] = 0;
    }
  }
}

template <typename T>
bool recording(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Tape<T>::active()) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, bool requires_grad) {
  return Tensor<T>::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace lpsn::detail
