#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "lpsn/tensor.hpp"

// Differentiable tensor primitives. Every function records a backward step on
// the active Tape<T> when at least one input requires gradients. Binary
// elementwise operations broadcast with trailing-dimension alignment: shapes
// are right-aligned and each aligned pair of sizes must match or contain a 1.

namespace lpsn {

using Int3 = std::array<std::size_t, 3>;

/// [m x k] x [k x n] -> [m x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Batched product: [b x m x k] x [b x k x n] -> [b x m x n]
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);  // rank 2

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& order);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);

/// Sum of all entries -> shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
/// Sum of squared entries -> shape [1].
template <typename T>
Tensor<T> sum_squares(const Tensor<T>& a);

/// Mean over the listed axes. Reduced axes are dropped unless `keepdim`;
/// reducing every axis yields shape [1].
template <typename T>
Tensor<T> mean_over(const Tensor<T>& a, const std::vector<std::size_t>& axes, bool keepdim = false);

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis);

/// Normalizes over the last axis (population variance), then applies
/// per-feature gain and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5));

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

/// Slice [start, start + length) along `axis`.
template <typename T>
Tensor<T> narrow(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length);

/// Rows of a [V x d] table -> [indices.size() x d].
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::size_t>& indices);

/// 3D cross-correlation. input [n x c x f x h x w], kernel [k x c x kf x kh x kw]
/// -> [n x k x f' x h' x w'] with f' = (f + 2 pad_f - kf) / stride_f + 1, etc.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernel, Int3 stride, Int3 padding);

}  // namespace lpsn
