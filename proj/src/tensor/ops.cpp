#include "lpsn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "blas.hpp"
#include "lpsn/error.hpp"
#include "ops_detail.hpp"

namespace lpsn {

namespace detail {

BroadcastLayout broadcast_layout(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank - a.size(), 1), pb(rank - b.size(), 1);
  pa.insert(pa.end(), a.begin(), a.end());
  pb.insert(pb.end(), b.begin(), b.end());

  BroadcastLayout layout;
  layout.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      layout.out[i] = pa[i];
    } else if (pa[i] == 1) {
      layout.out[i] = pb[i];
    } else {
      throw DimensionError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) +
                           " are not broadcast-compatible");
    }
  }

  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t stride_a = 1, stride_b = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = (pa[i] == 1) ? 0 : stride_a;
    sb[i] = (pb[i] == 1) ? 0 : stride_b;
    stride_a *= pa[i];
    stride_b *= pb[i];
  }

  // Coalesce adjacent dims that are contiguous in both operands; drop unit dims.
  for (std::size_t i = 0; i < rank; ++i) {
    if (layout.out[i] == 1) continue;
    if (!layout.sizes.empty()) {
      const std::size_t n = layout.out[i];
      if (layout.stride_a.back() == sa[i] * n && layout.stride_b.back() == sb[i] * n) {
        layout.sizes.back() *= n;
        layout.stride_a.back() = sa[i];
        layout.stride_b.back() = sb[i];
        continue;
      }
    }
    layout.sizes.push_back(layout.out[i]);
    layout.stride_a.push_back(sa[i]);
    layout.stride_b.push_back(sb[i]);
  }
  return layout;
}

}  // namespace detail

using detail::for_each_broadcast;
using detail::make_result;
using detail::recording;

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
  }
  const int m = static_cast<int>(a.dim(0)), k = static_cast<int>(a.dim(1)), n = static_cast<int>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(m) * n, T(0));
  detail::gemm(false, false, m, n, k, T(1), a.values().data(), k, b.values().data(), n, T(0), out.data(), n);
  const bool rec = recording<T>({&a, &b});
  Tensor<T> result = make_result<T>({a.dim(0), b.dim(1)}, std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), bs = b.storage(), os = result.storage(), m, n, k] {
      if (os->grad.empty()) return;
      const T* g = os->grad.data();
      if (as->requires_grad) {
        detail::gemm(false, true, m, k, n, T(1), g, n, bs->value.data(), n, T(1), as->ensure_grad().data(), k);
      }
      if (bs->requires_grad) {
        detail::gemm(true, false, k, n, m, T(1), as->value.data(), k, g, n, T(1), bs->ensure_grad().data(), n);
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw DimensionError("bmm: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
  }
  const std::size_t batch = a.dim(0);
  const int m = static_cast<int>(a.dim(1)), k = static_cast<int>(a.dim(2)), n = static_cast<int>(b.dim(2));
  const std::size_t sa = static_cast<std::size_t>(m) * k, sb = static_cast<std::size_t>(k) * n,
                    so = static_cast<std::size_t>(m) * n;
  std::vector<T> out(batch * so, T(0));
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm(false, false, m, n, k, T(1), a.values().data() + i * sa, k, b.values().data() + i * sb, n, T(0),
                 out.data() + i * so, n);
  }
  const bool rec = recording<T>({&a, &b});
  Tensor<T> result = make_result<T>({batch, a.dim(1), b.dim(2)}, std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), bs = b.storage(), os = result.storage(), batch, m, n, k, sa, sb, so] {
      if (os->grad.empty()) return;
      for (std::size_t i = 0; i < batch; ++i) {
        const T* g = os->grad.data() + i * so;
        if (as->requires_grad) {
          detail::gemm(false, true, m, k, n, T(1), g, n, bs->value.data() + i * sb, n, T(1),
                       as->ensure_grad().data() + i * sa, k);
        }
        if (bs->requires_grad) {
          detail::gemm(true, false, k, n, m, T(1), as->value.data() + i * sa, k, g, n, T(1),
                       bs->ensure_grad().data() + i * sb, n);
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& order) {
  const std::size_t rank = a.rank();
  if (order.size() != rank) throw DimensionError("permute: order length does not match " + shape_string(a.shape()));
  std::vector<bool> seen(rank, false);
  for (std::size_t axis : order) {
    if (axis >= rank || seen[axis]) throw DimensionError("permute: invalid axis order");
    seen[axis] = true;
  }
  std::vector<std::size_t> in_strides(rank);
  std::size_t stride = 1;
  for (std::size_t i = rank; i-- > 0;) {
    in_strides[i] = stride;
    stride *= a.dim(i);
  }
  Shape out_shape(rank);
  std::vector<std::size_t> gather_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = a.dim(order[i]);
    gather_strides[i] = in_strides[order[i]];
  }
  // Source offset for each output element, in output order.
  const std::size_t total = a.numel();
  auto offsets = std::make_shared<std::vector<std::size_t>>(total);
  {
    std::vector<std::size_t> counter(rank, 0);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < total; ++i) {
      (*offsets)[i] = offset;
      for (std::size_t d = rank; d-- > 0;) {
        if (++counter[d] < out_shape[d]) {
          offset += gather_strides[d];
          break;
        }
        offset -= gather_strides[d] * (out_shape[d] - 1);
        counter[d] = 0;
      }
    }
  }
  std::vector<T> out(total);
  const auto src = a.values();
  for (std::size_t i = 0; i < total; ++i) out[i] = src[(*offsets)[i]];
  const bool rec = recording<T>({&a});
  Tensor<T> result = make_result<T>(std::move(out_shape), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), os = result.storage(), offsets] {
      if (os->grad.empty()) return;
      auto& ga = as->ensure_grad();
      for (std::size_t i = 0; i < offsets->size(); ++i) ga[(*offsets)[i]] += os->grad[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_string(a.shape()));
  return permute(a, {1, 0});
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  const bool rec = recording<T>({&a});
  std::vector<T> out(a.values().begin(), a.values().end());
  Tensor<T> result = make_result<T>(std::move(shape), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), os = result.storage()] {
      if (os->grad.empty()) return;
      auto& ga = as->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += os->grad[i];
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

enum class BinaryOp { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryOp op, const char* name) {
  auto layout = std::make_shared<detail::BroadcastLayout>(detail::broadcast_layout(a.shape(), b.shape(), name));
  std::vector<T> out(shape_numel(layout->out));
  const T* av = a.values().data();
  const T* bv = b.values().data();
  switch (op) {
    case BinaryOp::kAdd:
      for_each_broadcast(*layout, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] + bv[j]; });
      break;
    case BinaryOp::kSub:
      for_each_broadcast(*layout, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] - bv[j]; });
      break;
    case BinaryOp::kMul:
      for_each_broadcast(*layout, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] * bv[j]; });
      break;
  }
  const bool rec = recording<T>({&a, &b});
  Tensor<T> result = make_result<T>(layout->out, std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), bs = b.storage(), os = result.storage(), layout, op] {
      if (os->grad.empty()) return;
      const T* g = os->grad.data();
      if (as->requires_grad) {
        T* ga = as->ensure_grad().data();
        if (op == BinaryOp::kMul) {
          const T* bv = bs->value.data();
          for_each_broadcast(*layout, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * bv[j]; });
        } else {
          for_each_broadcast(*layout, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += g[o]; });
        }
      }
      if (bs->requires_grad) {
        T* gb = bs->ensure_grad().data();
        if (op == BinaryOp::kMul) {
          const T* av = as->value.data();
          for_each_broadcast(*layout, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * av[i]; });
        } else if (op == BinaryOp::kSub) {
          for_each_broadcast(*layout, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] -= g[o]; });
        } else {
          for_each_broadcast(*layout, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += g[o]; });
        }
      }
    });
  }
  return result;
}

// Unary map with derivative expressed through input x and output y.
template <typename T, class Fwd, class Deriv>
Tensor<T> unary(const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  const auto in = a.values();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  const bool rec = recording<T>({&a});
  Tensor<T> result = make_result<T>(a.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), os = result.storage(), deriv] {
      if (os->grad.empty()) return;
      auto& ga = as->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += os->grad[i] * deriv(as->value[i], os->value[i]);
    });
  }
  return result;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::kAdd, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::kSub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::kMul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(
      a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return unary(
      a, [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.values()) total += v;
  const bool rec = recording<T>({&a});
  Tensor<T> result = make_result<T>({1}, {total}, rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), os = result.storage()] {
      if (os->grad.empty()) return;
      const T g = os->grad[0];
      for (T& v : as->ensure_grad()) v += g;
    });
  }
  return result;
}

template <typename T>
Tensor<T> sum_squares(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.values()) total += v * v;
  const bool rec = recording<T>({&a});
  Tensor<T> result = make_result<T>({1}, {total}, rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), os = result.storage()] {
      if (os->grad.empty()) return;
      const T g = T(2) * os->grad[0];
      auto& ga = as->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * as->value[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean_over(const Tensor<T>& a, const std::vector<std::size_t>& axes, bool keepdim) {
  const std::size_t rank = a.rank();
  std::vector<bool> reduced(rank, false);
  for (std::size_t axis : axes) {
    if (axis >= rank) {
      throw DimensionError("mean_over: axis " + std::to_string(axis) + " out of range for " + shape_string(a.shape()));
    }
    reduced[axis] = true;
  }
  Shape kept(rank);
  Shape dropped;
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    kept[i] = reduced[i] ? 1 : a.dim(i);
    if (reduced[i]) {
      count *= a.dim(i);
    } else {
      dropped.push_back(a.dim(i));
    }
  }
  if (dropped.empty()) dropped.push_back(1);
  auto layout = std::make_shared<detail::BroadcastLayout>(detail::broadcast_layout(a.shape(), kept, "mean_over"));
  std::vector<T> out(shape_numel(kept), T(0));
  const T* in = a.values().data();
  for_each_broadcast(*layout, [&](std::size_t, std::size_t i, std::size_t j) { out[j] += in[i]; });
  const T inv = T(1) / static_cast<T>(count);
  for (T& v : out) v *= inv;
  const bool rec = recording<T>({&a});
  Tensor<T> result = make_result<T>(keepdim ? kept : dropped, std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), os = result.storage(), layout, inv] {
      if (os->grad.empty()) return;
      T* ga = as->ensure_grad().data();
      const T* g = os->grad.data();
      for_each_broadcast(*layout, [&](std::size_t, std::size_t i, std::size_t j) { ga[i] += g[j] * inv; });
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Normalization

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_string(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t len = a.dim(axis);
  const auto in = a.values();
  std::vector<T> out(in.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t s = 0; s < inner; ++s) {
      const std::size_t base = o * len * inner + s;
      T peak = in[base];
      for (std::size_t l = 1; l < len; ++l) peak = std::max(peak, in[base + l * inner]);
      T total = T(0);
      for (std::size_t l = 0; l < len; ++l) {
        const T e = std::exp(in[base + l * inner] - peak);
        out[base + l * inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= total;
    }
  }
  const bool rec = recording<T>({&a});
  Tensor<T> result = make_result<T>(a.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), os = result.storage(), outer, inner, len] {
      if (os->grad.empty()) return;
      auto& ga = as->ensure_grad();
      const auto& y = os->value;
      const auto& g = os->grad;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t s = 0; s < inner; ++s) {
          const std::size_t base = o * len * inner + s;
          T dot = T(0);
          for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * y[base + l * inner];
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t idx = base + l * inner;
            ga[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (a.rank() == 0) throw DimensionError("layer_norm on rank-0 tensor");
  const std::size_t d = a.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " + shape_string(bias.shape()) +
                         " do not match feature size " + std::to_string(d));
  }
  const std::size_t rows = a.numel() / d;
  const auto x = a.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  auto normalized = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data() + r * d;
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(d);
    const T istd = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = istd;
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = (row[j] - mean) * istd;
      (*normalized)[r * d + j] = xhat;
      out[r * d + j] = xhat * gv[j] + bv[j];
    }
  }
  const bool rec = recording<T>({&a, &gain, &bias});
  Tensor<T> result = make_result<T>(a.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), gs = gain.storage(), bs = bias.storage(), os = result.storage(),
                               normalized, inv_std, rows, d] {
      if (os->grad.empty()) return;
      const auto& g = os->grad;
      const auto& xhat = *normalized;
      if (gs->requires_grad) {
        auto& gg = gs->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
        }
      }
      if (bs->requires_grad) {
        auto& gb = bs->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
      }
      if (as->requires_grad) {
        auto& ga = as->ensure_grad();
        const auto& gain_v = gs->value;
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
          for (std::size_t j = 0; j < d; ++j) {
            const T dxhat = g[r * d + j] * gain_v[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[r * d + j];
          }
          mean_dxhat /= static_cast<T>(d);
          mean_dxhat_xhat /= static_cast<T>(d);
          const T istd = (*inv_std)[r];
          for (std::size_t j = 0; j < d; ++j) {
            const T dxhat = g[r * d + j] * gain_v[j];
            ga[r * d + j] += istd * (dxhat - mean_dxhat - xhat[r * d + j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Structural

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of an empty list");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && p.dim(i) != first[i]) {
        throw DimensionError("concat: " + shape_string(p.shape()) + " disagrees with " + shape_string(first) +
                             " off the concat axis");
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  bool rec = false;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * inner;
    const auto v = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * chunk, chunk, out.data() + o * out_row + offset);
    }
    offset += chunk;
    rec = rec || recording<T>({&p});
  }
  Tensor<T> result = make_result<T>(std::move(out_shape), std::move(out), rec);
  if (rec) {
    std::vector<std::shared_ptr<TensorStorage<T>>> storages;
    for (const auto& p : parts) storages.push_back(p.storage());
    Tape<T>::active()->record([storages, os = result.storage(), offsets, outer, inner, out_row] {
      if (os->grad.empty()) return;
      for (std::size_t k = 0; k < storages.size(); ++k) {
        auto& ps = storages[k];
        if (!ps->requires_grad) continue;
        const std::size_t chunk = ps->value.size() / outer;
        auto& gp = ps->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = os->grad.data() + o * out_row + offsets[k];
          T* dst = gp.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      (void)inner;
    });
  }
  return result;
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank() || length == 0 || start + length > a.dim(axis)) {
    throw DimensionError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") invalid on axis " + std::to_string(axis) + " of " + shape_string(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t in_row = a.dim(axis) * inner, out_row = length * inner, skip = start * inner;
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::vector<T> out(outer * out_row);
  const auto v = a.values();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(v.data() + o * in_row + skip, out_row, out.data() + o * out_row);
  const bool rec = recording<T>({&a});
  Tensor<T> result = make_result<T>(std::move(out_shape), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([as = a.storage(), os = result.storage(), outer, in_row, out_row, skip] {
      if (os->grad.empty()) return;
      auto& ga = as->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < out_row; ++i) ga[o * in_row + skip + i] += os->grad[o * out_row + i];
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::size_t>& indices) {
  if (table.rank() != 2) throw DimensionError("gather_rows expects a [V x d] table, got " + shape_string(table.shape()));
  if (indices.empty()) throw DimensionError("gather_rows with no indices");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<T> out(indices.size() * d);
  const auto v = table.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " outside table of " +
                           std::to_string(rows) + " rows");
    }
    std::copy_n(v.data() + indices[i] * d, d, out.data() + i * d);
  }
  const bool rec = recording<T>({&table});
  Tensor<T> result = make_result<T>({indices.size(), d}, std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([ts = table.storage(), os = result.storage(), indices, d] {
      if (os->grad.empty()) return;
      auto& gt = ts->ensure_grad();
      for (std::size_t i = 0; i < indices.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) gt[indices[i] * d + j] += os->grad[i * d + j];
      }
    });
  }
  return result;
}

#define LPSN_INSTANTIATE_OPS(T)                                                                         \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> transpose(const Tensor<T>&);                                                       \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> scale(const Tensor<T>&, T);                                                        \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                   \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                         \
  template Tensor<T> relu(const Tensor<T>&);                                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                             \
  template Tensor<T> sum_squares(const Tensor<T>&);                                                     \
  template Tensor<T> mean_over(const Tensor<T>&, const std::vector<std::size_t>&, bool);                \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);               \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                                \
  template Tensor<T> narrow(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                   \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&);

LPSN_INSTANTIATE_OPS(float)
LPSN_INSTANTIATE_OPS(double)

}  // namespace lpsn
