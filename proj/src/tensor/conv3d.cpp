#include <string>

#include "blas.hpp"
#include "lpsn/error.hpp"
#include "lpsn/ops.hpp"
#include "ops_detail.hpp"

namespace lpsn {

namespace {

struct ConvGeometry {
  std::size_t channels, in_f, in_h, in_w;
  std::size_t kf, kh, kw;
  std::size_t out_f, out_h, out_w;
  Int3 stride, padding;

  std::size_t patch() const { return channels * kf * kh * kw; }
  std::size_t positions() const { return out_f * out_h * out_w; }
  std::size_t in_volume() const { return channels * in_f * in_h * in_w; }
};

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* axis) {
  if (stride == 0) throw ConfigError(std::string("conv3d: zero stride on axis ") + axis);
  if (in + 2 * pad < k) {
    throw ConfigError(std::string("conv3d: non-positive output size on axis ") + axis + " (input " +
                      std::to_string(in) + ", kernel " + std::to_string(k) + ", padding " + std::to_string(pad) + ")");
  }
  return (in + 2 * pad - k) / stride + 1;
}

// cols[(c, a, b, e), (of, oh, ow)] = input[c, of*sf - pf + a, oh*sh - ph + b, ow*sw - pw + e]
template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* cols) {
  const std::size_t plane = g.out_h * g.out_w;
  T* row = cols;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* src_c = input + c * g.in_f * g.in_h * g.in_w;
    for (std::size_t a = 0; a < g.kf; ++a) {
      for (std::size_t b = 0; b < g.kh; ++b) {
        for (std::size_t e = 0; e < g.kw; ++e, row += g.positions()) {
          T* dst = row;
          for (std::size_t of = 0; of < g.out_f; ++of) {
            const long fi = static_cast<long>(of * g.stride[0] + a) - static_cast<long>(g.padding[0]);
            if (fi < 0 || fi >= static_cast<long>(g.in_f)) {
              std::fill_n(dst, plane, T(0));
              dst += plane;
              continue;
            }
            const T* src_f = src_c + static_cast<std::size_t>(fi) * g.in_h * g.in_w;
            for (std::size_t oh = 0; oh < g.out_h; ++oh) {
              const long hi = static_cast<long>(oh * g.stride[1] + b) - static_cast<long>(g.padding[1]);
              if (hi < 0 || hi >= static_cast<long>(g.in_h)) {
                std::fill_n(dst, g.out_w, T(0));
                dst += g.out_w;
                continue;
              }
              const T* src_h = src_f + static_cast<std::size_t>(hi) * g.in_w;
              for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                const long wi = static_cast<long>(ow * g.stride[2] + e) - static_cast<long>(g.padding[2]);
                *dst++ = (wi < 0 || wi >= static_cast<long>(g.in_w)) ? T(0) : src_h[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* input_grad) {
  const T* row = cols;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* dst_c = input_grad + c * g.in_f * g.in_h * g.in_w;
    for (std::size_t a = 0; a < g.kf; ++a) {
      for (std::size_t b = 0; b < g.kh; ++b) {
        for (std::size_t e = 0; e < g.kw; ++e, row += g.positions()) {
          const T* src = row;
          for (std::size_t of = 0; of < g.out_f; ++of) {
            const long fi = static_cast<long>(of * g.stride[0] + a) - static_cast<long>(g.padding[0]);
            if (fi < 0 || fi >= static_cast<long>(g.in_f)) {
              src += g.out_h * g.out_w;
              continue;
            }
            T* dst_f = dst_c + static_cast<std::size_t>(fi) * g.in_h * g.in_w;
            for (std::size_t oh = 0; oh < g.out_h; ++oh) {
              const long hi = static_cast<long>(oh * g.stride[1] + b) - static_cast<long>(g.padding[1]);
              if (hi < 0 || hi >= static_cast<long>(g.in_h)) {
                src += g.out_w;
                continue;
              }
              T* dst_h = dst_f + static_cast<std::size_t>(hi) * g.in_w;
              for (std::size_t ow = 0; ow < g.out_w; ++ow, ++src) {
                const long wi = static_cast<long>(ow * g.stride[2] + e) - static_cast<long>(g.padding[2]);
                if (wi >= 0 && wi < static_cast<long>(g.in_w)) dst_h[wi] += *src;
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernel, Int3 stride, Int3 padding) {
  if (input.rank() != 5 || kernel.rank() != 5) {
    throw DimensionError("conv3d expects rank-5 input and kernel, got " + shape_string(input.shape()) + " and " +
                         shape_string(kernel.shape()));
  }
  if (input.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv3d: input channels of " + shape_string(input.shape()) + " do not match kernel " +
                         shape_string(kernel.shape()));
  }
  ConvGeometry g{};
  g.channels = input.dim(1);
  g.in_f = input.dim(2);
  g.in_h = input.dim(3);
  g.in_w = input.dim(4);
  g.kf = kernel.dim(2);
  g.kh = kernel.dim(3);
  g.kw = kernel.dim(4);
  g.stride = stride;
  g.padding = padding;
  g.out_f = out_extent(g.in_f, g.kf, stride[0], padding[0], "f");
  g.out_h = out_extent(g.in_h, g.kh, stride[1], padding[1], "h");
  g.out_w = out_extent(g.in_w, g.kw, stride[2], padding[2], "w");

  const std::size_t batch = input.dim(0);
  const std::size_t filters = kernel.dim(0);
  const int m = static_cast<int>(filters), n = static_cast<int>(g.positions()), k = static_cast<int>(g.patch());

  std::vector<T> out(batch * filters * g.positions());
  std::vector<T> cols(g.patch() * g.positions());
  for (std::size_t s = 0; s < batch; ++s) {
    im2col(g, input.values().data() + s * g.in_volume(), cols.data());
    detail::gemm(false, false, m, n, k, T(1), kernel.values().data(), k, cols.data(), n, T(0),
                 out.data() + s * filters * g.positions(), n);
  }

  const bool rec = detail::recording<T>({&input, &kernel});
  Tensor<T> result = detail::make_result<T>({batch, filters, g.out_f, g.out_h, g.out_w}, std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record([is = input.storage(), ks = kernel.storage(), os = result.storage(), g, batch, filters,
                               m, n, k] {
      if (os->grad.empty()) return;
      std::vector<T> cols(g.patch() * g.positions());
      for (std::size_t s = 0; s < batch; ++s) {
        const T* g_out = os->grad.data() + s * filters * g.positions();
        if (ks->requires_grad) {
          im2col(g, is->value.data() + s * g.in_volume(), cols.data());
          detail::gemm(false, true, m, k, n, T(1), g_out, n, cols.data(), n, T(1), ks->ensure_grad().data(), k);
        }
        if (is->requires_grad) {
          detail::gemm(true, false, k, n, m, T(1), ks->value.data(), k, g_out, n, T(0), cols.data(), n);
          col2im_add(g, cols.data(), is->ensure_grad().data() + s * g.in_volume());
        }
      }
    });
  }
  return result;
}

template Tensor<float> conv3d(const Tensor<float>&, const Tensor<float>&, Int3, Int3);
template Tensor<double> conv3d(const Tensor<double>&, const Tensor<double>&, Int3, Int3);

}  // namespace lpsn
