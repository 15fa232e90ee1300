#include "lpsn/fusion.hpp"

#include "lpsn/error.hpp"
#include "lpsn/ops.hpp"

namespace lpsn {

template <typename T>
FusionHead<T>::FusionHead(std::size_t input_dim, std::size_t hidden, ParameterSet<T>& params, ParamInit& init)
    : input_dim_(input_dim) {
  if (input_dim == 0 || hidden == 0) throw ConfigError("fusion head needs positive input and hidden widths");
  w1 = params.add("head.w1", init.fan_in<T>({input_dim, hidden}, input_dim));
  b1 = params.add("head.b1", Tensor<T>::zeros({hidden}));
  w2 = params.add("head.w2", init.fan_in<T>({hidden, 1}, hidden));
  b2 = params.add("head.b2", Tensor<T>::zeros({1}));
}

template <typename T>
Tensor<T> FusionHead<T>::forward(const Tensor<T>& features) const {
  if (features.rank() != 2 || features.dim(1) != input_dim_) {
    throw ConfigError("fusion head expects width " + std::to_string(input_dim_) + ", got features " +
                      shape_string(features.shape()));
  }
  Tensor<T> hidden = relu(add(matmul(features, w1), b1));
  return reshape(add(matmul(hidden, w2), b2), {features.dim(0)});
}

template <typename T>
Tensor<T> fuse_predict(const Tensor<T>& clinical, const Tensor<T>& visual, const FusionHead<T>& head) {
  if (clinical.rank() != 2 || visual.rank() != 2 || clinical.dim(0) != visual.dim(0)) {
    throw DimensionError("fuse_predict: clinical " + shape_string(clinical.shape()) + " and visual " +
                         shape_string(visual.shape()));
  }
  if (clinical.dim(1) + visual.dim(1) != head.input_dim()) {
    throw ConfigError("fusion head width " + std::to_string(head.input_dim()) + " does not equal " +
                      std::to_string(clinical.dim(1)) + " + " + std::to_string(visual.dim(1)));
  }
  return head.forward(concat<T>({clinical, visual}, 1));
}

Volume frame_difference(const Volume& volume, Direction direction) {
  if (volume.depth < 2) throw InputError("frame difference needs at least 2 slices, got " + std::to_string(volume.depth));
  Volume out(volume.depth, volume.height, volume.width);
  const std::size_t plane = volume.height * volume.width;
  for (std::size_t z = 0; z < volume.depth; ++z) {
    const bool edge = direction == Direction::Forward ? z + 1 == volume.depth : z == 0;
    if (edge) continue;
    const std::size_t other = direction == Direction::Forward ? z + 1 : z - 1;
    const float* a = volume.data.data() + other * plane;
    const float* b = volume.data.data() + z * plane;
    float* o = out.data.data() + z * plane;
    for (std::size_t i = 0; i < plane; ++i) o[i] = a[i] - b[i];
  }
  return out;
}

std::string to_string(FrameDiff mode) {
  switch (mode) {
    case FrameDiff::On: return "on";
    case FrameDiff::ForwardOnly: return "forward";
    case FrameDiff::BackwardOnly: return "backward";
    case FrameDiff::Off: return "off";
  }
  return "?";
}

FrameDiff parse_frame_diff(const std::string& text) {
  for (FrameDiff m : {FrameDiff::On, FrameDiff::ForwardOnly, FrameDiff::BackwardOnly, FrameDiff::Off}) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown frame-difference mode '" + text + "' (on, forward, backward, off)");
}

namespace {

void check_omega(double omega) {
  if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("ensemble weight omega=" + std::to_string(omega) + " outside [0,1]");
}

}  // namespace

double ensemble_predict(double t, double t_forward, double t_backward, double omega) {
  check_omega(omega);
  return omega * t + (1.0 - omega) * (t_forward + t_backward) / 2.0;
}

template <typename T>
Tensor<T> ensemble(const Tensor<T>& t, const Tensor<T>& t_forward, const Tensor<T>& t_backward, double omega,
                   FrameDiff mode) {
  check_omega(omega);
  const T w = static_cast<T>(omega), rest = static_cast<T>(1.0 - omega);
  switch (mode) {
    case FrameDiff::Off: return t;
    case FrameDiff::ForwardOnly: return add(scale(t, w), scale(t_forward, rest));
    case FrameDiff::BackwardOnly: return add(scale(t, w), scale(t_backward, rest));
    case FrameDiff::On: return add(scale(t, w), scale(add(t_forward, t_backward), rest / T(2)));
  }
  return t;
}

template <typename T>
Tensor<T> mse(const Tensor<T>& predictions, const Tensor<T>& targets) {
  if (!predictions.defined() || predictions.numel() == 0) throw UsageError("loss of an empty batch");
  if (predictions.shape() != targets.shape()) {
    throw DimensionError("loss: predictions " + shape_string(predictions.shape()) + " vs targets " +
                         shape_string(targets.shape()));
  }
  Tensor<T> diff = sub(predictions, targets);
  return scale(sum_squares(diff), T(1) / static_cast<T>(predictions.numel()));
}

template <typename T>
Tensor<T> survival_loss(const Tensor<T>& predictions, const Tensor<T>& targets, const ParameterSet<T>& params,
                        double lambda) {
  Tensor<T> loss = mse(predictions, targets);
  if (lambda == 0.0) return loss;
  return add(loss, scale(params.l2_penalty(), static_cast<T>(lambda)));
}

#define LPSN_INSTANTIATE_FUSION(T)                                                                        \
  template class FusionHead<T>;                                                                           \
  template Tensor<T> fuse_predict(const Tensor<T>&, const Tensor<T>&, const FusionHead<T>&);              \
  template Tensor<T> ensemble(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double, FrameDiff);   \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> survival_loss(const Tensor<T>&, const Tensor<T>&, const ParameterSet<T>&, double);

LPSN_INSTANTIATE_FUSION(float)
LPSN_INSTANTIATE_FUSION(double)

}  // namespace lpsn
