#pragma once

#include <string>

#include "lpsn/params.hpp"
#include "lpsn/tensor.hpp"
#include "lpsn/volume.hpp"

namespace lpsn {

/// Two-layer MLP (ReLU hidden layer, linear scalar output) over the fused
/// feature vector.
template <typename T>
class FusionHead {
 public:
  FusionHead(std::size_t input_dim, std::size_t hidden, ParameterSet<T>& params, ParamInit& init);

  /// features [n x input_dim] -> [n]
  Tensor<T> forward(const Tensor<T>& features) const;

  std::size_t input_dim() const { return input_dim_; }

  Tensor<T> w1, b1, w2, b2;

 private:
  std::size_t input_dim_;
};

/// Concatenates clinical [n x d] and visual [n x dv] features and runs the head.
template <typename T>
Tensor<T> fuse_predict(const Tensor<T>& clinical, const Tensor<T>& visual, const FusionHead<T>& head);

enum class Direction { Forward, Backward };

/// Forward: out[i] = v[i+1] - v[i], last slice zero. Backward: out[i] =
/// v[i-1] - v[i], first slice zero. Throws InputError for fewer than 2 slices.
Volume frame_difference(const Volume& volume, Direction direction);

/// Which frame-difference predictions enter the ensemble.
enum class FrameDiff { On, ForwardOnly, BackwardOnly, Off };
std::string to_string(FrameDiff mode);
FrameDiff parse_frame_diff(const std::string& text);

/// omega * t + (1 - omega) * (t_forward + t_backward) / 2
double ensemble_predict(double t, double t_forward, double t_backward, double omega);

/// Tensor form of the ensemble for the configured mode. Unused inputs may be
/// undefined; FrameDiff::Off returns `t` itself.
template <typename T>
Tensor<T> ensemble(const Tensor<T>& t, const Tensor<T>& t_forward, const Tensor<T>& t_backward, double omega,
                   FrameDiff mode);

/// Mean squared error between predictions and targets plus lambda times the
/// squared norm of every regularized parameter.
template <typename T>
Tensor<T> survival_loss(const Tensor<T>& predictions, const Tensor<T>& targets, const ParameterSet<T>& params,
                        double lambda);

/// The MSE part alone.
template <typename T>
Tensor<T> mse(const Tensor<T>& predictions, const Tensor<T>& targets);

extern template class FusionHead<float>;
extern template class FusionHead<double>;

}  // namespace lpsn
