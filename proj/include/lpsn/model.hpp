#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "lpsn/clinical.hpp"
#include "lpsn/fusion.hpp"
#include "lpsn/gradcheck.hpp"
#include "lpsn/visual.hpp"

namespace lpsn {

struct ModelConfig {
  bool use_clinical = true;
  bool use_visual = true;
  ClinicalConfig clinical;
  VisualConfig visual = VisualConfig::compact();
  std::size_t head_hidden = 64;
  FrameDiff frame_diff = FrameDiff::On;
  double omega = 0.4;
  std::uint64_t init_seed = 1;

  void validate() const;
};

/// One mini-batch: encoded clinical records plus the (augmented) base volumes,
/// [batch x f x h x w] float32. Frame differences are derived inside the model.
struct ModelInput {
  ClinicalInput clinical;
  std::vector<float> volumes;
};

template <typename T>
struct Predictions {
  Tensor<T> raw;       // from the volume itself
  Tensor<T> forward;   // from the forward-difference volume (if used)
  Tensor<T> backward;  // from the backward-difference volume (if used)
  Tensor<T> ensembled;
};

/// Two-tower survival-time regressor. The clinical feature is computed once
/// per batch; the visual tower runs separately on the raw, forward-difference
/// and backward-difference volumes with one shared set of weights.
template <typename T>
class LiteProSENet {
 public:
  explicit LiteProSENet(const ModelConfig& config);

  Predictions<T> forward(const ModelInput& input) const;

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  ClinicalTower<T>* clinical() { return clinical_.get(); }
  VisualTower<T>* visual() { return visual_.get(); }
  FusionHead<T>& head() { return *head_; }

 private:
  Tensor<T> predict(const Tensor<T>& clinical_features, const Tensor<T>& volumes) const;

  ModelConfig config_;
  ParameterSet<T> params_;
  std::unique_ptr<ClinicalTower<T>> clinical_;
  std::unique_ptr<VisualTower<T>> visual_;
  std::unique_ptr<FusionHead<T>> head_;
};

/// Frame-difference volumes of a batch laid out as in ModelInput::volumes.
std::vector<float> batch_frame_difference(const std::vector<float>& volumes, std::size_t batch, Int3 dims,
                                          Direction direction);

// Full model at finite-difference size: 4 frames of 16x16, d = 12, one block
// per stage. A 1e-4 step still crosses a ReLU kink for most seeds; with
// kGradcheckSeed no pre-activation lies within reach of zero.
inline constexpr std::uint64_t kGradcheckSeed = 11;
ModelConfig gradcheck_model_config(std::uint64_t seed = kGradcheckSeed);
ModelInput gradcheck_input(std::uint64_t seed = kGradcheckSeed, std::size_t batch = 2);

/// Central differences over every parameter of the gradcheck model, on
/// mse + lambda * L2 of the ensembled prediction against fixed targets.
GradCheckReport model_gradient_check(std::uint64_t seed = kGradcheckSeed, double lambda = 0.01,
                                     const GradCheckOptions& options = {});

extern template class LiteProSENet<float>;
extern template class LiteProSENet<double>;

}  // namespace lpsn
