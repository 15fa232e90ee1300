#include "lpsn/model.hpp"

#include <random>

#include "lpsn/error.hpp"
#include "lpsn/ops.hpp"

namespace lpsn {

void ModelConfig::validate() const {
  if (!use_clinical && !use_visual) throw ConfigError("model needs at least one tower");
  if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("omega=" + std::to_string(omega) + " outside [0,1]");
  if (use_visual) visual.validate();
  if (use_clinical && clinical.encoder == TextualEncoder::LiteTransformer) clinical.transformer.validate();
  if (head_hidden == 0) throw ConfigError("head width must be positive");
}

template <typename T>
LiteProSENet<T>::LiteProSENet(const ModelConfig& config) : config_(config) {
  config.validate();
  ParamInit init(config.init_seed);
  std::size_t width = 0;
  if (config.use_clinical) {
    clinical_ = std::make_unique<ClinicalTower<T>>(config.clinical, params_, init);
    width += clinical_->output_dim();
  }
  if (config.use_visual) {
    visual_ = std::make_unique<VisualTower<T>>(config.visual, params_, init);
    width += visual_->output_dim();
  }
  head_ = std::make_unique<FusionHead<T>>(width, config.head_hidden, params_, init);
}

std::vector<float> batch_frame_difference(const std::vector<float>& volumes, std::size_t batch, Int3 dims,
                                          Direction direction) {
  const std::size_t per = dims[0] * dims[1] * dims[2];
  std::vector<float> out(volumes.size());
  Volume v(dims[0], dims[1], dims[2]);
  for (std::size_t i = 0; i < batch; ++i) {
    std::copy_n(volumes.begin() + static_cast<std::ptrdiff_t>(i * per), per, v.data.begin());
    Volume d = frame_difference(v, direction);
    std::copy(d.data.begin(), d.data.end(), out.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

template <typename T>
Tensor<T> LiteProSENet<T>::predict(const Tensor<T>& clinical_features, const Tensor<T>& volumes) const {
  if (!visual_) return head_->forward(clinical_features);
  Tensor<T> visual_features = visual_->forward(volumes);
  if (!clinical_) return head_->forward(visual_features);
  return fuse_predict(clinical_features, visual_features, *head_);
}

template <typename T>
Predictions<T> LiteProSENet<T>::forward(const ModelInput& input) const {
  const std::size_t n = input.clinical.batch;
  if (n == 0) throw UsageError("forward on an empty batch");
  Tensor<T> clinical_features;
  if (clinical_) clinical_features = clinical_->forward(input.clinical);

  Predictions<T> out;
  if (!visual_) {
    out.raw = predict(clinical_features, {});
    out.ensembled = out.raw;
    return out;
  }
  const Int3 dims = config_.visual.input;
  const std::size_t per = dims[0] * dims[1] * dims[2];
  if (input.volumes.size() != n * per) {
    throw DimensionError("batch of " + std::to_string(n) + " expects " + std::to_string(n * per) +
                         " voxels, got " + std::to_string(input.volumes.size()));
  }
  auto as_tensor = [&](const std::vector<float>& data) {
    return Tensor<T>::from_data({n, 1, dims[0], dims[1], dims[2]}, std::vector<T>(data.begin(), data.end()));
  };
  out.raw = predict(clinical_features, as_tensor(input.volumes));
  const FrameDiff mode = config_.frame_diff;
  if (mode == FrameDiff::On || mode == FrameDiff::ForwardOnly) {
    out.forward = predict(clinical_features,
                          as_tensor(batch_frame_difference(input.volumes, n, dims, Direction::Forward)));
  }
  if (mode == FrameDiff::On || mode == FrameDiff::BackwardOnly) {
    out.backward = predict(clinical_features,
                           as_tensor(batch_frame_difference(input.volumes, n, dims, Direction::Backward)));
  }
  out.ensembled = ensemble(out.raw, out.forward, out.backward, config_.omega, mode);
  return out;
}

ModelConfig gradcheck_model_config(std::uint64_t seed) {
  ModelConfig m;
  m.clinical.vocab_size = 7;
  m.clinical.item_tokens = 3;
  m.clinical.covariates = 1;
  m.clinical.transformer = {12, 3, 1, 16};
  m.visual = VisualConfig::tiny();
  m.visual.stem = {2, {3, 3, 3}, {1, 4, 4}, {1, 1, 1}};
  m.visual.stages = {{2, 1, {1, 1, 1}}, {4, 1, {1, 2, 2}}};
  m.head_hidden = 8;
  m.init_seed = seed;
  return m;
}

ModelInput gradcheck_input(std::uint64_t seed, std::size_t batch) {
  std::mt19937_64 rng(seed);
  ModelInput in;
  in.clinical.batch = batch;
  std::uniform_int_distribution<std::size_t> item(0, 6);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  for (std::size_t i = 0; i < batch * 3; ++i) in.clinical.items.push_back(item(rng));
  for (std::size_t i = 0; i < batch; ++i) in.clinical.covariates.push_back(unit(rng) - 0.5f);
  for (std::size_t i = 0; i < batch * 4 * 16 * 16; ++i) in.volumes.push_back(unit(rng));
  return in;
}

GradCheckReport model_gradient_check(std::uint64_t seed, double lambda, const GradCheckOptions& options) {
  LiteProSENet<double> model(gradcheck_model_config(seed));
  const ModelInput in = gradcheck_input(seed);
  std::vector<double> t(in.clinical.batch);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.2 + 0.6 * static_cast<double>(i) / static_cast<double>(t.size());
  const auto targets = Tensor<double>::from_data({t.size()}, t);
  NamedLeaves leaves;
  for (auto& p : model.params().entries()) leaves.emplace_back(p.name, p.tensor);
  return gradient_check(
      leaves, [&] { return survival_loss(model.forward(in).ensembled, targets, model.params(), lambda); }, options);
}

template class LiteProSENet<float>;
template class LiteProSENet<double>;

}  // namespace lpsn
