#include "lpsn/optimizer.hpp"

#include <cmath>

#include "lpsn/error.hpp"

namespace lpsn {

Adam::Adam(ParameterSet<float>& params, AdamOptions options) : params_(params), options_(options) {
  for (const auto& p : params.entries()) {
    state_.m.emplace_back(p.tensor.numel(), 0.0f);
    state_.v.emplace_back(p.tensor.numel(), 0.0f);
  }
}

void Adam::set_state(AdamState state) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw ConfigError("optimizer state does not match the parameter set");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::size_t n = params_.entries()[i].tensor.numel();
    if (state.m[i].size() != n || state.v[i].size() != n) {
      throw ConfigError("optimizer moments of '" + params_.entries()[i].name + "' have the wrong size");
    }
  }
  state_ = std::move(state);
}

void Adam::step(double lr) {
  ++state_.step;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<float>& t = params_.entries()[i].tensor;
    auto values = t.values_mut();
    auto grad = t.grad();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[k]);
      m[k] = static_cast<float>(b1 * m[k] + (1.0 - b1) * g);
      v[k] = static_cast<float>(b2 * v[k] + (1.0 - b2) * g * g);
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      values[k] = static_cast<float>(values[k] - lr * m_hat / (std::sqrt(v_hat) + options_.eps));
    }
  }
}

double step_decay_lr(double lr0, std::size_t epoch, double factor, std::size_t every) {
  if (every == 0) throw ConfigError("lr decay interval must be positive");
  return lr0 * std::pow(factor, static_cast<double>(epoch / every));
}

}  // namespace lpsn
