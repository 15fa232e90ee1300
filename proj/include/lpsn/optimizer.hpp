#pragma once

#include <cstdint>
#include <vector>

#include "lpsn/params.hpp"

namespace lpsn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m, v;  // one buffer per parameter, registration order

  bool operator==(const AdamState&) const = default;
};

/// Adam over a float parameter set. Parameters without a gradient in a step
/// are treated as having a zero gradient.
class Adam {
 public:
  explicit Adam(ParameterSet<float>& params, AdamOptions options = {});

  void step(double lr);

  const AdamState& state() const { return state_; }
  void set_state(AdamState state);

 private:
  ParameterSet<float>& params_;
  AdamOptions options_;
  AdamState state_;
};

/// lr0 * factor^floor(epoch / every)
double step_decay_lr(double lr0, std::size_t epoch, double factor = 0.5, std::size_t every = 40);

}  // namespace lpsn
