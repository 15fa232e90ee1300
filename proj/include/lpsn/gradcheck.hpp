#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lpsn/tensor.hpp"

namespace lpsn {

struct GradCheckOptions {
  double step = 1e-4;  // central-difference step
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
};

struct GradCheckEntry {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() <= tolerance; }
};

using NamedLeaves = std::vector<std::pair<std::string, Tensor<double>>>;

/// Compares reverse-mode gradients against central finite differences.
///
/// `loss` must rebuild the scalar loss from the current values of `leaves`.
/// It is called once under a tape for the analytic gradient, then twice per
/// leaf entry with the tape inactive; the numeric side only ever runs forward.
GradCheckReport gradient_check(const NamedLeaves& leaves, const std::function<Tensor<double>()>& loss,
                               const GradCheckOptions& options = {});

}  // namespace lpsn
