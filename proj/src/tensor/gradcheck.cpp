#include "lpsn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lpsn/error.hpp"

namespace lpsn {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

GradCheckReport gradient_check(const NamedLeaves& leaves, const std::function<Tensor<double>()>& loss,
                               const GradCheckOptions& options) {
  std::vector<std::vector<double>> analytic;
  {
    for (const auto& [name, t] : leaves) {
      Tensor<double> leaf = t;
      leaf.set_requires_grad(true);
      leaf.zero_grad();
    }
    Tape<double> tape;
    Tensor<double> value = loss();
    tape.backward(value);
    for (const auto& [name, t] : leaves) {
      if (t.has_grad()) {
        analytic.emplace_back(t.grad().begin(), t.grad().end());
      } else {
        analytic.emplace_back(t.numel(), 0.0);
      }
    }
  }

  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double> leaf = leaves[li].second;
    GradCheckEntry entry;
    entry.name = leaves[li].first;
    entry.count = leaf.numel();
    auto values = leaf.values_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.step;
      const double plus = loss().item();
      values[i] = original - options.step;
      const double minus = loss().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[li][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace lpsn
