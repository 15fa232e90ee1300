#pragma once

#include <optional>
#include <span>
#include <vector>

namespace lpsn {

struct MinMaxScaler {
  double min = 0.0, max = 1.0;

  /// Throws DegenerateFeatureError when the series is constant or empty.
  static MinMaxScaler fit(std::span<const double> series);
  /// (x - min) / (max - min); values outside the fitted range are not clamped.
  double apply(double x) const { return (x - min) / (max - min); }

  bool operator==(const MinMaxScaler&) const = default;
};

/// Standard score with the population standard deviation.
struct ZScoreScaler {
  double mean = 0.0, std = 1.0;

  static ZScoreScaler fit(std::span<const double> series);
  double apply(double x) const { return (x - mean) / std; }
};

std::vector<double> minmax_scale(std::span<const double> series);
std::vector<double> zscore(std::span<const double> series);

/// Mean of the present values. Throws PipelineError when none is present.
double observed_mean(std::span<const std::optional<double>> values);

/// Replaces missing values by `fill`.
std::vector<double> impute(std::span<const std::optional<double>> values, double fill);

}  // namespace lpsn
