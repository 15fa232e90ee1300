#include "lpsn/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "lpsn/error.hpp"

namespace lpsn {

MinMaxScaler MinMaxScaler::fit(std::span<const double> series) {
  if (series.empty()) throw DegenerateFeatureError("min-max scaling of an empty series");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (*hi == *lo) throw DegenerateFeatureError("min-max scaling of a constant series");
  return {*lo, *hi};
}

ZScoreScaler ZScoreScaler::fit(std::span<const double> series) {
  if (series.empty()) throw DegenerateFeatureError("standard score of an empty series");
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(series.size());
  double var = 0.0;
  for (double x : series) var += (x - mean) * (x - mean);
  var /= static_cast<double>(series.size());
  if (!(var > 0.0)) throw DegenerateFeatureError("standard score of a series with zero deviation");
  return {mean, std::sqrt(var)};
}

std::vector<double> minmax_scale(std::span<const double> series) {
  const MinMaxScaler s = MinMaxScaler::fit(series);
  std::vector<double> out;
  out.reserve(series.size());
  for (double x : series) out.push_back(s.apply(x));
  return out;
}

std::vector<double> zscore(std::span<const double> series) {
  const ZScoreScaler s = ZScoreScaler::fit(series);
  std::vector<double> out;
  out.reserve(series.size());
  for (double x : series) out.push_back(s.apply(x));
  return out;
}

double observed_mean(std::span<const std::optional<double>> values) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& v : values) {
    if (!v) continue;
    total += *v;
    ++count;
  }
  if (count == 0) throw PipelineError("cannot impute: every value is missing");
  return total / static_cast<double>(count);
}

std::vector<double> impute(std::span<const std::optional<double>> values, double fill) {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(v.value_or(fill));
  return out;
}

}  // namespace lpsn
