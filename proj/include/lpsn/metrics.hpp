#pragma once

#include <span>

namespace lpsn {

struct EvalRecord {
  double predicted = 0.0;  // predicted survival time
  double observed = 0.0;   // observed (event or censoring) time
  int event = 1;
};

/// Harrell's C. A pair with observed_i < observed_j is comparable when
/// event_i = 1; it is concordant when predicted_i < predicted_j and counts
/// one half when the predictions tie. Throws UndefinedMetricError without
/// comparable pairs.
double concordance_index(std::span<const EvalRecord> records);

/// Mean absolute error over uncensored records. Throws UndefinedMetricError
/// when every record is censored.
double mean_absolute_error(std::span<const EvalRecord> records);

}  // namespace lpsn
