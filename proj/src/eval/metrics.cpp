#include "lpsn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lpsn/error.hpp"

namespace lpsn {

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Count of inserted positions < i.
  std::uint64_t prefix(std::size_t i) const {
    std::uint64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

}  // namespace

double concordance_index(std::span<const EvalRecord> records) {
  const std::size_t n = records.size();
  for (const auto& r : records) {
    if (!std::isfinite(r.predicted) || !std::isfinite(r.observed)) {
      throw InputError("concordance_index: non-finite prediction or time");
    }
  }
  // Prediction ranks with ties sharing one rank.
  std::vector<double> sorted_pred(n);
  for (std::size_t i = 0; i < n; ++i) sorted_pred[i] = records[i].predicted;
  std::sort(sorted_pred.begin(), sorted_pred.end());
  sorted_pred.erase(std::unique(sorted_pred.begin(), sorted_pred.end()), sorted_pred.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<std::size_t>(std::lower_bound(sorted_pred.begin(), sorted_pred.end(), records[i].predicted) -
                                       sorted_pred.begin());
  }

  // Sweep by decreasing observed time; the tree holds records strictly later
  // than the current time group.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return records[a].observed > records[b].observed; });

  Fenwick later(sorted_pred.size());
  std::uint64_t inserted = 0;
  std::uint64_t comparable = 0, twice_concordant = 0;
  for (std::size_t g = 0; g < n;) {
    std::size_t end = g;
    while (end < n && records[order[end]].observed == records[order[g]].observed) ++end;
    for (std::size_t k = g; k < end; ++k) {
      const std::size_t i = order[k];
      if (records[i].event != 1) continue;
      const std::uint64_t below = later.prefix(rank[i]);
      const std::uint64_t not_above = later.prefix(rank[i] + 1);
      const std::uint64_t above = inserted - not_above;
      const std::uint64_t ties = not_above - below;
      comparable += inserted;
      twice_concordant += 2 * above + ties;
    }
    for (std::size_t k = g; k < end; ++k) later.add(rank[order[k]]);
    inserted += end - g;
    g = end;
  }
  if (comparable == 0) throw UndefinedMetricError("concordance index: no comparable pairs");
  return static_cast<double>(twice_concordant) / (2.0 * static_cast<double>(comparable));
}

double mean_absolute_error(std::span<const EvalRecord> records) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& r : records) {
    if (r.event != 1) continue;
    total += std::abs(r.predicted - r.observed);
    ++count;
  }
  if (count == 0) throw UndefinedMetricError("MAE: no uncensored records");
  return total / static_cast<double>(count);
}

}  // namespace lpsn
