#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lpsn/error.hpp"
#include "lpsn/metrics.hpp"

using namespace lpsn;

namespace {

std::vector<EvalRecord> make(const std::vector<double>& times, const std::vector<int>& events,
                             const std::vector<double>& preds) {
  std::vector<EvalRecord> r;
  for (std::size_t i = 0; i < times.size(); ++i) r.push_back({preds[i], times[i], events[i]});
  return r;
}

// O(n^2) pair enumeration, kept as counts so the ratio is compared exactly.
struct PairCounts {
  std::uint64_t comparable = 0;
  std::uint64_t twice_concordant = 0;
};

PairCounts brute_force(const std::vector<EvalRecord>& r) {
  PairCounts c;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i].event != 1) continue;
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!(r[i].observed < r[j].observed)) continue;
      ++c.comparable;
      if (r[i].predicted < r[j].predicted) c.twice_concordant += 2;
      else if (r[i].predicted == r[j].predicted) c.twice_concordant += 1;
    }
  }
  return c;
}

}  // namespace

TEST_CASE("c-index: perfect and reversed orderings") {
  CHECK(concordance_index(make({2, 4, 6}, {1, 1, 1}, {0.1, 0.2, 0.3})) == 1.0);
  CHECK(concordance_index(make({2, 4, 6}, {1, 1, 1}, {0.3, 0.2, 0.1})) == 0.0);
}

TEST_CASE("c-index: censored middle record with a prediction tie") {
  // comparable: (0,1) tie -> 0.5, (0,2) concordant; record 1 is censored so (1,2) is not comparable
  auto r = make({2, 4, 6}, {1, 0, 1}, {0.2, 0.2, 0.3});
  auto c = brute_force(r);
  CHECK(c.comparable == 2);
  CHECK(concordance_index(r) == static_cast<double>(c.twice_concordant) / (2.0 * static_cast<double>(c.comparable)));
  CHECK(concordance_index(r) == 0.75);
}

TEST_CASE("c-index: identity, negation and constant predictors") {
  std::vector<double> t = {1.5, 0.3, 2.2, 0.9, 4.1, 3.3};
  std::vector<int> e(t.size(), 1);
  std::vector<double> neg, flat(t.size(), 0.4);
  for (double v : t) neg.push_back(-v);
  CHECK(concordance_index(make(t, e, t)) == 1.0);
  CHECK(concordance_index(make(t, e, neg)) == 0.0);
  CHECK(concordance_index(make(t, e, flat)) == 0.5);
}

TEST_CASE("c-index: invariant under strictly increasing transforms") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<EvalRecord> r(40);
  for (auto& x : r) x = {u(rng), u(rng), u(rng) < 0.7 ? 1 : 0};
  auto mapped = r;
  for (auto& x : mapped) x.predicted = std::exp(3.0 * x.predicted) - 7.0;
  CHECK(concordance_index(mapped) == concordance_index(r));
}

TEST_CASE("c-index: matches brute force on 1000 random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(2, 50), coarse(0, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int k = 0; k < 1000; ++k) {
    const int n = size(rng);
    const bool ties = k % 2 == 0;
    const double censor_rate = (k % 4) < 2 ? 0.0 : 0.3;
    std::vector<EvalRecord> r(static_cast<std::size_t>(n));
    for (auto& x : r) {
      x.predicted = ties ? coarse(rng) / 6.0 : u(rng);
      x.observed = ties ? coarse(rng) : u(rng);
      x.event = u(rng) < censor_rate ? 0 : 1;
    }
    auto c = brute_force(r);
    if (c.comparable == 0) {
      CHECK_THROWS_AS(concordance_index(r), UndefinedMetricError);
      continue;
    }
    const double expected = static_cast<double>(c.twice_concordant) / (2.0 * static_cast<double>(c.comparable));
    CHECK(concordance_index(r) == expected);
    ++checked;
  }
  CHECK(checked > 950);
}

TEST_CASE("c-index: no comparable pairs and non-finite input") {
  CHECK_THROWS_AS(concordance_index(make({2, 4}, {0, 0}, {0.1, 0.2})), UndefinedMetricError);
  CHECK_THROWS_AS(concordance_index(make({3, 3}, {1, 1}, {0.1, 0.2})), UndefinedMetricError);
  CHECK_THROWS_AS(concordance_index(std::vector<EvalRecord>{}), UndefinedMetricError);
  CHECK_THROWS_AS(concordance_index(make({1, 2}, {1, 1}, {NAN, 0.2})), InputError);
}

TEST_CASE("mae: perfect, single offset, censored records ignored") {
  CHECK(mean_absolute_error(make({0.2, 0.5}, {1, 1}, {0.2, 0.5})) == 0.0);
  CHECK(mean_absolute_error(make({0.5}, {1}, {0.543})) == doctest::Approx(0.043).epsilon(1e-12));
  auto r = make({0.5, 0.1, 0.7}, {1, 1, 1}, {0.4, 0.3, 0.7});
  const double base = mean_absolute_error(r);
  CHECK(base == doctest::Approx(0.1));
  r.push_back({5.0, 0.2, 0});
  r.push_back({-3.0, 0.9, 0});
  CHECK(mean_absolute_error(r) == base);
  CHECK_THROWS_AS(mean_absolute_error(make({0.5}, {0}, {0.1})), UndefinedMetricError);
}
