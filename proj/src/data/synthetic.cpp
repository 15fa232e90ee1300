#include "lpsn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "lpsn/error.hpp"

namespace lpsn {

namespace {

struct Factor {
  const char* name;
  std::vector<const char*> levels;
  std::vector<double> risk;  // additive risk per level
};

const std::vector<Factor>& factors() {
  static const std::vector<Factor> table = {
      {"stage", {"I", "II", "III", "IV"}, {0.0, 0.5, 1.0, 1.5}},
      {"t_stage", {"T1", "T2", "T3", "T4"}, {0.0, 0.3, 0.6, 0.9}},
      {"n_stage", {"N0", "N1", "N2", "N3"}, {0.0, 0.3, 0.6, 0.9}},
      {"histology", {"adenocarcinoma", "squamous", "large_cell", "nos"}, {0.0, 0.2, 0.4, 0.1}},
      {"gender", {"female", "male"}, {0.0, 0.2}},
      {"smoking", {"never", "former", "current"}, {0.0, 0.15, 0.3}},
  };
  return table;
}

constexpr double kAgeMean = 65.0, kAgeStd = 9.0, kAgeRisk = 0.03;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Mean and std of the additive risk score under the sampling distribution.
std::pair<double, double> risk_moments() {
  double mean = 0.0, var = kAgeRisk * kAgeRisk * kAgeStd * kAgeStd;
  for (const auto& f : factors()) {
    double m = 0.0, m2 = 0.0;
    for (double r : f.risk) {
      m += r;
      m2 += r * r;
    }
    m /= static_cast<double>(f.risk.size());
    m2 /= static_cast<double>(f.risk.size());
    mean += m;
    var += m2 - m * m;
  }
  return {mean, std::sqrt(var)};
}

constexpr float kAir = -1000.0f, kTissue = -750.0f, kBone = 400.0f;

Volume synthetic_volume(std::mt19937_64& rng, double visual_factor) {
  std::uniform_int_distribution<std::size_t> depth_dist(6, 12), plane_dist(80, 128);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> speckle(0.0, 25.0);
  const std::size_t d = depth_dist(rng), h = plane_dist(rng), w = plane_dist(rng);
  Volume v(d, h, w, kAir);

  const double cy = (0.30 + 0.30 * unit(rng)) * static_cast<double>(h);
  const double cx = (0.30 + 0.40 * unit(rng)) * static_cast<double>(w);
  const double cz = (0.35 + 0.30 * unit(rng)) * static_cast<double>(d - 1);
  // Radii scale with each axis, so the lesion is a sphere after resizing.
  const double extent = 0.135 + 0.01 * unit(rng);
  const double radius_y = extent * static_cast<double>(h), radius_x = extent * static_cast<double>(w);
  const double radius_z = 0.3 * static_cast<double>(d);
  const double lesion = -300.0 + 600.0 * visual_factor;

  const double by = 0.5 * static_cast<double>(h), bx = 0.5 * static_cast<double>(w);
  const double ry = 0.42 * static_cast<double>(h), rx = 0.42 * static_cast<double>(w);
  for (std::size_t z = 0; z < d; ++z) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double py = static_cast<double>(y) + 0.5, px = static_cast<double>(x) + 0.5;
        const double body = std::pow((py - by) / ry, 2) + std::pow((px - bx) / rx, 2);
        if (body > 1.0) continue;
        double value;
        if (py >= 0.80 * h && py < 0.88 * h && px >= 0.35 * w && px < 0.65 * w) {
          value = kBone;
        } else {
          const double dz = (static_cast<double>(z) - cz) / radius_z;
          const double in_lesion = std::pow((py - cy) / radius_y, 2) + std::pow((px - cx) / radius_x, 2) + dz * dz;
          value = (in_lesion <= 1.0 ? lesion : kTissue) + speckle(rng);
        }
        v.at(z, y, x) = static_cast<float>(std::clamp(value, static_cast<double>(kAir), static_cast<double>(kBone)));
      }
    }
  }
  return v;
}

}  // namespace

SurvivalDataset generate_synthetic(const SyntheticOptions& options) {
  if (options.patients < 8) throw ConfigError("synthetic cohort needs at least 8 patients");
  if (!(options.censored_fraction >= 0.0 && options.censored_fraction < 1.0)) {
    throw ConfigError("censored fraction must lie in [0,1)");
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> age_dist(kAgeMean, kAgeStd);
  const auto [risk_mean, risk_std] = risk_moments();

  SurvivalDataset ds;
  for (const auto& f : factors()) ds.categorical_fields.push_back(f.name);
  ds.continuous_fields = {"age"};

  const std::size_t n = options.patients;
  std::vector<double> event_days(n);
  for (std::size_t i = 0; i < n; ++i) {
    ClinicalRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "P%04zu", i + 1);
    r.id = id;
    double risk = 0.0;
    for (const auto& f : factors()) {
      std::uniform_int_distribution<std::size_t> level(0, f.levels.size() - 1);
      const std::size_t l = level(rng);
      r.categorical.push_back(f.levels[l]);
      risk += f.risk[l];
    }
    const double age = std::round(std::clamp(age_dist(rng), 35.0, 90.0));
    risk += kAgeRisk * (age - kAgeMean);
    const bool missing_age = unit(rng) < options.missing_age_fraction;
    r.continuous.push_back(missing_age ? std::nullopt : std::optional<double>(age));

    const double clinical = 1.0 - normal_cdf((risk - risk_mean) / risk_std);
    const double visual = unit(rng);
    const double oracle = 0.5 * clinical + 0.5 * visual;
    std::normal_distribution<double> noise(0.0, options.noise);
    const double t = std::max(oracle + noise(rng), 0.001);
    event_days[i] = 30.0 + 1800.0 * t;
    r.survival_days = event_days[i];
    r.event = 1;
    ds.patients.push_back(std::move(r));
    ds.oracle.push_back(oracle);
    ds.volumes.push_back(normalize_volume(synthetic_volume(rng, visual), options.dims[0], options.dims[1],
                                          options.dims[2]));
  }

  const auto censored = static_cast<std::size_t>(std::lround(options.censored_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  for (std::size_t k = 0; k < censored; ++k) {
    ClinicalRecord& r = ds.patients[order[k]];
    r.event = 0;
    r.survival_days = std::max(1.0, unit(rng) * event_days[order[k]]);
  }

  ds.vocabulary = build_vocabulary(ds.categorical_fields, ds.patients);
  SplitSpec split = options.split;
  if (options.split_seed_from_generator) split.seed = options.seed;
  apply_split(ds, split);
  return ds;
}

}  // namespace lpsn
