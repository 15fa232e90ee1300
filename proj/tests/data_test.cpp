#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "lpsn/dataset.hpp"
#include "lpsn/error.hpp"
#include "lpsn/metrics.hpp"
#include "lpsn/preprocess.hpp"
#include "lpsn/synthetic.hpp"
#include "lpsn/volume.hpp"

using namespace lpsn;
namespace fs = std::filesystem;

namespace {

Volume random_volume(std::uint64_t seed, std::size_t d, std::size_t h, std::size_t w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Volume v(d, h, w);
  for (float& x : v.data) x = u(rng);
  return v;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string directory_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + file_bytes(f);
  return all;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("lpsn_data_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SyntheticOptions small_cohort(std::uint64_t seed = 3, std::size_t n = 20) {
  SyntheticOptions o;
  o.seed = seed;
  o.patients = n;
  o.dims = {4, 16, 16};
  return o;
}

}  // namespace

TEST_CASE("min-max scaling: worked values, pass-through, degenerate") {
  std::vector<double> x = {0, 5, 10};
  auto y = minmax_scale(x);
  CHECK(y == std::vector<double>{0, 0.5, 1});
  CHECK(MinMaxScaler::fit(x).apply(12) == doctest::Approx(1.2));
  std::vector<double> flat = {3, 3, 3};
  CHECK_THROWS_AS(minmax_scale(flat), DegenerateFeatureError);
}

TEST_CASE("z-score: population convention, shift invariance, moments") {
  std::vector<double> x = {1, 2, 3};
  auto z = zscore(x);
  CHECK(z[0] == doctest::Approx(-1.22474).epsilon(1e-4));
  CHECK(z[1] == doctest::Approx(0.0));
  CHECK(z[2] == doctest::Approx(1.22474).epsilon(1e-4));

  std::vector<double> series = {0.3, 7.1, -2.5, 4.4, 4.4, 9.0};
  std::vector<double> shifted = series;
  for (double& v : shifted) v += 123.0;
  auto a = zscore(series), b = zscore(shifted);
  double mean = 0, var = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
    mean += a[i];
  }
  mean /= static_cast<double>(a.size());
  for (double v : a) var += (v - mean) * (v - mean);
  var /= static_cast<double>(a.size());
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var == doctest::Approx(1.0));
  std::vector<double> flat = {2, 2};
  CHECK_THROWS_AS(zscore(flat), DegenerateFeatureError);
}

TEST_CASE("age imputation uses the mean of observed values") {
  std::vector<std::optional<double>> ages = {40.0, std::nullopt, 60.0};
  const double fill = observed_mean(ages);
  CHECK(fill == 50.0);
  CHECK(impute(ages, fill) == std::vector<double>{40, 50, 60});
  std::vector<std::optional<double>> full = {1.0, 2.0};
  CHECK(impute(full, observed_mean(full)) == std::vector<double>{1, 2});
  std::vector<std::optional<double>> skewed = {10.0, std::nullopt, std::nullopt, 20.0};
  CHECK(observed_mean(skewed) == 15.0);
  std::vector<std::optional<double>> none = {std::nullopt, std::nullopt};
  CHECK_THROWS_AS(observed_mean(none), PipelineError);
}

TEST_CASE("volume normalization: identity case, range contract, constant volume") {
  Volume v = random_volume(1, 8, 96, 96);
  auto [lo, hi] = std::minmax_element(v.data.begin(), v.data.end());
  *lo = 0.0f;
  *hi = 1.0f;
  CHECK(normalize_volume(v) == v);

  Volume ct = random_volume(2, 5, 40, 30);
  for (float& x : ct.data) x = -1000.0f + 4000.0f * x;
  Volume n = normalize_volume(ct);
  CHECK(n.depth == 8);
  CHECK(n.height == 96);
  CHECK(n.width == 96);
  auto [nlo, nhi] = std::minmax_element(n.data.begin(), n.data.end());
  CHECK(*nlo == 0.0f);
  CHECK(*nhi == 1.0f);

  for (float x : normalize_volume(Volume(3, 7, 7, 42.0f)).data) CHECK(x == 0.5f);
}

TEST_CASE("trilinear resize reproduces a linear ramp exactly") {
  Volume ramp(3, 5, 4);
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 4; ++x) ramp.at(z, y, x) = 2.0f * z + 0.5f * y - 1.0f * x;
  Volume out = resize_trilinear(ramp, 5, 9, 7);
  for (std::size_t z = 0; z < 5; ++z)
    for (std::size_t y = 0; y < 9; ++y)
      for (std::size_t x = 0; x < 7; ++x) {
        const double sz = z * 2.0 / 4.0, sy = y * 4.0 / 8.0, sx = x * 3.0 / 6.0;
        CHECK(out.at(z, y, x) == doctest::Approx(2.0 * sz + 0.5 * sy - sx).epsilon(1e-5));
      }
}

TEST_CASE("augmentation: eight distinct variants, group identities, bijections") {
  Volume v = random_volume(3, 4, 6, 6);
  auto all = augment_all(v);
  REQUIRE(all.size() == 8);
  CHECK(all[0] == v);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = i + 1; j < 8; ++j) CHECK_FALSE(all[i] == all[j]);

  CHECK(augment(augment(v, 2), 2) == v);
  CHECK(augment(augment(v, 1), 3) == v);
  for (std::size_t id : {4, 5, 6, 7}) CHECK(augment(augment(v, id), id) == v);

  // each operator permutes voxels: the multiset of values is unchanged
  auto sorted = v.data;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& a : all) {
    auto s = a.data;
    std::sort(s.begin(), s.end());
    CHECK(s == sorted);
  }
  // counter-clockwise quarter turn: (y, x) -> (w - 1 - x, y)
  Volume tag(1, 2, 2);
  tag.data = {1, 2, 3, 4};
  CHECK(augment(tag, 1).data == std::vector<float>{2, 4, 1, 3});
  CHECK_THROWS(augment(v, 8));
}

TEST_CASE("PSNV: byte round-trip and format errors") {
  Volume v = random_volume(4, 2, 3, 5);
  std::stringstream a;
  write_psnv(a, v);
  const std::string bytes = a.str();
  CHECK(bytes.size() == 4 + 2 + 12 + 30 * 4);
  CHECK(bytes.substr(0, 4) == "PSNV");
  std::stringstream in(bytes);
  Volume back = read_psnv(in);
  CHECK(back == v);
  std::stringstream again;
  write_psnv(again, back);
  CHECK(again.str() == bytes);

  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream bad_in(bad);
  try {
    read_psnv(bad_in);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("PSNV") != std::string::npos);
    CHECK(e.offset() == 0);
  }
  std::stringstream short_in(bytes.substr(0, bytes.size() - 3));
  try {
    read_psnv(short_in);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() >= 18);
  }
}

TEST_CASE("split: 6/2/2 on ten patients, determinism, fold coverage") {
  SplitSpec spec;
  auto s = assign_splits(10, spec);
  CHECK(std::count(s.begin(), s.end(), Split::Train) == 6);
  CHECK(std::count(s.begin(), s.end(), Split::Val) == 2);
  CHECK(std::count(s.begin(), s.end(), Split::Test) == 2);
  CHECK(assign_splits(10, spec) == s);

  std::vector<int> tested(37, 0);
  for (std::size_t fold = 0; fold < 5; ++fold) {
    SplitSpec f = spec;
    f.fold = fold;
    auto a = assign_splits(37, f);
    for (std::size_t p = 0; p < 37; ++p) tested[p] += a[p] == Split::Test;
  }
  for (int t : tested) CHECK(t == 1);

  SplitSpec bad = spec;
  bad.fold = 5;
  CHECK_THROWS_AS(assign_splits(10, bad), ConfigError);
  bad = spec;
  bad.train = 0.7;
  CHECK_THROWS_AS(assign_splits(10, bad), ConfigError);
  CHECK_THROWS_AS(assign_splits(4, spec), ConfigError);
}

TEST_CASE("synthetic cohort: determinism and patient-level splits") {
  auto a = generate_synthetic(small_cohort());
  auto b = generate_synthetic(small_cohort());
  CHECK(a.volumes == b.volumes);
  CHECK(a.splits == b.splits);
  CHECK(a.vocabulary == b.vocabulary);
  for (std::size_t p = 0; p < a.size(); ++p) {
    CHECK(a.patients[p].survival_days == b.patients[p].survival_days);
    CHECK(a.patients[p].categorical == b.patients[p].categorical);
  }
  CHECK_FALSE(generate_synthetic(small_cohort(4)).volumes == a.volumes);

  std::set<std::string> seen;
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    for (const auto& sample : split_samples(a, s, false)) {
      if (sample.augmentation == 0) CHECK(seen.insert(a.patients[sample.patient].id).second);
      CHECK(a.splits[sample.patient] == s);
    }
  }
  CHECK(seen.size() == a.size());
  for (const auto& sample : split_samples(a, Split::Train, true)) CHECK(a.patients[sample.patient].event == 1);
}

TEST_CASE("synthetic cohort at full size: censoring rate and oracle concordance") {
  SyntheticOptions o;
  o.seed = 1;
  o.patients = 422;
  auto ds = generate_synthetic(o);
  CHECK(ds.volume_dims() == Int3{8, 96, 96});
  std::size_t censored = 0;
  std::vector<EvalRecord> records;
  for (std::size_t p = 0; p < ds.size(); ++p) {
    censored += ds.patients[p].event == 0;
    records.push_back({*ds.oracle[p], ds.patients[p].survival_days, ds.patients[p].event});
  }
  const double fraction = static_cast<double>(censored) / 422.0;
  CHECK(std::abs(fraction - 0.12) <= 0.03);
  CHECK(concordance_index(records) >= 0.95);
  for (const auto& v : ds.volumes) {
    auto [lo, hi] = std::minmax_element(v.data.begin(), v.data.end());
    CHECK(*lo >= 0.0f);
    CHECK(*hi <= 1.0f);
  }
}

TEST_CASE("training-split statistics ignore val and test patients") {
  auto ds = generate_synthetic(small_cohort());
  const auto stats = ds.vocabulary.continuous;
  const auto scale = ds.time_scale;
  for (std::size_t p : ds.patients_in(Split::Val)) ds.patients[p].continuous[0] = 1e6;
  for (std::size_t p : ds.patients_in(Split::Test)) ds.patients[p].survival_days = 1e7;
  apply_split(ds, ds.split_spec);
  CHECK(ds.vocabulary.continuous == stats);
  CHECK(ds.time_scale == scale);
}

TEST_CASE("dataset bundle: save, load, save is byte-identical") {
  TempDir dir("bundle");
  auto ds = generate_synthetic(small_cohort());
  save_dataset(ds, (dir.path / "a").string());
  auto back = load_dataset((dir.path / "a").string());
  save_dataset(back, (dir.path / "b").string());
  CHECK(directory_bytes(dir.path / "a") == directory_bytes(dir.path / "b"));
  CHECK(back.volumes == ds.volumes);
  CHECK(back.vocabulary == ds.vocabulary);
  CHECK(back.splits == ds.splits);
  CHECK(back.split_spec == ds.split_spec);
  CHECK(back.time_scale == ds.time_scale);
  for (std::size_t p = 0; p < ds.size(); ++p) {
    CHECK(back.patients[p].survival_days == ds.patients[p].survival_days);
    CHECK(back.patients[p].continuous == ds.patients[p].continuous);
    CHECK(back.oracle[p] == ds.oracle[p]);
  }
}

TEST_CASE("dataset bundle: corrupted manifest and truncated volume") {
  TempDir dir("corrupt");
  auto ds = generate_synthetic(small_cohort());
  const auto root = dir.path / "ds";
  save_dataset(ds, root.string());
  const std::string manifest = file_bytes(root / "manifest.txt");

  {
    std::ofstream out(root / "manifest.txt", std::ios::binary);
    out << "format: something-else" << manifest.substr(manifest.find('\n'));
  }
  try {
    load_dataset(root.string());
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("lpsn-survival-dataset") != std::string::npos);
  }
  {
    std::ofstream out(root / "manifest.txt", std::ios::binary);
    out << manifest;
  }
  const auto volume = root / "volumes" / (ds.patients[0].id + ".psnv");
  const std::string bytes = file_bytes(volume);
  {
    std::ofstream out(volume, std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  try {
    load_dataset(root.string());
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() > 18);
  }
}

TEST_CASE("clinical CSV: header, missing age, malformed rows") {
  TempDir dir("csv");
  const auto path = (dir.path / "clinical.csv").string();
  {
    std::ofstream out(path);
    out << "patient_id,stage,histology,age,survival_days,event\n"
        << "p1,II,adeno,61,400,1\n"
        << "p2,III,squamous,,250.5,0\n";
  }
  std::vector<std::string> cat, cont;
  auto rows = read_clinical_csv(path, cat, cont);
  CHECK(cat == std::vector<std::string>{"stage", "histology"});
  CHECK(cont == std::vector<std::string>{"age"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].continuous[0] == 61.0);
  CHECK_FALSE(rows[1].continuous[0].has_value());
  CHECK(rows[1].survival_days == 250.5);
  CHECK(rows[1].event == 0);

  {
    std::ofstream out(path);
    out << "patient_id,stage,age,survival_days,event\np1,II,61,400,2\n";
  }
  try {
    read_clinical_csv(path, cat, cont);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 2);
  }
}

TEST_CASE("assembling a dataset from clinical rows and raw volumes") {
  std::vector<ClinicalRecord> rows;
  std::vector<Volume> raw;
  for (int i = 0; i < 10; ++i) {
    rows.push_back({"p" + std::to_string(i), {i % 2 ? "II" : "III"}, {i == 3 ? std::nullopt : std::optional<double>(50 + i)},
                    100.0 + 10 * i, i == 4 ? 0 : 1});
    raw.push_back(random_volume(static_cast<std::uint64_t>(i), 3, 10, 12));
  }
  auto ds = assemble_dataset({"stage"}, {"age"}, rows, raw, {4, 16, 16}, SplitSpec{});
  CHECK(ds.volume_dims() == Int3{4, 16, 16});
  CHECK(ds.vocabulary.size() == 2);
  CHECK(ds.volumes[0] == normalize_volume(raw[0], 4, 16, 16));
  CHECK(ds.patients_in(Split::Train).size() == 6);
  raw.pop_back();
  CHECK_THROWS_AS(assemble_dataset({"stage"}, {"age"}, rows, raw, {4, 16, 16}, SplitSpec{}), InputError);
}
