#include "lpsn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "lpsn/error.hpp"

namespace fs = std::filesystem;

namespace lpsn {

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown split '" + text + "' (train, val, test)");
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double value = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw InputError("not a number: '" + text + "'");
  }
  return value;
}

std::size_t SplitSpec::folds() const { return static_cast<std::size_t>(std::lround(1.0 / test)); }

void SplitSpec::validate() const {
  if (!(train > 0 && val > 0 && test > 0)) throw ConfigError("split ratios must all be positive");
  if (std::abs(train + val + test - 1.0) > 1e-6) throw ConfigError("split ratios must sum to 1");
  if (folds() < 2) throw ConfigError("test ratio " + format_double(test) + " leaves fewer than two folds");
  if (fold >= folds()) {
    throw ConfigError("fold " + std::to_string(fold) + " outside [0," + std::to_string(folds()) + ")");
  }
}

std::vector<Split> assign_splits(std::size_t patients, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::size_t> order(patients);
  for (std::size_t i = 0; i < patients; ++i) order[i] = i;
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = patients; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const std::size_t folds = spec.folds();
  const std::size_t test_begin = spec.fold * patients / folds;
  const std::size_t test_end = (spec.fold + 1) * patients / folds;
  const std::size_t rest = patients - (test_end - test_begin);
  const auto n_val = static_cast<std::size_t>(std::lround(static_cast<double>(rest) * spec.val / (spec.train + spec.val)));
  const std::size_t n_train = rest - n_val;
  if (test_end == test_begin || n_val == 0 || n_train == 0) {
    throw ConfigError(std::to_string(patients) + " patients are too few for a train/val/test split");
  }
  std::vector<Split> out(patients, Split::Train);
  std::size_t seen_rest = 0;
  for (std::size_t pos = 0; pos < patients; ++pos) {
    const std::size_t p = order[pos];
    if (pos >= test_begin && pos < test_end) {
      out[p] = Split::Test;
    } else {
      out[p] = seen_rest < n_train ? Split::Train : Split::Val;
      ++seen_rest;
    }
  }
  return out;
}

std::vector<std::size_t> SurvivalDataset::patients_in(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

Int3 SurvivalDataset::volume_dims() const {
  if (volumes.empty()) return {0, 0, 0};
  return {volumes.front().depth, volumes.front().height, volumes.front().width};
}

std::vector<Sample> split_samples(const SurvivalDataset& dataset, Split split, bool uncensored_only) {
  std::vector<Sample> out;
  for (std::size_t p : dataset.patients_in(split)) {
    if (uncensored_only && dataset.patients[p].event != 1) continue;
    for (std::size_t a = 0; a < kAugmentationCount; ++a) out.push_back({p, a});
  }
  return out;
}

ClinicalVocabulary build_vocabulary(const std::vector<std::string>& fields, const std::vector<ClinicalRecord>& patients) {
  ClinicalVocabulary vocab;
  for (std::size_t f = 0; f < fields.size(); ++f) {
    std::set<std::string> values;
    for (const auto& p : patients) {
      if (p.categorical.size() != fields.size()) {
        throw InputError("patient " + p.id + " does not have " + std::to_string(fields.size()) + " categorical values");
      }
      values.insert(p.categorical[f]);
    }
    for (const auto& v : values) vocab.add(fields[f], v);
  }
  return vocab;
}

void apply_split(SurvivalDataset& ds, const SplitSpec& spec) {
  ds.splits = assign_splits(ds.size(), spec);
  ds.split_spec = spec;
  const auto train = ds.patients_in(Split::Train);

  std::vector<double> days;
  for (std::size_t p : train) days.push_back(ds.patients[p].survival_days);
  ds.time_scale = MinMaxScaler::fit(days);

  ds.vocabulary.continuous.clear();
  for (std::size_t c = 0; c < ds.continuous_fields.size(); ++c) {
    std::vector<std::optional<double>> values;
    for (std::size_t p : train) values.push_back(ds.patients[p].continuous.at(c));
    const double fill = observed_mean(values);
    std::vector<double> observed;
    for (const auto& v : values) {
      if (v) observed.push_back(*v);
    }
    const ZScoreScaler z = ZScoreScaler::fit(observed);
    const MinMaxScaler mm = MinMaxScaler::fit(observed);
    ds.vocabulary.continuous.push_back({ds.continuous_fields[c], mm.min, mm.max, fill, z.std});
  }
}

SurvivalDataset assemble_dataset(std::vector<std::string> categorical_fields, std::vector<std::string> continuous_fields,
                                 std::vector<ClinicalRecord> patients, const std::vector<Volume>& raw_volumes,
                                 Int3 dims, const SplitSpec& spec) {
  if (raw_volumes.size() != patients.size()) {
    throw InputError(std::to_string(patients.size()) + " clinical rows but " + std::to_string(raw_volumes.size()) +
                     " volumes");
  }
  SurvivalDataset ds;
  ds.categorical_fields = std::move(categorical_fields);
  ds.continuous_fields = std::move(continuous_fields);
  ds.patients = std::move(patients);
  for (std::size_t p = 0; p < raw_volumes.size(); ++p) {
    for (float v : raw_volumes[p].data) {
      if (!std::isfinite(v)) throw InputError("volume of patient " + ds.patients[p].id + " has non-finite values");
    }
    ds.volumes.push_back(normalize_volume(raw_volumes[p], dims[0], dims[1], dims[2]));
  }
  ds.oracle.assign(ds.patients.size(), std::nullopt);
  ds.vocabulary = build_vocabulary(ds.categorical_fields, ds.patients);
  apply_split(ds, spec);
  return ds;
}

// --- bundle I/O ----------------------------------------------------------------

namespace {

constexpr const char* kFormat = "lpsn-survival-dataset";
constexpr int kVersion = 1;

std::string join(const std::vector<std::string>& parts, char sep = ' ') {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

void check_token(const std::string& token, const std::string& what) {
  if (token.empty() || token.find_first_of(" \t\r\n=,") != std::string::npos) {
    throw InputError(what + " '" + token + "' is empty or contains whitespace, '=' or ','");
  }
}

std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

std::string volume_path(const std::string& id) { return "volumes/" + id + ".psnv"; }

}  // namespace

void save_dataset(const SurvivalDataset& ds, const std::string& directory) {
  if (ds.volumes.size() != ds.size() || ds.splits.size() != ds.size() || ds.oracle.size() != ds.size()) {
    throw InputError("dataset arrays are not aligned with its patients");
  }
  for (const auto& f : ds.categorical_fields) check_token(f, "field name");
  for (const auto& f : ds.continuous_fields) check_token(f, "field name");
  fs::create_directories(fs::path(directory) / "volumes");

  std::ostringstream m;
  const Int3 dims = ds.volume_dims();
  m << "format: " << kFormat << "\n";
  m << "version: " << kVersion << "\n";
  std::vector<std::string> augs;
  for (std::size_t a = 0; a < kAugmentationCount; ++a) augs.push_back(augmentation_name(a));
  m << "augmentations: " << join(augs) << "\n";
  m << "volume_dims: " << dims[0] << " " << dims[1] << " " << dims[2] << "\n";
  m << "categorical_fields: " << join(ds.categorical_fields) << "\n";
  m << "continuous_fields: " << join(ds.continuous_fields) << "\n";
  m << "split: seed=" << ds.split_spec.seed << " fold=" << ds.split_spec.fold
    << " train=" << format_double(ds.split_spec.train) << " val=" << format_double(ds.split_spec.val)
    << " test=" << format_double(ds.split_spec.test) << "\n";
  m << "time_scale: min=" << format_double(ds.time_scale.min) << " max=" << format_double(ds.time_scale.max) << "\n";
  for (const auto& c : ds.vocabulary.continuous) {
    m << "continuous: " << c.name << " min=" << format_double(c.min) << " max=" << format_double(c.max)
      << " mean=" << format_double(c.mean) << " std=" << format_double(c.std) << "\n";
  }
  const auto& items = ds.vocabulary.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    check_token(items[i].second, "categorical value");
    m << "vocab: " << i << " " << items[i].first << " " << items[i].second << "\n";
  }
  for (std::size_t p = 0; p < ds.size(); ++p) {
    const auto& r = ds.patients[p];
    check_token(r.id, "patient id");
    m << "patient: " << r.id << " split=" << to_string(ds.splits[p]) << " event=" << r.event
      << " days=" << format_double(r.survival_days) << " oracle=" << optional_text(ds.oracle[p]);
    for (std::size_t f = 0; f < ds.categorical_fields.size(); ++f) {
      check_token(r.categorical[f], "categorical value");
      m << " " << ds.categorical_fields[f] << "=" << r.categorical[f];
    }
    for (std::size_t c = 0; c < ds.continuous_fields.size(); ++c) {
      m << " " << ds.continuous_fields[c] << "=" << optional_text(r.continuous[c]);
    }
    m << "\n";
  }
  for (std::size_t p = 0; p < ds.size(); ++p) {
    for (std::size_t a = 0; a < kAugmentationCount; ++a) {
      m << "sample: " << ds.patients[p].id << " " << volume_path(ds.patients[p].id) << " " << a << "\n";
    }
  }

  for (std::size_t p = 0; p < ds.size(); ++p) {
    const Volume& v = ds.volumes[p];
    if (v.depth != dims[0] || v.height != dims[1] || v.width != dims[2]) {
      throw InputError("patient " + ds.patients[p].id + " has a volume of different dims");
    }
    save_psnv((fs::path(directory) / volume_path(ds.patients[p].id)).string(), v);
  }
  std::ofstream out(fs::path(directory) / "manifest.txt", std::ios::binary);
  if (!out) throw PipelineError("cannot write manifest in " + directory);
  out << m.str();
}

namespace {

struct ManifestLine {
  std::size_t number;
  std::string key;
  std::vector<std::string> tokens;
};

std::map<std::string, std::string> key_values(const ManifestLine& line, std::size_t first) {
  std::map<std::string, std::string> out;
  for (std::size_t i = first; i < line.tokens.size(); ++i) {
    const auto eq = line.tokens[i].find('=');
    if (eq == std::string::npos) throw FormatError("manifest: expected key=value, got '" + line.tokens[i] + "'", line.number);
    out[line.tokens[i].substr(0, eq)] = line.tokens[i].substr(eq + 1);
  }
  return out;
}

const std::string& required(const std::map<std::string, std::string>& kv, const std::string& key, std::size_t line) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("manifest: missing '" + key + "'", line);
  return it->second;
}

double number_at(const std::string& text, std::size_t line) {
  try {
    return parse_double(text);
  } catch (const InputError&) {
    throw FormatError("manifest: not a number '" + text + "'", line);
  }
}

std::size_t count_at(const std::string& text, std::size_t line) {
  std::size_t value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError("manifest: not a non-negative integer '" + text + "'", line);
  }
  return value;
}

std::optional<double> optional_at(const std::string& text, std::size_t line) {
  if (text == "NA") return std::nullopt;
  return number_at(text, line);
}

}  // namespace

SurvivalDataset load_dataset(const std::string& directory) {
  const fs::path manifest = fs::path(directory) / "manifest.txt";
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw PipelineError("cannot open " + manifest.string());

  std::vector<ManifestLine> lines;
  std::string text;
  for (std::size_t number = 1; std::getline(in, text); ++number) {
    if (text.empty()) continue;
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw FormatError("manifest: expected 'key: value'", number);
    lines.push_back({number, text.substr(0, colon), split_ws(text.substr(colon + 1))});
  }
  if (lines.size() < 2 || lines[0].key != "format" || lines[0].tokens != std::vector<std::string>{kFormat}) {
    throw FormatError(std::string("manifest: expected 'format: ") + kFormat + "'", 1);
  }
  if (lines[1].key != "version" || lines[1].tokens != std::vector<std::string>{std::to_string(kVersion)}) {
    throw FormatError("manifest: unsupported version, expected 1", lines[1].number);
  }

  SurvivalDataset ds;
  Int3 dims{0, 0, 0};
  std::map<std::string, std::size_t> patient_index;
  std::vector<std::vector<bool>> seen_aug;
  std::vector<std::size_t> vocab_indices;
  for (const auto& line : lines) {
    const std::size_t n = line.number;
    if (line.key == "format" || line.key == "version") continue;
    if (line.key == "augmentations") {
      std::vector<std::string> expected;
      for (std::size_t a = 0; a < kAugmentationCount; ++a) expected.push_back(augmentation_name(a));
      if (line.tokens != expected) throw FormatError("manifest: unsupported augmentation set", n);
    } else if (line.key == "volume_dims") {
      if (line.tokens.size() != 3) throw FormatError("manifest: volume_dims needs three values", n);
      dims = {count_at(line.tokens[0], n), count_at(line.tokens[1], n), count_at(line.tokens[2], n)};
    } else if (line.key == "categorical_fields") {
      ds.categorical_fields = line.tokens;
    } else if (line.key == "continuous_fields") {
      ds.continuous_fields = line.tokens;
    } else if (line.key == "split") {
      auto kv = key_values(line, 0);
      ds.split_spec.seed = count_at(required(kv, "seed", n), n);
      ds.split_spec.fold = count_at(required(kv, "fold", n), n);
      ds.split_spec.train = number_at(required(kv, "train", n), n);
      ds.split_spec.val = number_at(required(kv, "val", n), n);
      ds.split_spec.test = number_at(required(kv, "test", n), n);
    } else if (line.key == "time_scale") {
      auto kv = key_values(line, 0);
      ds.time_scale = {number_at(required(kv, "min", n), n), number_at(required(kv, "max", n), n)};
    } else if (line.key == "continuous") {
      if (line.tokens.empty()) throw FormatError("manifest: continuous line without a name", n);
      auto kv = key_values(line, 1);
      ds.vocabulary.continuous.push_back({line.tokens[0], number_at(required(kv, "min", n), n),
                                          number_at(required(kv, "max", n), n), number_at(required(kv, "mean", n), n),
                                          number_at(required(kv, "std", n), n)});
    } else if (line.key == "vocab") {
      if (line.tokens.size() != 3) throw FormatError("manifest: vocab line needs index, field, value", n);
      const std::size_t idx = count_at(line.tokens[0], n);
      if (idx != ds.vocabulary.size() || ds.vocabulary.contains(line.tokens[1], line.tokens[2])) {
        throw FormatError("manifest: vocabulary indices must be dense and unique", n);
      }
      ds.vocabulary.add(line.tokens[1], line.tokens[2]);
    } else if (line.key == "patient") {
      if (line.tokens.empty()) throw FormatError("manifest: patient line without an id", n);
      auto kv = key_values(line, 1);
      ClinicalRecord r;
      r.id = line.tokens[0];
      if (patient_index.count(r.id)) throw FormatError("manifest: duplicate patient " + r.id, n);
      try {
        ds.splits.push_back(parse_split(required(kv, "split", n)));
      } catch (const ConfigError& e) {
        throw FormatError(std::string("manifest: ") + e.what(), n);
      }
      r.event = static_cast<int>(count_at(required(kv, "event", n), n));
      if (r.event != 0 && r.event != 1) throw FormatError("manifest: event must be 0 or 1", n);
      r.survival_days = number_at(required(kv, "days", n), n);
      ds.oracle.push_back(optional_at(required(kv, "oracle", n), n));
      for (const auto& f : ds.categorical_fields) r.categorical.push_back(required(kv, f, n));
      for (const auto& f : ds.continuous_fields) r.continuous.push_back(optional_at(required(kv, f, n), n));
      patient_index[r.id] = ds.patients.size();
      ds.patients.push_back(std::move(r));
      seen_aug.emplace_back(kAugmentationCount, false);
    } else if (line.key == "sample") {
      if (line.tokens.size() != 3) throw FormatError("manifest: sample line needs patient, file, augmentation", n);
      auto it = patient_index.find(line.tokens[0]);
      if (it == patient_index.end()) throw FormatError("manifest: sample of unknown patient " + line.tokens[0], n);
      const std::size_t aug = count_at(line.tokens[2], n);
      if (aug >= kAugmentationCount || line.tokens[1] != volume_path(line.tokens[0])) {
        throw FormatError("manifest: bad sample entry for " + line.tokens[0], n);
      }
      seen_aug[it->second][aug] = true;
    } else {
      throw FormatError("manifest: unknown key '" + line.key + "'", n);
    }
  }
  for (std::size_t p = 0; p < ds.size(); ++p) {
    if (std::find(seen_aug[p].begin(), seen_aug[p].end(), false) != seen_aug[p].end()) {
      throw FormatError("manifest: patient " + ds.patients[p].id + " lacks some augmentation samples", lines.back().number);
    }
    Volume v = load_psnv((fs::path(directory) / volume_path(ds.patients[p].id)).string());
    if (v.depth != dims[0] || v.height != dims[1] || v.width != dims[2]) {
      throw FormatError("volume of patient " + ds.patients[p].id + " does not match volume_dims", 0);
    }
    ds.volumes.push_back(std::move(v));
  }
  return ds;
}

std::vector<ClinicalRecord> read_clinical_csv(const std::string& path, std::vector<std::string>& categorical_fields,
                                              std::vector<std::string>& continuous_fields) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot open " + path);
  auto split_csv = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream s(line);
    while (std::getline(s, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw FormatError("clinical CSV: missing header", 1);
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "patient_id" || header[header.size() - 3] != "age" ||
      header[header.size() - 2] != "survival_days" || header.back() != "event") {
    throw FormatError("clinical CSV: header must be patient_id,<categorical...>,age,survival_days,event", 1);
  }
  categorical_fields.assign(header.begin() + 1, header.end() - 3);
  continuous_fields = {"age"};
  std::vector<ClinicalRecord> out;
  for (std::size_t number = 2; std::getline(in, line); ++number) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw FormatError("clinical CSV: wrong number of columns", number);
    ClinicalRecord r;
    r.id = cells[0];
    r.categorical.assign(cells.begin() + 1, cells.end() - 3);
    try {
      const std::string& age = cells[cells.size() - 3];
      r.continuous.push_back(age.empty() ? std::nullopt : std::optional<double>(parse_double(age)));
      r.survival_days = parse_double(cells[cells.size() - 2]);
    } catch (const InputError& e) {
      throw FormatError(std::string("clinical CSV: ") + e.what(), number);
    }
    const std::string& event = cells.back();
    if (event != "0" && event != "1") throw FormatError("clinical CSV: event must be 0 or 1", number);
    r.event = event == "1" ? 1 : 0;
    if (!(r.survival_days > 0)) throw FormatError("clinical CSV: survival_days must be positive", number);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace lpsn
