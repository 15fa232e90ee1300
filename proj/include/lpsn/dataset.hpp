#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lpsn/clinical.hpp"
#include "lpsn/ops.hpp"
#include "lpsn/preprocess.hpp"
#include "lpsn/volume.hpp"

namespace lpsn {

enum class Split { Train, Val, Test };
std::string to_string(Split split);
Split parse_split(const std::string& text);

/// Patient-level split: patients are shuffled once per seed, cut into
/// round(1 / test) folds, fold `fold` is the test set, and the remaining
/// patients are divided between train and val in proportion train : val.
struct SplitSpec {
  double train = 0.6, val = 0.2, test = 0.2;
  std::size_t fold = 0;
  std::uint64_t seed = 1;

  std::size_t folds() const;
  void validate() const;

  bool operator==(const SplitSpec&) const = default;
};

std::vector<Split> assign_splits(std::size_t patients, const SplitSpec& spec);

struct SurvivalDataset {
  std::vector<std::string> categorical_fields;
  std::vector<std::string> continuous_fields;
  std::vector<ClinicalRecord> patients;
  std::vector<Volume> volumes;                // normalized base volume per patient
  std::vector<std::optional<double>> oracle;  // noise-free generator time, when known

  ClinicalVocabulary vocabulary;  // continuous statistics fitted on training patients
  MinMaxScaler time_scale;        // survival days -> [0,1], fitted on training patients
  SplitSpec split_spec;
  std::vector<Split> splits;

  std::size_t size() const { return patients.size(); }
  std::vector<std::size_t> patients_in(Split split) const;
  double normalized_time(std::size_t patient) const { return time_scale.apply(patients[patient].survival_days); }
  EncodedRecord encode(std::size_t patient) const {
    return encode_record(patients[patient], categorical_fields, vocabulary);
  }
  Int3 volume_dims() const;  // dims shared by all volumes
};

struct Sample {
  std::size_t patient = 0;
  std::size_t augmentation = 0;
};

/// Every (patient, augmentation) of a split, patient-major.
std::vector<Sample> split_samples(const SurvivalDataset& dataset, Split split, bool uncensored_only);

/// Registers every categorical value of every patient, field by field in
/// schema order, values sorted within a field.
ClinicalVocabulary build_vocabulary(const std::vector<std::string>& fields, const std::vector<ClinicalRecord>& patients);

/// Recomputes the split assignment and all training-split statistics.
void apply_split(SurvivalDataset& dataset, const SplitSpec& spec);

/// Dataset from clinical rows and one raw volume per row: each volume is
/// normalized to `dims`, the vocabulary covers every patient, and the split
/// statistics come from the training patients of `spec`.
SurvivalDataset assemble_dataset(std::vector<std::string> categorical_fields, std::vector<std::string> continuous_fields,
                                 std::vector<ClinicalRecord> patients, const std::vector<Volume>& raw_volumes,
                                 Int3 dims, const SplitSpec& spec);

/// Bundle directory: manifest.txt plus volumes/<patient>.psnv.
void save_dataset(const SurvivalDataset& dataset, const std::string& directory);
SurvivalDataset load_dataset(const std::string& directory);

/// Reads patient_id, <categorical...>, age, survival_days, event (header
/// row required; empty age means missing). Fills the field lists.
std::vector<ClinicalRecord> read_clinical_csv(const std::string& path, std::vector<std::string>& categorical_fields,
                                              std::vector<std::string>& continuous_fields);

/// Shortest round-trip decimal form.
std::string format_double(double value);
double parse_double(const std::string& text);

}  // namespace lpsn
