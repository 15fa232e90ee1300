#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lpsn/dataset.hpp"
#include "lpsn/metrics.hpp"
#include "lpsn/model.hpp"
#include "lpsn/optimizer.hpp"

namespace lpsn {

enum class Towers { Both, ClinicalOnly, VisualOnly };
std::string to_string(Towers towers);
Towers parse_towers(const std::string& text);

/// How training samples are drawn each epoch: every augmentation of every
/// training patient, or one augmentation per patient picked at random.
enum class EpochSampling { AllAugmentations, OneAugmentation };
std::string to_string(EpochSampling sampling);
EpochSampling parse_epoch_sampling(const std::string& text);

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 120;
  std::size_t batch_size = 64;
  double lr = 0.001;
  double lr_decay_factor = 0.5;
  std::size_t lr_decay_every = 40;
  double lambda = 0.001;
  double omega = 0.4;
  std::size_t heads = 3;
  std::size_t layers = 5;    // transformer depth
  std::size_t se_ratio = 2;  // channel and temporal SE reduction
  SeMode se_mode = SeMode::Joint;
  SeOrder se_order = SeOrder::ChannelFirst;
  FrameDiff frame_diff = FrameDiff::On;
  double train_ratio = 0.6, val_ratio = 0.2, test_ratio = 0.2;
  std::size_t fold = 0;
  TextualEncoder textual = TextualEncoder::LiteTransformer;
  Towers towers = Towers::Both;
  std::string visual_preset = "compact";
  std::size_t embed_dim = 48;
  std::size_t head_hidden = 64;
  EpochSampling sampling = EpochSampling::AllAugmentations;

  /// Settings for the 422-patient synthetic cohort on one CPU core: 15 epochs
  /// of one random augmentation per patient, batch 16, lambda 1e-5.
  static TrainConfig desk();

  void validate() const;
  SplitSpec split_spec() const;
  ModelConfig model_config(const SurvivalDataset& dataset) const;

  /// Every field as key=value text in a fixed order; `set` parses one pair.
  std::vector<std::pair<std::string, std::string>> to_key_values() const;
  void set(const std::string& key, const std::string& value);
  static TrainConfig from_key_values(const std::vector<std::pair<std::string, std::string>>& pairs);

  /// 16 hex digits of FNV-1a over the key=value form.
  std::string hash() const;

  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_c_index = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

/// Everything needed to continue a run exactly where it stopped.
struct Checkpoint {
  TrainConfig config;
  std::vector<std::string> categorical_fields, continuous_fields;
  ClinicalVocabulary vocabulary;
  MinMaxScaler time_scale;
  std::vector<std::string> param_names;
  std::vector<Shape> param_shapes;
  std::vector<std::vector<float>> param_values;
  AdamState optimizer;
  std::size_t epoch = 0;  // completed epochs
  std::string rng_state;
  std::vector<EpochRecord> history;
  std::optional<std::size_t> best_epoch;
  double best_val_c_index = 0.0, best_val_mse = 0.0;
  std::vector<std::vector<float>> best_values;  // empty until an epoch has run
  std::uint64_t censored_gradient_samples = 0;

  bool operator==(const Checkpoint&) const = default;
};

// PSNC file: "PSNC", u16 version (1), then length-prefixed sections, all
// little-endian; floats are stored as their raw bits.
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

struct SplitMetrics {
  double c_index = 0.0;
  double mae = 0.0;
  std::size_t samples = 0;
};

class Trainer {
 public:
  /// The dataset must already carry the split of `config` (see apply_split).
  Trainer(const TrainConfig& config, const SurvivalDataset& dataset);
  Trainer(const Checkpoint& checkpoint, const SurvivalDataset& dataset);

  /// Runs up to `count` further epochs, never past config.epochs.
  void run_epochs(std::size_t count);
  void run() { run_epochs(config_.epochs); }

  /// Current parameters, optimizer state and the best-validation snapshot.
  Checkpoint checkpoint() const;

  std::size_t epoch() const { return epoch_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  std::uint64_t censored_gradient_samples() const { return censored_gradient_samples_; }
  LiteProSENet<float>& model() { return model_; }
  const TrainConfig& config() const { return config_; }

 private:
  double train_epoch(double lr);
  void validate_epoch(EpochRecord& record);

  TrainConfig config_;
  const SurvivalDataset& dataset_;
  LiteProSENet<float> model_;
  Adam optimizer_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
  std::vector<EpochRecord> history_;
  std::optional<std::size_t> best_epoch_;
  double best_c_ = 0.0, best_mse_ = 0.0;
  std::vector<std::vector<float>> best_values_;
  std::uint64_t censored_gradient_samples_ = 0;
};

/// Restores a model from checkpoint parameters; `best` selects the
/// best-validation parameters when they exist.
LiteProSENet<float> restore_model(const Checkpoint& checkpoint, const SurvivalDataset& dataset, bool best);

/// Per-sample predictions of `split` with the ensemble of the model's config.
/// Test samples include every augmentation and censored patients; train and
/// val samples are the uncensored patients' identity augmentation.
std::vector<EvalRecord> predict_split(const LiteProSENet<float>& model, const SurvivalDataset& dataset,
                                      const ClinicalVocabulary& vocabulary, const MinMaxScaler& time_scale,
                                      Split split);

SplitMetrics evaluate(const Checkpoint& checkpoint, const SurvivalDataset& dataset, Split split, bool best = true);

/// Throws ConfigError when the dataset's fields or vocabulary differ from the checkpoint's.
void check_schema(const Checkpoint& checkpoint, const SurvivalDataset& dataset);

// --- ablation ------------------------------------------------------------------

struct AblationVariant {
  std::string name;
  TrainConfig config;
};

/// Named grids: towers, textual, se, gate, order, frame-diff, omega, lambda.
std::vector<AblationVariant> ablation_grid(const std::string& grid, const TrainConfig& base);
std::vector<std::string> ablation_grid_names();

struct ResultRow {
  std::string config_hash;
  std::size_t fold = 0;
  std::size_t epoch = 0;
  std::string split;
  double c_index = 0.0;
  double mae = 0.0;
  double wall_seconds = 0.0;
};

struct AblationResult {
  std::string variant;
  TrainConfig config;
  SplitMetrics val, test;
  ResultRow row;  // test-split row
};

/// Trains every variant from scratch on `dataset` (re-splitting a private
/// copy only if the variant's split differs) and evaluates its best-val model.
std::vector<AblationResult> ablate(const std::vector<AblationVariant>& variants, const SurvivalDataset& dataset);

/// Appends rows to a CSV, writing the header when the file is new or empty.
void append_results(const std::string& path, const std::vector<ResultRow>& rows);
std::string results_header();
std::string format_result_row(const ResultRow& row);

}  // namespace lpsn
