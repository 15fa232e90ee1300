#include "lpsn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lpsn/error.hpp"
#include "lpsn/ops.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace lpsn {

std::string to_string(Towers towers) {
  switch (towers) {
    case Towers::Both: return "both";
    case Towers::ClinicalOnly: return "clinical";
    case Towers::VisualOnly: return "visual";
  }
  return "?";
}

Towers parse_towers(const std::string& text) {
  for (Towers t : {Towers::Both, Towers::ClinicalOnly, Towers::VisualOnly}) {
    if (to_string(t) == text) return t;
  }
  throw ConfigError("unknown tower selection '" + text + "' (both, clinical, visual)");
}

std::string to_string(EpochSampling sampling) {
  return sampling == EpochSampling::AllAugmentations ? "all" : "one";
}

EpochSampling parse_epoch_sampling(const std::string& text) {
  if (text == "all") return EpochSampling::AllAugmentations;
  if (text == "one") return EpochSampling::OneAugmentation;
  throw ConfigError("unknown epoch sampling '" + text + "' (all, one)");
}

// --- TrainConfig ----------------------------------------------------------------

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.epochs = 15;
  c.batch_size = 16;
  c.lambda = 1e-5;
  c.sampling = EpochSampling::OneAugmentation;
  return c;
}

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(batch_size, "batch_size");
  positive(lr_decay_every, "lr_decay_every");
  positive(heads, "heads");
  positive(layers, "layers");
  positive(se_ratio, "se_ratio");
  positive(embed_dim, "embed_dim");
  positive(head_hidden, "head_hidden");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr_decay_factor must lie in (0,1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be non-negative");
  if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("omega must lie in [0,1]");
  if (embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  split_spec().validate();
  VisualConfig::preset(visual_preset);
}

SplitSpec TrainConfig::split_spec() const {
  SplitSpec s;
  s.train = train_ratio;
  s.val = val_ratio;
  s.test = test_ratio;
  s.fold = fold;
  s.seed = seed;
  return s;
}

ModelConfig TrainConfig::model_config(const SurvivalDataset& dataset) const {
  validate();
  ModelConfig m;
  m.use_clinical = towers != Towers::VisualOnly;
  m.use_visual = towers != Towers::ClinicalOnly;
  m.clinical.vocab_size = dataset.vocabulary.size();
  m.clinical.item_tokens = dataset.categorical_fields.size();
  m.clinical.covariates = dataset.continuous_fields.size();
  m.clinical.transformer.d = embed_dim;
  m.clinical.transformer.heads = heads;
  m.clinical.transformer.layers = layers;
  m.clinical.transformer.mlp_hidden = 4 * embed_dim;
  m.clinical.encoder = textual;
  m.visual = VisualConfig::preset(visual_preset);
  m.visual.input = dataset.volume_dims();
  m.visual.se.channel_ratio = se_ratio;
  m.visual.se.temporal_ratio = se_ratio;
  m.visual.se.mode = se_mode;
  m.visual.se.order = se_order;
  m.head_hidden = head_hidden;
  m.frame_diff = frame_diff;
  m.omega = omega;
  m.init_seed = seed;
  return m;
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_key_values() const {
  auto n = [](std::size_t v) { return std::to_string(v); };
  return {
      {"seed", std::to_string(seed)},
      {"epochs", n(epochs)},
      {"batch_size", n(batch_size)},
      {"lr", format_double(lr)},
      {"lr_decay_factor", format_double(lr_decay_factor)},
      {"lr_decay_every", n(lr_decay_every)},
      {"lambda", format_double(lambda)},
      {"omega", format_double(omega)},
      {"heads", n(heads)},
      {"layers", n(layers)},
      {"se_ratio", n(se_ratio)},
      {"se_mode", to_string(se_mode)},
      {"se_order", to_string(se_order)},
      {"frame_diff", to_string(frame_diff)},
      {"train_ratio", format_double(train_ratio)},
      {"val_ratio", format_double(val_ratio)},
      {"test_ratio", format_double(test_ratio)},
      {"fold", n(fold)},
      {"textual", to_string(textual)},
      {"towers", to_string(towers)},
      {"visual_preset", visual_preset},
      {"embed_dim", n(embed_dim)},
      {"head_hidden", n(head_hidden)},
      {"sampling", to_string(sampling)},
  };
}

namespace {

std::size_t parse_count(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size() || text.front() == '-') {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    return parse_double(text);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + text + "'");
  }
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "seed") seed = parse_count(key, value);
  else if (key == "epochs") epochs = parse_count(key, value);
  else if (key == "batch_size") batch_size = parse_count(key, value);
  else if (key == "lr") lr = parse_real(key, value);
  else if (key == "lr_decay_factor") lr_decay_factor = parse_real(key, value);
  else if (key == "lr_decay_every") lr_decay_every = parse_count(key, value);
  else if (key == "lambda") lambda = parse_real(key, value);
  else if (key == "omega") omega = parse_real(key, value);
  else if (key == "heads") heads = parse_count(key, value);
  else if (key == "layers") layers = parse_count(key, value);
  else if (key == "se_ratio") se_ratio = parse_count(key, value);
  else if (key == "se_mode") se_mode = parse_se_mode(value);
  else if (key == "se_order") se_order = parse_se_order(value);
  else if (key == "frame_diff") frame_diff = parse_frame_diff(value);
  else if (key == "train_ratio") train_ratio = parse_real(key, value);
  else if (key == "val_ratio") val_ratio = parse_real(key, value);
  else if (key == "test_ratio") test_ratio = parse_real(key, value);
  else if (key == "fold") fold = parse_count(key, value);
  else if (key == "textual") textual = parse_textual_encoder(value);
  else if (key == "towers") towers = parse_towers(value);
  else if (key == "visual_preset") visual_preset = value;
  else if (key == "embed_dim") embed_dim = parse_count(key, value);
  else if (key == "head_hidden") head_hidden = parse_count(key, value);
  else if (key == "sampling") sampling = parse_epoch_sampling(value);
  else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig TrainConfig::from_key_values(const std::vector<std::pair<std::string, std::string>>& pairs) {
  TrainConfig c;
  for (const auto& [k, v] : pairs) c.set(k, v);
  return c;
}

std::string TrainConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : to_key_values()) {
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- batches ----------------------------------------------------------------------

namespace {

ModelInput make_batch(const SurvivalDataset& ds, const ClinicalVocabulary& vocabulary, std::span<const Sample> samples,
                      bool with_volumes) {
  ModelInput in;
  in.clinical.batch = samples.size();
  for (const Sample& s : samples) {
    EncodedRecord e = encode_record(ds.patients[s.patient], ds.categorical_fields, vocabulary);
    in.clinical.items.insert(in.clinical.items.end(), e.items.begin(), e.items.end());
    in.clinical.covariates.insert(in.clinical.covariates.end(), e.covariates.begin(), e.covariates.end());
  }
  if (with_volumes) {
    for (const Sample& s : samples) {
      const Volume v = s.augmentation == 0 ? ds.volumes[s.patient] : augment(ds.volumes[s.patient], s.augmentation);
      in.volumes.insert(in.volumes.end(), v.data.begin(), v.data.end());
    }
  }
  return in;
}

std::vector<Sample> evaluation_samples(const SurvivalDataset& ds, Split split) {
  if (split == Split::Test) return split_samples(ds, split, false);
  std::vector<Sample> out;
  for (std::size_t p : ds.patients_in(split)) {
    if (ds.patients[p].event == 1) out.push_back({p, 0});
  }
  return out;
}

constexpr std::size_t kEvalBatch = 16;

// Weights decayed towards zero turn into subnormal floats, which are an order
// of magnitude slower on x86; flush them while the guard lives.
class FlushSubnormals {
 public:
  FlushSubnormals() {
#if defined(__SSE__)
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040);  // FTZ | DAZ
#endif
  }
  ~FlushSubnormals() {
#if defined(__SSE__)
    _mm_setcsr(saved_);
#endif
  }
  FlushSubnormals(const FlushSubnormals&) = delete;
  FlushSubnormals& operator=(const FlushSubnormals&) = delete;

 private:
  unsigned saved_ = 0;
};

std::vector<std::vector<float>> snapshot(const ParameterSet<float>& params) {
  std::vector<std::vector<float>> out;
  for (const auto& p : params.entries()) {
    auto v = p.tensor.values();
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

void load_values(ParameterSet<float>& params, const std::vector<std::string>& names, const std::vector<Shape>& shapes,
                 const std::vector<std::vector<float>>& values) {
  if (names.size() != params.size() || values.size() != params.size() || shapes.size() != params.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(names.size()) + " parameters, model expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.entries()[i];
    if (p.name != names[i] || p.tensor.shape() != shapes[i] || values[i].size() != p.tensor.numel()) {
      throw ConfigError("checkpoint parameter '" + names[i] + "' " + shape_string(shapes[i]) +
                        " does not match model parameter '" + p.name + "' " + shape_string(p.tensor.shape()));
    }
    std::copy(values[i].begin(), values[i].end(), p.tensor.values_mut().begin());
  }
}

void check_split(const TrainConfig& config, const SurvivalDataset& ds) {
  if (!(ds.split_spec == config.split_spec())) {
    throw ConfigError("dataset split (fold " + std::to_string(ds.split_spec.fold) + ", seed " +
                      std::to_string(ds.split_spec.seed) + ") differs from the configured split (fold " +
                      std::to_string(config.fold) + ", seed " + std::to_string(config.seed) + ")");
  }
}

}  // namespace

std::vector<EvalRecord> predict_split(const LiteProSENet<float>& model, const SurvivalDataset& ds,
                                      const ClinicalVocabulary& vocabulary, const MinMaxScaler& time_scale,
                                      Split split) {
  const FlushSubnormals flush;
  const std::vector<Sample> samples = evaluation_samples(ds, split);
  std::vector<EvalRecord> out;
  out.reserve(samples.size());
  const bool volumes = model.config().use_visual;
  for (std::size_t start = 0; start < samples.size(); start += kEvalBatch) {
    const std::size_t end = std::min(samples.size(), start + kEvalBatch);
    std::span<const Sample> batch(samples.data() + start, end - start);
    const Predictions<float> pred = model.forward(make_batch(ds, vocabulary, batch, volumes));
    auto values = pred.ensembled.values();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const ClinicalRecord& r = ds.patients[batch[i].patient];
      out.push_back({static_cast<double>(values[i]), time_scale.apply(r.survival_days), r.event});
    }
  }
  return out;
}

// --- Trainer ------------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& config, const SurvivalDataset& dataset)
    : config_(config),
      dataset_(dataset),
      model_(config.model_config(dataset)),
      optimizer_(model_.params()),
      rng_(config.seed ^ 0x5eed5eed5eed5eedULL) {
  check_split(config_, dataset_);
  if (split_samples(dataset_, Split::Train, true).empty()) {
    throw ConfigError("training split has no uncensored patients");
  }
}

Trainer::Trainer(const Checkpoint& ck, const SurvivalDataset& dataset) : Trainer(ck.config, dataset) {
  check_schema(ck, dataset);
  if (!(ck.time_scale == dataset.time_scale) || !(ck.vocabulary == dataset.vocabulary)) {
    throw ConfigError("dataset normalization statistics differ from the checkpoint's");
  }
  load_values(model_.params(), ck.param_names, ck.param_shapes, ck.param_values);
  optimizer_.set_state(ck.optimizer);
  std::istringstream rng_text(ck.rng_state);
  rng_text >> rng_;
  if (!rng_text) throw FormatError("PSNC: unreadable generator state", 0);
  epoch_ = ck.epoch;
  history_ = ck.history;
  best_epoch_ = ck.best_epoch;
  best_c_ = ck.best_val_c_index;
  best_mse_ = ck.best_val_mse;
  best_values_ = ck.best_values;
  censored_gradient_samples_ = ck.censored_gradient_samples;
}

double Trainer::train_epoch(double lr) {
  std::vector<Sample> samples;
  if (config_.sampling == EpochSampling::AllAugmentations) {
    samples = split_samples(dataset_, Split::Train, true);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, kAugmentationCount - 1);
    for (std::size_t p : dataset_.patients_in(Split::Train)) {
      if (dataset_.patients[p].event == 1) samples.push_back({p, pick(rng_)});
    }
  }
  for (std::size_t i = samples.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(samples[i - 1], samples[pick(rng_)]);
  }

  ParameterSet<float>& params = model_.params();
  const bool volumes = model_.config().use_visual;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += config_.batch_size) {
    const std::size_t end = std::min(samples.size(), start + config_.batch_size);
    std::span<const Sample> batch(samples.data() + start, end - start);
    std::vector<float> targets;
    for (const Sample& s : batch) {
      // Censored times are lower bounds, not targets; count any that reach the loss.
      if (dataset_.patients[s.patient].event != 1) ++censored_gradient_samples_;
      targets.push_back(static_cast<float>(dataset_.normalized_time(s.patient)));
    }
    Tensor<float> loss;
    {
      Tape<float> tape;
      const Predictions<float> pred = model_.forward(make_batch(dataset_, dataset_.vocabulary, batch, volumes));
      loss = survival_loss(pred.ensembled, Tensor<float>::from_data({batch.size()}, std::move(targets)), params,
                           config_.lambda);
      const double value = loss.values()[0];
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch_) + ", batch starting at sample " +
                              std::to_string(start) + " (lr " + format_double(lr) + ")");
      }
      tape.backward(loss);
    }
    optimizer_.step(lr);
    params.zero_grad();
    loss_sum += static_cast<double>(loss.values()[0]) * static_cast<double>(batch.size());
  }
  return loss_sum / static_cast<double>(samples.size());
}

void Trainer::validate_epoch(EpochRecord& record) {
  const auto preds = predict_split(model_, dataset_, dataset_.vocabulary, dataset_.time_scale, Split::Val);
  if (preds.empty()) throw ConfigError("validation split has no uncensored patients");
  double se = 0.0;
  for (const auto& r : preds) se += (r.predicted - r.observed) * (r.predicted - r.observed);
  record.val_mse = se / static_cast<double>(preds.size());
  try {
    record.val_c_index = concordance_index(preds);
  } catch (const UndefinedMetricError&) {
    record.val_c_index = 0.5;
  }
}

void Trainer::run_epochs(std::size_t count) {
  const FlushSubnormals flush;
  const std::size_t stop = std::min(config_.epochs, epoch_ + count);
  while (epoch_ < stop) {
    EpochRecord record;
    record.epoch = epoch_;
    record.lr = step_decay_lr(config_.lr, epoch_, config_.lr_decay_factor, config_.lr_decay_every);
    record.train_loss = train_epoch(record.lr);
    validate_epoch(record);
    const bool better = !best_epoch_ || record.val_c_index > best_c_ ||
                        (record.val_c_index == best_c_ && record.val_mse < best_mse_);
    if (better) {
      best_epoch_ = epoch_;
      best_c_ = record.val_c_index;
      best_mse_ = record.val_mse;
      best_values_ = snapshot(model_.params());
    }
    history_.push_back(record);
    ++epoch_;
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.config = config_;
  ck.categorical_fields = dataset_.categorical_fields;
  ck.continuous_fields = dataset_.continuous_fields;
  ck.vocabulary = dataset_.vocabulary;
  ck.time_scale = dataset_.time_scale;
  for (const auto& p : model_.params().entries()) {
    ck.param_names.push_back(p.name);
    ck.param_shapes.push_back(p.tensor.shape());
  }
  ck.param_values = snapshot(model_.params());
  ck.optimizer = optimizer_.state();
  ck.epoch = epoch_;
  std::ostringstream rng_text;
  rng_text << rng_;
  ck.rng_state = rng_text.str();
  ck.history = history_;
  ck.best_epoch = best_epoch_;
  ck.best_val_c_index = best_c_;
  ck.best_val_mse = best_mse_;
  ck.best_values = best_values_;
  ck.censored_gradient_samples = censored_gradient_samples_;
  return ck;
}

// --- evaluation -------------------------------------------------------------------

void check_schema(const Checkpoint& ck, const SurvivalDataset& ds) {
  if (ck.categorical_fields != ds.categorical_fields || ck.continuous_fields != ds.continuous_fields) {
    throw ConfigError("dataset clinical fields differ from the checkpoint's schema");
  }
  if (ck.vocabulary.items() != ds.vocabulary.items()) {
    throw ConfigError("dataset vocabulary (" + std::to_string(ds.vocabulary.size()) +
                      " items) differs from the checkpoint's (" + std::to_string(ck.vocabulary.size()) + " items)");
  }
}

LiteProSENet<float> restore_model(const Checkpoint& ck, const SurvivalDataset& ds, bool best) {
  check_schema(ck, ds);
  LiteProSENet<float> model(ck.config.model_config(ds));
  const bool use_best = best && !ck.best_values.empty();
  load_values(model.params(), ck.param_names, ck.param_shapes, use_best ? ck.best_values : ck.param_values);
  return model;
}

SplitMetrics evaluate(const Checkpoint& ck, const SurvivalDataset& ds, Split split, bool best) {
  check_split(ck.config, ds);
  const LiteProSENet<float> model = restore_model(ck, ds, best);
  const auto preds = predict_split(model, ds, ck.vocabulary, ck.time_scale, split);
  SplitMetrics m;
  m.samples = preds.size();
  m.c_index = concordance_index(preds);
  m.mae = mean_absolute_error(preds);
  return m;
}

// --- ablation ---------------------------------------------------------------------

std::vector<std::string> ablation_grid_names() {
  return {"towers", "textual", "se", "gate", "order", "frame-diff", "omega", "lambda"};
}

std::vector<AblationVariant> ablation_grid(const std::string& grid, const TrainConfig& base) {
  std::vector<AblationVariant> out;
  auto add = [&](std::string name, auto&& change) {
    TrainConfig c = base;
    change(c);
    out.push_back({std::move(name), c});
  };
  if (grid == "towers") {
    for (Towers t : {Towers::Both, Towers::ClinicalOnly, Towers::VisualOnly}) {
      add("towers=" + to_string(t), [&](TrainConfig& c) { c.towers = t; });
    }
  } else if (grid == "textual") {
    for (TextualEncoder e : {TextualEncoder::LiteTransformer, TextualEncoder::Mlp}) {
      add("textual=" + to_string(e), [&](TrainConfig& c) { c.textual = e; });
    }
  } else if (grid == "se") {
    for (SeMode m : {SeMode::Joint, SeMode::Off}) {
      add("se_mode=" + to_string(m), [&](TrainConfig& c) { c.se_mode = m; });
    }
  } else if (grid == "gate") {
    for (SeMode m : {SeMode::GlobalOnly, SeMode::LocalOnly, SeMode::Joint}) {
      add("se_mode=" + to_string(m), [&](TrainConfig& c) { c.se_mode = m; });
    }
  } else if (grid == "order") {
    for (SeOrder o : {SeOrder::ChannelOnly, SeOrder::TemporalOnly, SeOrder::ChannelFirst, SeOrder::TemporalFirst}) {
      add("se_order=" + to_string(o), [&](TrainConfig& c) { c.se_order = o; });
    }
  } else if (grid == "frame-diff") {
    for (FrameDiff f : {FrameDiff::Off, FrameDiff::ForwardOnly, FrameDiff::BackwardOnly, FrameDiff::On}) {
      add("frame_diff=" + to_string(f), [&](TrainConfig& c) { c.frame_diff = f; });
    }
  } else if (grid == "omega") {
    for (int k = 0; k <= 5; ++k) {
      const double w = k / 5.0;
      add("omega=" + format_double(w), [&](TrainConfig& c) { c.omega = w; });
    }
  } else if (grid == "lambda") {
    for (double l : {0.0, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1}) {
      add("lambda=" + format_double(l), [&](TrainConfig& c) { c.lambda = l; });
    }
  } else {
    throw ConfigError("unknown ablation grid '" + grid + "'");
  }
  return out;
}

std::vector<AblationResult> ablate(const std::vector<AblationVariant>& variants, const SurvivalDataset& dataset) {
  if (variants.empty()) throw ConfigError("ablation grid is empty");
  std::vector<AblationResult> out;
  for (const auto& v : variants) {
    const auto start = std::chrono::steady_clock::now();
    std::optional<SurvivalDataset> resplit;
    const SurvivalDataset* ds = &dataset;
    if (!(dataset.split_spec == v.config.split_spec())) {
      resplit = dataset;
      apply_split(*resplit, v.config.split_spec());
      ds = &*resplit;
    }
    Trainer trainer(v.config, *ds);
    trainer.run();
    const Checkpoint ck = trainer.checkpoint();
    AblationResult r;
    r.variant = v.name;
    r.config = v.config;
    r.val = evaluate(ck, *ds, Split::Val);
    r.test = evaluate(ck, *ds, Split::Test);
    r.row.config_hash = v.config.hash();
    r.row.fold = v.config.fold;
    r.row.epoch = ck.best_epoch.value_or(0);
    r.row.split = to_string(Split::Test);
    r.row.c_index = r.test.c_index;
    r.row.mae = r.test.mae;
    r.row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(std::move(r));
  }
  return out;
}

std::string results_header() { return "config_hash,fold,epoch,split,c_index,mae,wall_seconds"; }

std::string format_result_row(const ResultRow& row) {
  char buf[128];
  std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.3f", row.c_index, row.mae, row.wall_seconds);
  return row.config_hash + "," + std::to_string(row.fold) + "," + std::to_string(row.epoch) + "," + row.split + buf;
}

void append_results(const std::string& path, const std::vector<ResultRow>& rows) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw PipelineError("cannot open results file " + path);
  if (fresh) out << results_header() << '\n';
  for (const auto& r : rows) out << format_result_row(r) << '\n';
  if (!out) throw PipelineError("write to " + path + " failed");
}

}  // namespace lpsn
