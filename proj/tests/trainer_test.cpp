#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "lpsn/error.hpp"
#include "lpsn/synthetic.hpp"
#include "lpsn/trainer.hpp"

using namespace lpsn;
namespace fs = std::filesystem;

namespace {

SurvivalDataset tiny_cohort(std::uint64_t seed = 1, std::size_t n = 24) {
  SyntheticOptions o;
  o.seed = seed;
  o.patients = n;
  o.dims = {4, 16, 16};
  return generate_synthetic(o);
}

TrainConfig tiny_config(std::size_t epochs = 3) {
  TrainConfig c;
  c.seed = 1;
  c.epochs = epochs;
  c.batch_size = 8;
  c.lr_decay_every = 2;
  c.layers = 1;
  c.embed_dim = 6;
  c.head_hidden = 8;
  c.visual_preset = "tiny";
  return c;
}

std::string bytes_of(const Checkpoint& ck) {
  std::ostringstream out;
  write_checkpoint(out, ck);
  return out.str();
}

Checkpoint from_bytes(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_checkpoint(in);
}

std::uint64_t format_offset(const std::string& bytes) {
  try {
    from_bytes(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected a format error");
  return 0;
}

}  // namespace

TEST_CASE("learning rate halves every forty epochs") {
  CHECK(step_decay_lr(1e-3, 0) == 1e-3);
  CHECK(step_decay_lr(1e-3, 39) == 1e-3);
  CHECK(step_decay_lr(1e-3, 40) == 5e-4);
  CHECK(step_decay_lr(1e-3, 79) == 5e-4);
  CHECK(step_decay_lr(1e-3, 80) == 2.5e-4);
  CHECK(step_decay_lr(1e-3, 799) == doctest::Approx(1e-3 * std::pow(0.5, 19)));
  CHECK_THROWS_AS(step_decay_lr(1e-3, 1, 0.5, 0), ConfigError);
}

TEST_CASE("adam: two steps against the closed form") {
  ParameterSet<float> params;
  auto w = params.add("w", Tensor<float>::from_data({2}, {0.5f, -1.0f}));
  Adam adam(params);
  const double g1[2] = {0.2, -3.0}, g2[2] = {-0.1, 1.0};
  auto apply = [&](const double* g) {
    params.zero_grad();
    Tape<float> tape;
    auto c = Tensor<float>::from_data({2}, {static_cast<float>(g[0]), static_cast<float>(g[1])});
    tape.backward(sum(mul(w, c)));
  };
  double expected[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int step = 1; step <= 2; ++step) {
    const double* g = step == 1 ? g1 : g2;
    apply(g);
    adam.step(0.01);
    for (int k = 0; k < 2; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * g[k];
      v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
      const double mh = m[k] / (1 - std::pow(0.9, step)), vh = v[k] / (1 - std::pow(0.999, step));
      expected[k] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(w.values()[static_cast<std::size_t>(k)] == doctest::Approx(expected[k]).epsilon(1e-6));
    }
  }
  CHECK(adam.state().step == 2);
  AdamState wrong;
  CHECK_THROWS_AS(adam.set_state(wrong), ConfigError);
}

TEST_CASE("config: key/value round-trip, hash, validation") {
  TrainConfig c = tiny_config();
  c.se_mode = SeMode::LocalOnly;
  c.frame_diff = FrameDiff::BackwardOnly;
  c.textual = TextualEncoder::Mlp;
  c.towers = Towers::VisualOnly;
  c.sampling = EpochSampling::OneAugmentation;
  c.lambda = 1.25e-5;
  auto kv = c.to_key_values();
  CHECK(TrainConfig::from_key_values(kv) == c);
  CHECK(c.hash().size() == 16);
  CHECK(c.hash().find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(TrainConfig::from_key_values(kv).hash() == c.hash());
  TrainConfig d = c;
  d.omega = 0.5;
  CHECK(d.hash() != c.hash());

  TrainConfig e;
  CHECK_THROWS_AS(e.set("learning_rate", "0.1"), ConfigError);
  CHECK_THROWS_AS(e.set("epochs", "many"), ConfigError);
  e.set("lr", "0.01");
  CHECK(e.lr == 0.01);
  TrainConfig bad;
  bad.train_ratio = 0.7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.fold = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.embed_dim = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.omega = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("ablation grids enumerate their variants") {
  const std::pair<const char*, std::size_t> sizes[] = {{"towers", 3}, {"textual", 2}, {"se", 2},    {"gate", 3},
                                                       {"order", 4},  {"frame-diff", 4}, {"omega", 6}, {"lambda", 8}};
  for (const auto& [name, n] : sizes) CHECK(ablation_grid(name, TrainConfig{}).size() == n);
  CHECK(ablation_grid_names().size() == 8);
  CHECK_THROWS_AS(ablation_grid("dropout", TrainConfig{}), ConfigError);
  auto omega = ablation_grid("omega", TrainConfig{});
  CHECK(omega.front().config.omega == 0.0);
  CHECK(omega.back().config.omega == 1.0);
}

TEST_CASE("training: censored patients never reach the loss, lr follows the schedule") {
  auto ds = tiny_cohort();
  std::size_t censored_train = 0;
  for (std::size_t p : ds.patients_in(Split::Train)) censored_train += ds.patients[p].event == 0;
  REQUIRE(censored_train > 0);

  Trainer t(tiny_config(3), ds);
  t.run();
  CHECK(t.epoch() == 3);
  CHECK(t.censored_gradient_samples() == 0);
  REQUIRE(t.history().size() == 3);
  CHECK(t.history()[0].lr == 1e-3);
  CHECK(t.history()[1].lr == 1e-3);
  CHECK(t.history()[2].lr == 5e-4);
  for (const auto& e : t.history()) {
    CHECK(std::isfinite(e.train_loss));
    CHECK(e.val_c_index >= 0.0);
    CHECK(e.val_c_index <= 1.0);
  }
  t.run_epochs(5);
  CHECK(t.epoch() == 3);
  auto ck = t.checkpoint();
  REQUIRE(ck.best_epoch.has_value());
  CHECK(*ck.best_epoch < 3);  // zero-based, like EpochRecord::epoch
  CHECK(ck.best_val_c_index == t.history()[*ck.best_epoch].val_c_index);
}

TEST_CASE("training: a fixed seed gives bit-identical checkpoints") {
  auto ds = tiny_cohort();
  Trainer a(tiny_config(2), ds), b(tiny_config(2), ds);
  a.run();
  b.run();
  CHECK(bytes_of(a.checkpoint()) == bytes_of(b.checkpoint()));
  TrainConfig other = tiny_config(2);
  other.seed = 2;
  auto ds2 = ds;
  apply_split(ds2, other.split_spec());
  Trainer c(other, ds2);
  c.run();
  CHECK(bytes_of(c.checkpoint()) != bytes_of(a.checkpoint()));
}

TEST_CASE("training: resuming from a saved checkpoint equals continuous training") {
  auto ds = tiny_cohort();
  TrainConfig config = tiny_config(3);
  config.sampling = EpochSampling::OneAugmentation;
  Trainer continuous(config, ds);
  continuous.run();

  Trainer first(config, ds);
  first.run_epochs(1);
  const fs::path path = fs::temp_directory_path() / "lpsn_resume_test.psnc";
  save_checkpoint(path.string(), first.checkpoint());
  Trainer resumed(load_checkpoint(path.string()), ds);
  fs::remove(path);
  CHECK(resumed.epoch() == 1);
  resumed.run();
  CHECK(bytes_of(resumed.checkpoint()) == bytes_of(continuous.checkpoint()));
  CHECK(resumed.history() == continuous.history());
}

TEST_CASE("training: zero epochs, mismatched dataset, divergence") {
  auto ds = tiny_cohort();
  Trainer idle(tiny_config(0), ds);
  idle.run();
  auto ck = idle.checkpoint();
  CHECK(ck.epoch == 0);
  CHECK_FALSE(ck.best_epoch.has_value());
  CHECK(ck.history.empty());
  CHECK(evaluate(ck, ds, Split::Test).samples > 0);

  auto other = tiny_cohort(1, 30);
  CHECK_THROWS_AS(Trainer(ck, other), ConfigError);
  TrainConfig refold = tiny_config(1);
  refold.fold = 1;
  CHECK_THROWS_AS(Trainer(refold, ds), ConfigError);

  auto poisoned = ds;
  for (std::size_t p : poisoned.patients_in(Split::Train)) poisoned.volumes[p].data[0] = NAN;
  Trainer diverging(tiny_config(1), poisoned);
  CHECK_THROWS_AS(diverging.run(), DivergenceError);
}

TEST_CASE("checkpoint: byte round-trip and format errors") {
  auto ds = tiny_cohort();
  Trainer t(tiny_config(1), ds);
  t.run();
  const Checkpoint ck = t.checkpoint();
  const std::string bytes = bytes_of(ck);
  CHECK(bytes.substr(0, 4) == "PSNC");
  const Checkpoint back = from_bytes(bytes);
  CHECK(back == ck);
  CHECK(bytes_of(back) == bytes);

  std::string bad = bytes;
  bad[1] = 'X';
  CHECK(format_offset(bad) == 0);
  bad = bytes;
  bad[4] = 2;
  CHECK(format_offset(bad) == 4);
  CHECK(format_offset(bytes.substr(0, bytes.size() - 5)) > 6);
  CHECK(format_offset(bytes.substr(0, 3)) <= 3);
  CHECK(format_offset(bytes + "x") == bytes.size());
}

TEST_CASE("evaluation: deterministic, test covers every augmentation, constant predictor") {
  auto ds = tiny_cohort();
  Trainer t(tiny_config(1), ds);
  t.run();
  const Checkpoint ck = t.checkpoint();
  auto a = evaluate(ck, ds, Split::Test);
  auto b = evaluate(ck, ds, Split::Test);
  CHECK(a.c_index == b.c_index);
  CHECK(a.mae == b.mae);
  CHECK(a.samples == ds.patients_in(Split::Test).size() * kAugmentationCount);
  std::size_t val_uncensored = 0;
  for (std::size_t p : ds.patients_in(Split::Val)) val_uncensored += ds.patients[p].event == 1;
  CHECK(evaluate(ck, ds, Split::Val).samples == val_uncensored);

  auto model = restore_model(ck, ds, true);
  for (auto& p : model.params().entries()) {
    for (float& v : p.tensor.values_mut()) v = 0.0f;
  }
  Tensor<float> bias = model.params().get("head.b2");  // shares storage
  bias.values_mut()[0] = 0.3f;
  std::vector<EvalRecord> records = predict_split(model, ds, ck.vocabulary, ck.time_scale, Split::Test);
  for (const auto& r : records) CHECK(r.predicted == records.front().predicted);
  CHECK(concordance_index(records) == 0.5);
}

TEST_CASE("results file: header once, fixed columns") {
  const fs::path path = fs::temp_directory_path() / "lpsn_results_test.csv";
  fs::remove(path);
  ResultRow row{"0123456789abcdef", 2, 17, "test", 0.8125, 0.0431, 12.5};
  append_results(path.string(), {row});
  append_results(path.string(), {row});
  std::ifstream in(path);
  std::string text(std::istreambuf_iterator<char>(in), {});
  fs::remove(path);
  CHECK(results_header() == "config_hash,fold,epoch,split,c_index,mae,wall_seconds");
  const std::string line = "0123456789abcdef,2,17,test,0.812500,0.043100,12.500";
  CHECK(format_result_row(row) == line);
  CHECK(text == results_header() + "\n" + line + "\n" + line + "\n");
}

TEST_CASE("ablation: one trained row per variant") {
  auto ds = tiny_cohort();
  TrainConfig base = tiny_config(1);
  auto results = ablate(ablation_grid("towers", base), ds);
  REQUIRE(results.size() == 3);
  for (const auto& r : results) {
    CHECK(r.row.split == "test");
    CHECK(r.row.config_hash == r.config.hash());
    CHECK(r.row.epoch == 0);
    CHECK(r.test.c_index == r.row.c_index);
  }
  CHECK(results[1].config.towers == Towers::ClinicalOnly);
}
