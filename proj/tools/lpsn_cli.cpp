#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lpsn/dataset.hpp"
#include "lpsn/error.hpp"
#include "lpsn/model.hpp"
#include "lpsn/synthetic.hpp"
#include "lpsn/trainer.hpp"

namespace fs = std::filesystem;
using namespace lpsn;

namespace {

// Training flags are collected as text and applied through TrainConfig::set,
// after the config file and PSN_* variables.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key=value file; flags and PSN_* variables override it");
    for (const auto& [key, value] : TrainConfig{}.to_key_values()) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      options[key] = app->add_option(flag, values[key], "default " + value);
    }
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw PipelineError("cannot open config file " + file);
      std::string line;
      for (std::size_t number = 1; std::getline(in, line); ++number) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(file + ": expected key=value", number);
        auto trim = [](std::string s) {
          s.erase(0, s.find_first_not_of(" \t\r"));
          s.erase(s.find_last_not_of(" \t\r") + 1);
          return s;
        };
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      }
    }
    for (const auto& [key, unused] : c.to_key_values()) {
      std::string env = "PSN_" + key;
      std::transform(env.begin(), env.end(), env.begin(), [](unsigned char ch) { return std::toupper(ch); });
      if (const char* v = std::getenv(env.c_str())) c.set(key, v);
    }
    for (const auto& [key, option] : options) {
      if (option->count() > 0) c.set(key, values.at(key));
    }
    c.validate();
    return c;
  }
};

SurvivalDataset load_for(const std::string& directory, const TrainConfig& config) {
  SurvivalDataset ds = load_dataset(directory);
  if (!(ds.split_spec == config.split_spec())) {
    std::cerr << "re-splitting " << directory << " for seed " << config.seed << ", fold " << config.fold << "\n";
    apply_split(ds, config.split_spec());
  }
  return ds;
}

void print_epoch(const EpochRecord& e) {
  std::printf("epoch %zu  lr %.6g  train_loss %.6f  val_mse %.6f  val_c %.4f\n", e.epoch, e.lr, e.train_loss,
              e.val_mse, e.val_c_index);
  std::fflush(stdout);
}

void print_metrics(const std::string& label, const SplitMetrics& m) {
  std::printf("%s  c_index %.4f  mae %.4f  samples %zu\n", label.c_str(), m.c_index, m.mae, m.samples);
}

Int3 dims_from(const std::vector<std::size_t>& v) {
  if (v.size() != 3) throw ConfigError("--dims needs three values: depth height width");
  return {v[0], v[1], v[2]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-tower survival-time regression on clinical records and CT volumes"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic cohort");
  SyntheticOptions so;
  std::string synth_out;
  std::vector<std::size_t> synth_dims = {8, 96, 96};
  synth->add_option("--out", synth_out, "dataset directory")->required();
  synth->add_option("--seed", so.seed, "generator seed (also the split seed)");
  synth->add_option("--patients", so.patients, "cohort size");
  synth->add_option("--noise", so.noise, "time noise std");
  synth->add_option("--censored", so.censored_fraction, "censored fraction");
  synth->add_option("--dims", synth_dims, "volume depth height width")->expected(3);
  synth->add_option("--fold", so.split.fold, "test fold");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "build a dataset from a clinical CSV and PSNV volumes");
  std::string csv_path, volume_dir, prepare_out;
  std::vector<std::size_t> prepare_dims = {8, 96, 96};
  SplitSpec prepare_split;
  prepare->add_option("--clinical", csv_path, "patient_id,<categorical...>,age,survival_days,event")->required();
  prepare->add_option("--volumes", volume_dir, "directory of <patient_id>.psnv files")->required();
  prepare->add_option("--out", prepare_out, "dataset directory")->required();
  prepare->add_option("--dims", prepare_dims, "volume depth height width")->expected(3);
  prepare->add_option("--seed", prepare_split.seed, "split seed");
  prepare->add_option("--fold", prepare_split.fold, "test fold");

  // train
  auto* train = app.add_subcommand("train", "train a model, or resume from a checkpoint");
  ConfigFlags train_flags;
  train_flags.attach(train);
  std::string train_data, train_out, resume, train_results;
  std::size_t save_every = 0;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "checkpoint file")->required();
  train->add_option("--resume", resume, "continue from this checkpoint (its config wins)");
  train->add_option("--save-every", save_every, "also save the checkpoint every N epochs");
  train->add_option("--results", train_results, "append the test row to this CSV");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_results;
  bool eval_last = false;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--split", eval_split, "train, val or test");
  eval->add_flag("--last", eval_last, "use the final parameters, not the best-validation ones");
  eval->add_option("--results", eval_results, "append the row to this CSV");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate a grid of variants");
  ConfigFlags ablate_flags;
  ablate_flags.attach(ablate_cmd);
  std::string ablate_data, ablate_results;
  std::vector<std::string> grids;
  ablate_cmd->add_option("--data", ablate_data, "dataset directory")->required();
  ablate_cmd->add_option("--grid", grids, "towers, textual, se, gate, order, frame-diff, omega, lambda")->required();
  ablate_cmd->add_option("--results", ablate_results, "append one row per variant to this CSV");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full model at tiny size");
  std::uint64_t gc_seed = kGradcheckSeed;
  double gc_step = 1e-4, gc_tol = 1e-4, gc_lambda = 0.01;
  gradcheck->add_option("--seed", gc_seed, "initialization and input seed");
  gradcheck->add_option("--step", gc_step, "central-difference step");
  gradcheck->add_option("--tolerance", gc_tol, "maximum relative error");
  gradcheck->add_option("--lambda", gc_lambda, "L2 weight in the checked loss");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      so.dims = dims_from(synth_dims);
      const auto ds = generate_synthetic(so);
      save_dataset(ds, synth_out);
      std::size_t censored = 0;
      for (const auto& p : ds.patients) censored += p.event == 0;
      std::printf("wrote %zu patients (%zu censored) to %s\n", ds.size(), censored, synth_out.c_str());
    } else if (prepare->parsed()) {
      std::vector<std::string> categorical, continuous;
      auto rows = read_clinical_csv(csv_path, categorical, continuous);
      std::vector<Volume> raw;
      for (const auto& r : rows) raw.push_back(load_psnv((fs::path(volume_dir) / (r.id + ".psnv")).string()));
      const auto ds = assemble_dataset(categorical, continuous, std::move(rows), raw, dims_from(prepare_dims),
                                       prepare_split);
      save_dataset(ds, prepare_out);
      std::printf("wrote %zu patients to %s\n", ds.size(), prepare_out.c_str());
    } else if (train->parsed()) {
      std::optional<Checkpoint> from;
      TrainConfig config;
      if (!resume.empty()) {
        from = load_checkpoint(resume);
        config = from->config;
      } else {
        config = train_flags.resolve();
      }
      const SurvivalDataset ds = load_for(train_data, config);
      const auto start = std::chrono::steady_clock::now();
      Trainer trainer = from ? Trainer(*from, ds) : Trainer(config, ds);
      std::printf("config %s  epochs %zu  train patients %zu\n", config.hash().c_str(), config.epochs,
                  ds.patients_in(Split::Train).size());
      while (trainer.epoch() < config.epochs) {
        trainer.run_epochs(1);
        print_epoch(trainer.history().back());
        if (save_every > 0 && trainer.epoch() % save_every == 0) save_checkpoint(train_out, trainer.checkpoint());
      }
      const Checkpoint ck = trainer.checkpoint();
      save_checkpoint(train_out, ck);
      const SplitMetrics test = evaluate(ck, ds, Split::Test);
      print_metrics("test", test);
      if (!train_results.empty()) {
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        append_results(train_results, {{config.hash(), config.fold, ck.best_epoch.value_or(0), "test", test.c_index,
                                        test.mae, seconds}});
      }
    } else if (eval->parsed()) {
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      const SurvivalDataset ds = load_for(eval_data, ck.config);
      const auto start = std::chrono::steady_clock::now();
      const Split split = parse_split(eval_split);
      const SplitMetrics m = evaluate(ck, ds, split, !eval_last);
      print_metrics(eval_split, m);
      if (!eval_results.empty()) {
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const std::size_t epoch = eval_last ? ck.epoch : ck.best_epoch.value_or(0);
        append_results(eval_results, {{ck.config.hash(), ck.config.fold, epoch, eval_split, m.c_index, m.mae, seconds}});
      }
    } else if (ablate_cmd->parsed()) {
      const TrainConfig base = ablate_flags.resolve();
      const SurvivalDataset ds = load_for(ablate_data, base);
      std::vector<AblationVariant> variants;
      for (const auto& g : grids) {
        auto v = ablation_grid(g, base);
        variants.insert(variants.end(), v.begin(), v.end());
      }
      std::vector<ResultRow> rows;
      for (const auto& v : variants) {
        const auto r = ablate({v}, ds).front();
        std::printf("%-26s %s  val_c %.4f  test_c %.4f  test_mae %.4f  %.1fs\n", r.variant.c_str(),
                    r.row.config_hash.c_str(), r.val.c_index, r.test.c_index, r.test.mae, r.row.wall_seconds);
        std::fflush(stdout);
        if (!ablate_results.empty()) append_results(ablate_results, {r.row});
      }
    } else if (gradcheck->parsed()) {
      GradCheckOptions options;
      options.step = gc_step;
      const auto report = model_gradient_check(gc_seed, gc_lambda, options);
      for (const auto& e : report.entries) {
        std::printf("%-40s %6zu  rel %.3e  abs %.3e%s\n", e.name.c_str(), e.count, e.max_rel_error, e.max_abs_error,
                    e.max_rel_error > gc_tol ? "  FAIL" : "");
      }
      std::printf("max relative error %.3e (tolerance %.1e)\n", report.max_rel_error(), gc_tol);
      return report.passed(gc_tol) ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
