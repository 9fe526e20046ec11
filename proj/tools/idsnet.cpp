#include <cstdio>
#include <exception>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ids/app.hpp"
#include "ids/errors.hpp"

namespace {

/// Flags that were given on the command line, keyed like config files.
struct Overrides {
  ids::KeyValues values;

  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    return app->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }
};

ids::RunSettings settings_from(const std::string& config_path, const Overrides& flags) {
  ids::KeyValues kv = config_path.empty() ? ids::KeyValues{} : ids::read_key_values(config_path);
  for (const auto& [k, v] : flags.values) kv[k] = v;
  ids::RunSettings s;
  ids::apply_settings(kv, s);
  return s;
}

std::vector<double> parse_weights(const std::string& text) {
  std::vector<double> w;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      w.push_back(std::stod(item, &used));
      if (used != item.size() || !(w.back() > 0)) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ids::ConfigError("--imbalance expects positive weights separated by ':', got '" + text + "'");
    }
  }
  if (w.empty()) throw ids::ConfigError("--imbalance is empty");
  return w;
}

std::vector<int> parse_cases(const std::string& text) {
  std::vector<int> cases;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const int id = std::stoi(item);
    if (id < 1 || id > 10) throw ids::ConfigError("--cases entries must lie in 1..10");
    cases.push_back(id);
  }
  return cases;
}

void add_training_flags(CLI::App* cmd, Overrides& o) {
  o.add(cmd, "--label-column", "label_column", "Label column name (default: label)");
  o.add(cmd, "--epochs", "epochs", "Training epochs (default: 15)");
  o.add(cmd, "--batch", "batch_size", "Mini-batch size (default: 128)");
  o.add(cmd, "--lr", "lr", "Adam learning rate (default: 0.001)");
  o.add(cmd, "--seed", "seed", "Master seed (default: 42)");
  o.add(cmd, "--delimiter", "delimiter", "CSV delimiter (default: ,)");
  o.add(cmd, "--policy", "policy", "Non-numeric feature columns: encode or drop");
  o.add(cmd, "--drop-columns", "drop_columns", "Comma-separated columns to ignore");
}

}  // namespace

int main(int argc, char** argv) {
  ids::retain_freed_memory();
  CLI::App app{"Hybrid ResNet-1D / BiGRU / multi-head attention intrusion detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ids::kToolVersion));

  ids::GenDataOptions gen;
  std::string imbalance = "1";
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a seeded synthetic dataset as CSV");
  gen_cmd->add_option("--classes", gen.synth.classes, "Number of classes")->capture_default_str();
  gen_cmd->add_option("--features", gen.synth.features, "Features per row")->capture_default_str();
  gen_cmd->add_option("--per-class", gen.synth.per_class, "Rows of the largest class")->capture_default_str();
  gen_cmd->add_option("--imbalance", imbalance, "Class weights such as 10:1 (last weight repeats)")
      ->capture_default_str();
  gen_cmd->add_option("--separation", gen.synth.separation, "Template peak-to-trough in noise SDs")
      ->capture_default_str();
  gen_cmd->add_flag("--sequence,!--no-sequence", gen.synth.sequence, "Class-dependent AR(1) noise")
      ->capture_default_str();
  gen_cmd->add_flag("--phase-jitter", gen.synth.phase_jitter, "Random per-row template phase");
  gen_cmd->add_option("--seed", gen.synth.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--label-column", gen.label_column, "Label column name")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output CSV path")->required();

  ids::TrainOptions train;
  Overrides train_flags;
  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "Train on a CSV and write checkpoint, epoch log and manifest");
  train_cmd->add_option("--data", train.data, "Input CSV")->required();
  train_cmd->add_option("--config", train_config, "Key-value config file; flags override it");
  train_cmd->add_option("--out-dir", train.out_dir, "Artifact directory")->required();
  add_training_flags(train_cmd, train_flags);
  train_cmd->add_flag_callback("--smote", [&] { train_flags.values["smote"] = "true"; }, "Oversample training split");
  train_cmd->add_flag_callback("--no-smote", [&] { train_flags.values["smote"] = "false"; }, "Disable SMOTE");
  train_flags.add(train_cmd, "--smote-k", "smote_k", "SMOTE neighbours (default: 5)");
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch output");

  ids::EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint and write reports");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint written by train")->required();
  eval_cmd->add_option("--data", eval.data, "CSV to evaluate (default: held-out test.csv of the run)");
  eval_cmd->add_option("--out-dir", eval.out_dir, "Report directory")->required();
  eval_cmd->add_option("--reps", eval.latency_repetitions, "Latency repetitions (>= 10)")->capture_default_str();

  ids::AblateOptions ablate;
  Overrides ablate_flags;
  std::string ablate_config, cases;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate the ten ablation variants");
  ablate_cmd->add_option("--data", ablate.data, "Input CSV")->required();
  ablate_cmd->add_option("--config", ablate_config, "Key-value config file for the base model");
  ablate_cmd->add_option("--out-dir", ablate.out_dir, "Artifact directory")->required();
  ablate_cmd->add_option("--cases", cases, "Comma-separated subset of case ids (default: all)");
  add_training_flags(ablate_cmd, ablate_flags);
  ablate_cmd->add_flag("--quiet", ablate.quiet, "No per-case output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      gen.synth.imbalance = parse_weights(imbalance);
      ids::cmd_gen_data(gen);
      std::printf("wrote %s\n", gen.out.c_str());
    } else if (*train_cmd) {
      train.settings = settings_from(train_config, train_flags);
      const auto r = ids::cmd_train(train);
      std::printf("test accuracy %.4f\ncheckpoint %s (sha256 %s)\n", double(r.test_accuracy),
                  r.checkpoint_path.c_str(), r.checkpoint_hash.c_str());
    } else if (*eval_cmd) {
      const auto r = ids::cmd_eval(eval);
      std::printf("%s", ids::report_table(r.report).c_str());
      std::printf("inference %.3e s/instance (batch 1), %.3e s/instance (batch 64)\n", r.latency_batch1,
                  r.latency_batch64);
    } else if (*ablate_cmd) {
      ablate.settings = settings_from(ablate_config, ablate_flags);
      if (!cases.empty()) ablate.cases = parse_cases(cases);
      const auto rows = ids::cmd_ablate(ablate);
      for (const auto& r : rows) {
        if (!r.ok) return 1;
      }
    }
  } catch (const ids::StageError& e) {
    std::fprintf(stderr, "error in stage %s\n", e.what());
    return 1;
  } catch (const ids::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
