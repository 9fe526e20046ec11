#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "ids/app.hpp"
#include "ids/checkpoint.hpp"
#include "ids/errors.hpp"

namespace ids {

namespace {

namespace fs = std::filesystem;

/// Runs `f`, prefixing any failure with the stage name.
template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError& e) {
    throw StageError(name, std::string("configuration error: ") + e.what());
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
}

bool all_classes_have(const Dataset& d, std::size_t minimum) {
  for (std::size_t c : d.class_counts()) {
    if (c < minimum) return false;
  }
  return true;
}

SplitPair split(const Dataset& d, double fraction, std::uint64_t seed) {
  return train_test_split(d, fraction, seed, all_classes_have(d, 2));
}

nlohmann::json counts_json(const Dataset& d) {
  nlohmann::json j = nlohmann::json::object();
  const auto counts = d.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) j[d.encoder.decode(int(c))] = counts[c];
  return j;
}

Tensor tile_rows(const Tensor& x, std::size_t rows) {
  std::vector<std::size_t> idx(rows);
  for (std::size_t i = 0; i < rows; ++i) idx[i] = i % x.shape()[0];
  return gather_rows(x, idx);
}

std::size_t minority_class(const Dataset& d) {
  const auto counts = d.class_counts();
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] < counts[best]) best = c;
  }
  return best;
}

}  // namespace

PreparedData prepare_data(const std::string& path, const RunSettings& s) {
  PreparedData p;
  p.raw = stage("load", [&] { return read_csv(path, s.load.delimiter); });
  p.loaded = stage("encode", [&] { return encode_table(p.raw, s.load); });
  if (p.loaded.data.num_classes() < 2) throw StageError("encode", "need at least 2 classes");
  const SeedPlan seeds = derive_seeds(s.train.seed);
  stage("split", [&] {
    SplitPair outer = split(p.loaded.data, s.train_fraction, seeds.split);
    SplitPair inner = split(outer.train, 1.0 - s.train.validation_fraction, seeds.validation);
    p.train = std::move(inner.train);
    p.validation = std::move(inner.test);
    p.test = std::move(outer.test);
  });
  return p;
}

LabeledTensor to_labeled(const Dataset& d, const Standardizer& st) { return {reshape_for_model(d, st), d.labels}; }

TrainingInputs make_training_inputs(const PreparedData& p, bool smote, const RunSettings& s) {
  TrainingInputs in;
  in.train = smote ? stage("smote", [&] { return smote_oversample(p.train, s.smote_k, derive_seeds(s.train.seed).smote); })
                   : p.train;
  stage("standardize", [&] {
    in.standardizer = Standardizer::fit(in.train);
    in.train_tensor = to_labeled(in.train, in.standardizer);
    in.validation_tensor = to_labeled(p.validation, in.standardizer);
    in.test_tensor = to_labeled(p.test, in.standardizer);
  });
  return in;
}

ModelConfig model_config_for(const RunSettings& s, const Dataset& d) {
  ModelConfig cfg = s.model;
  cfg.time_steps = d.num_features;
  cfg.channels = 1;
  cfg.num_classes = d.num_classes();
  cfg.validate();
  return cfg;
}

void cmd_gen_data(const GenDataOptions& o) {
  const Dataset d = stage("generate", [&] { return synth_dataset(o.synth); });
  stage("write", [&] { write_csv(o.out, to_table(d, o.label_column)); });
}

TrainResult cmd_train(const TrainOptions& o) {
  RunManifest manifest;
  manifest.command = "train";
  manifest.started_at = utc_timestamp();
  manifest.seed = o.settings.train.seed;
  manifest.config = to_json(o.settings);
  stage("output", [&] { ensure_dir(o.out_dir); });

  const RunSettings& s = o.settings;
  const PreparedData prepared = prepare_data(o.data, s);
  manifest.dataset = stage("load", [&] { return fingerprint(o.data, prepared.raw); });
  const TrainingInputs inputs = make_training_inputs(prepared, s.model.use_smote, s);
  const ModelConfig cfg = stage("config", [&] { return model_config_for(s, inputs.train); });
  const SeedPlan seeds = derive_seeds(s.train.seed);

  Model model = stage("build", [&] { return build_model(cfg, seeds.model); });
  TrainConfig tc = s.train;
  tc.seed = seeds.shuffle;
  TrainResult result;
  result.epochs = stage("train", [&] {
    return train(model, inputs.train_tensor, inputs.validation_tensor, tc, [&](const EpochRecord& r) {
      if (!o.quiet) {
        std::printf("epoch %2zu  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f  (%.1fs)\n", r.epoch,
                    double(r.train_loss), double(r.train_accuracy), double(r.val_loss), double(r.val_accuracy),
                    r.wall_time_seconds);
        std::fflush(stdout);
      }
    });
  });
  const Evaluation test_eval = stage("evaluate", [&] { return evaluate(model, inputs.test_tensor); });
  result.test_accuracy = test_eval.accuracy;
  result.train_counts = inputs.train.class_counts();

  stage("write", [&] {
    Checkpoint meta{cfg, prepared.loaded.schema, inputs.standardizer,
                    {{"seed", s.train.seed}, {"smote", s.model.use_smote}}};
    result.checkpoint_path = o.out_dir + "/model.ckpt";
    save_checkpoint(result.checkpoint_path, model, meta);
    result.checkpoint_hash = sha256_file(result.checkpoint_path);
    write_epoch_csv(o.out_dir + "/epochs.csv", result.epochs);

    RawTable held_out{prepared.raw.columns, {}};
    for (std::int64_t r : prepared.test.origin) held_out.rows.push_back(prepared.raw.rows[std::size_t(r)]);
    write_csv(o.out_dir + "/test.csv", held_out, s.load.delimiter);

    manifest.outputs = {{"checkpoint", "model.ckpt"},
                        {"checkpoint_sha256", result.checkpoint_hash},
                        {"epochs_csv", "epochs.csv"},
                        {"test_csv", "test.csv"},
                        {"smote", s.model.use_smote},
                        {"dropped_rows", prepared.loaded.dropped_rows},
                        {"split_rows", {{"train", prepared.train.rows()},
                                        {"validation", prepared.validation.rows()},
                                        {"test", prepared.test.rows()}}},
                        {"train_class_counts_before_smote", counts_json(prepared.train)},
                        {"train_class_counts", counts_json(inputs.train)},
                        {"parameters", model.parameter_count()},
                        {"test_accuracy", result.test_accuracy}};
    manifest.finished_at = utc_timestamp();
    write_manifest(o.out_dir, manifest);
  });
  return result;
}

EvalResult cmd_eval(const EvalOptions& o) {
  RunManifest manifest;
  manifest.command = "eval";
  manifest.started_at = utc_timestamp();
  stage("output", [&] { ensure_dir(o.out_dir); });

  LoadedCheckpoint ckpt = stage("checkpoint", [&] { return load_checkpoint(o.checkpoint); });
  const std::string data_path =
      o.data.empty() ? (fs::path(o.checkpoint).parent_path() / "test.csv").string() : o.data;
  manifest.config = {{"checkpoint", o.checkpoint},
                     {"checkpoint_sha256", stage("checkpoint", [&] { return sha256_file(o.checkpoint); })},
                     {"data", data_path},
                     {"latency_repetitions", o.latency_repetitions},
                     {"model", to_json(ckpt.meta.config)}};
  manifest.seed = ckpt.meta.extra.value("seed", std::uint64_t{0});

  const RawTable raw = stage("load", [&] { return read_csv(data_path); });
  manifest.dataset = stage("load", [&] { return fingerprint(data_path, raw); });
  const LoadResult loaded = stage("encode", [&] { return encode_with_schema(raw, ckpt.meta.schema); });
  const LabeledTensor data = stage("standardize", [&] { return to_labeled(loaded.data, ckpt.meta.standardizer); });

  EvalResult r;
  r.dropped_rows = loaded.dropped_rows;
  const Evaluation ev = stage("evaluate", [&] { return evaluate(ckpt.model, data); });
  stage("metrics", [&] {
    r.confusion = confusion(data.y, ev.predictions, ckpt.meta.config.num_classes, ckpt.meta.schema.labels.class_names());
    r.report = class_report(r.confusion);
    r.roc = roc_auc(ev.probabilities, data.y);
  });
  stage("latency", [&] {
    r.latency_batch1 = measure_inference(ckpt.model, tile_rows(data.x, 1), o.latency_repetitions);
    r.latency_batch64 = measure_inference(ckpt.model, tile_rows(data.x, 64), o.latency_repetitions);
  });

  stage("write", [&] {
    nlohmann::json report = report_to_json(r.report, r.confusion, r.roc);
    report["loss"] = ev.loss;
    report["dropped_rows"] = r.dropped_rows;
    report["latency"] = {{"seconds_per_instance_batch1", r.latency_batch1},
                         {"seconds_per_instance_batch64", r.latency_batch64},
                         {"repetitions", o.latency_repetitions}};
    // Published accuracies on the two public benchmarks; informational only.
    report["reference_accuracy"] = {{"edge_iiotset", 0.9871}, {"ciciov2024", 0.9999}, {"binding", false}};
    std::ofstream json(o.out_dir + "/report.json", std::ios::trunc);
    json << report.dump(2) << '\n';
    std::ofstream text(o.out_dir + "/report.txt", std::ios::trunc);
    text << report_table(r.report)
         << fmt::format("inference  {:.3e} s/instance (batch 1)  {:.3e} s/instance (batch 64)\n", r.latency_batch1,
                        r.latency_batch64);
    if (!json || !text) throw IoError("failed writing report files in " + o.out_dir);
    write_confusion_csv(o.out_dir + "/confusion.csv", r.confusion);
    write_roc_csv(o.out_dir + "/roc.csv", r.roc, r.confusion.class_names());
    manifest.outputs = {{"report_json", "report.json"},  {"report_txt", "report.txt"},
                        {"confusion_csv", "confusion.csv"}, {"roc_csv", "roc.csv"},
                        {"accuracy", r.report.accuracy},   {"rows", data.rows()}};
    manifest.finished_at = utc_timestamp();
    write_manifest(o.out_dir, manifest);
  });
  return r;
}

std::vector<AblationRow> cmd_ablate(const AblateOptions& o) {
  RunManifest manifest;
  manifest.command = "ablate";
  manifest.started_at = utc_timestamp();
  manifest.seed = o.settings.train.seed;
  manifest.config = to_json(o.settings);
  manifest.config["cases"] = o.cases;
  stage("output", [&] { ensure_dir(o.out_dir); });

  const RunSettings& s = o.settings;
  const PreparedData prepared = prepare_data(o.data, s);
  manifest.dataset = stage("load", [&] { return fingerprint(o.data, prepared.raw); });
  const SeedPlan seeds = derive_seeds(s.train.seed);
  const std::size_t minority = minority_class(prepared.train);

  // SMOTE and non-SMOTE inputs are shared by every case that needs them.
  std::optional<TrainingInputs> with_smote, without_smote;
  std::vector<AblationRow> rows;
  for (const AblationCase& c : ablation_grid(s.model)) {
    if (!o.cases.empty() && std::find(o.cases.begin(), o.cases.end(), c.id) == o.cases.end()) continue;
    AblationRow row;
    row.id = c.id;
    row.label = c.label;
    row.heads = c.config.use_mha ? c.config.num_heads : 0;
    row.dropout = double(c.config.dropout_rate);
    try {
      std::optional<TrainingInputs>& slot = c.config.use_smote ? with_smote : without_smote;
      if (!slot) slot = make_training_inputs(prepared, c.config.use_smote, s);
      RunSettings case_settings = s;
      case_settings.model = c.config;
      const ModelConfig cfg = stage("config", [&] { return model_config_for(case_settings, slot->train); });
      Model model = stage("build", [&] { return build_model(cfg, seeds.model); });
      TrainConfig tc = s.train;
      tc.seed = seeds.shuffle;
      stage("train", [&] { train(model, slot->train_tensor, slot->validation_tensor, tc); });
      stage("evaluate", [&] {
        const Evaluation ev = evaluate(model, slot->test_tensor);
        const ConfusionMatrix cm = confusion(slot->test_tensor.y, ev.predictions, cfg.num_classes);
        const ClassReport rep = class_report(cm);
        row.accuracy = rep.accuracy;
        row.loss = double(ev.loss);
        row.fpr = rep.macro_fpr;
        row.minority_recall = rep.per_class[minority].recall;
        const std::size_t latency_rows = std::min<std::size_t>(64, slot->test_tensor.rows());
        row.inference_seconds = measure_inference(model, tile_rows(slot->test_tensor.x, latency_rows));
      });
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (!o.quiet) {
      if (row.ok) {
        std::printf("case %2d  %-34s acc %.4f  loss %.4f  fpr %.4f  minority recall %.4f\n", row.id,
                    row.label.c_str(), row.accuracy, row.loss, row.fpr, row.minority_recall);
      } else {
        std::printf("case %2d  %-34s FAILED: %s\n", row.id, row.label.c_str(), row.error.c_str());
      }
      std::fflush(stdout);
    }
    rows.push_back(std::move(row));
  }

  stage("write", [&] {
    RawTable table{{"case", "model", "heads", "dropout", "accuracy", "loss", "fpr", "inf_time", "minority_recall",
                    "status"},
                   {}};
    for (const AblationRow& r : rows) {
      auto num = [&](double v) { return r.ok ? fmt::format("{:.6g}", v) : std::string(); };
      table.rows.push_back({std::to_string(r.id), r.label, std::to_string(r.heads), fmt::format("{:g}", r.dropout),
                            num(r.accuracy), num(r.loss), num(r.fpr), num(r.inference_seconds),
                            num(r.minority_recall), r.ok ? "ok" : "error: " + r.error});
    }
    write_csv(o.out_dir + "/ablation.csv", table);
    manifest.outputs = {{"ablation_csv", "ablation.csv"},
                        {"minority_class", prepared.train.encoder.decode(int(minority))},
                        {"failed_cases", std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.ok; })}};
    manifest.finished_at = utc_timestamp();
    write_manifest(o.out_dir, manifest);
  });
  return rows;
}

}  // namespace ids
