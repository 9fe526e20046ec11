#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ids/data.hpp"
#include "ids/metrics.hpp"
#include "ids/model.hpp"
#include "ids/trainer.hpp"

namespace ids {

inline constexpr const char* kToolVersion = "0.1.0";

/// Error raised by a pipeline stage; what() starts with "<stage>: ".
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

using KeyValues = std::map<std::string, std::string>;

/// Flat config grammar: one `key = value` per line; `#` starts a comment;
/// blank lines are ignored; keys may appear once. Throws ConfigError / IoError.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::string& path);

/// Everything a training run depends on besides the data file.
struct RunSettings {
  LoadOptions load;
  ModelConfig model;
  TrainConfig train;
  double train_fraction = 0.8;
  std::size_t smote_k = 5;
};

/// Applies recognised keys (see README) to `s`. Unknown keys and unparsable
/// values throw ConfigError naming the key.
void apply_settings(const KeyValues& kv, RunSettings& s);
nlohmann::json to_json(const RunSettings& s);

/// Independent streams derived from one master seed.
struct SeedPlan {
  std::uint64_t split, validation, smote, model, shuffle;
};
SeedPlan derive_seeds(std::uint64_t master);

/// Row/column counts plus SHA-256 of the file bytes.
struct DatasetFingerprint {
  std::size_t rows = 0;
  std::size_t columns = 0;
  std::string sha256;
};
DatasetFingerprint fingerprint(const std::string& path, const RawTable& table);

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  DatasetFingerprint dataset;
  std::string tool_version = kToolVersion;
  std::string started_at;
  std::string finished_at;
  nlohmann::json outputs = nlohmann::json::object();
};
nlohmann::json to_json(const RunManifest& m);
void write_manifest(const std::string& dir, const RunManifest& m);
std::string utc_timestamp();

/// Split data shared by training and ablation: the test split is never
/// oversampled and the validation rows are carved from training rows first.
struct PreparedData {
  RawTable raw;
  LoadResult loaded;
  Dataset train;       // before any oversampling
  Dataset validation;
  Dataset test;
};
PreparedData prepare_data(const std::string& path, const RunSettings& s);

/// Model-ready tensors for one run.
struct TrainingInputs {
  Dataset train;  // after optional SMOTE
  Standardizer standardizer;
  LabeledTensor train_tensor, validation_tensor, test_tensor;
};
TrainingInputs make_training_inputs(const PreparedData& p, bool smote, const RunSettings& s);

LabeledTensor to_labeled(const Dataset& d, const Standardizer& st);

/// Model config with input width and class count taken from the data.
ModelConfig model_config_for(const RunSettings& s, const Dataset& d);

struct GenDataOptions {
  SynthOptions synth;
  std::string out;
  std::string label_column = "label";
};
void cmd_gen_data(const GenDataOptions& o);

struct TrainOptions {
  std::string data;
  std::string out_dir;
  RunSettings settings;
  bool quiet = false;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::string checkpoint_path;
  std::string checkpoint_hash;
  std::vector<std::size_t> train_counts;  // as trained on
  Real test_accuracy = 0;
};
/// Writes model.ckpt, epochs.csv, test.csv (raw held-out rows) and manifest.json.
TrainResult cmd_train(const TrainOptions& o);

struct EvalOptions {
  std::string checkpoint;
  /// Defaults to test.csv next to the checkpoint.
  std::string data;
  std::string out_dir;
  std::size_t latency_repetitions = 20;
};

struct EvalResult {
  ClassReport report;
  ConfusionMatrix confusion;
  std::vector<RocCurve> roc;
  double latency_batch1 = 0;   // seconds per instance
  double latency_batch64 = 0;  // seconds per instance
  std::size_t dropped_rows = 0;
};
/// Writes report.json, report.txt, confusion.csv, roc.csv and manifest.json.
EvalResult cmd_eval(const EvalOptions& o);

struct AblateOptions {
  std::string data;
  std::string out_dir;
  RunSettings settings;
  /// Case ids to run; empty runs all ten.
  std::vector<int> cases;
  bool quiet = false;
};

struct AblationRow {
  int id = 0;
  std::string label;
  std::size_t heads = 0;
  double dropout = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0;
  double loss = 0;
  double fpr = 0;
  double inference_seconds = 0;
  double minority_recall = 0;
};
/// Trains every case on one shared split with identical seeds and writes
/// ablation.csv plus manifest.json. A failing case is recorded, not fatal.
std::vector<AblationRow> cmd_ablate(const AblateOptions& o);

}  // namespace ids
