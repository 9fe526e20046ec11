#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ids/tensor.hpp"

namespace ids {

/// Header plus string cells, as read from delimited text.
struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Throws InputError unless every row has columns.size() cells.
  void check_rectangular() const;
};

/// Reads delimited text with a header row. Double-quoted cells may contain the
/// delimiter and "" escapes. Throws IoError / InputError.
RawTable read_csv(const std::string& path, char delimiter = ',');
void write_csv(const std::string& path, const RawTable& table, char delimiter = ',');
std::vector<std::string> split_csv_line(const std::string& line, char delimiter);

/// Maps distinct names to 0..K-1 in lexicographic order.
class LabelEncoder {
 public:
  LabelEncoder() = default;
  static LabelEncoder fit(std::span<const std::string> values);
  static LabelEncoder from_names(std::vector<std::string> sorted_names);

  int encode(const std::string& name) const;  // ContractError when unknown
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::string& decode(int index) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& class_names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
};

/// Row-major feature matrix with integer labels.
struct Dataset {
  std::size_t num_features = 0;
  std::vector<Real> features;  // rows() * num_features
  std::vector<int> labels;
  LabelEncoder encoder;
  std::vector<std::string> feature_names;
  /// Source row index for original rows, -1 for synthetic (SMOTE) rows.
  std::vector<std::int64_t> origin;

  std::size_t rows() const { return labels.size(); }
  std::size_t num_classes() const { return encoder.size(); }
  std::span<const Real> row(std::size_t i) const { return {features.data() + i * num_features, num_features}; }
  std::vector<std::size_t> class_counts() const;
  /// Copies the given rows, keeping order.
  Dataset subset(std::span<const std::size_t> indices) const;
};

enum class NumericPolicy {
  encode_categorical,  // non-numeric feature columns are label-encoded
  drop_non_numeric,    // non-numeric feature columns are discarded
};

struct LoadOptions {
  std::string label_column = "label";
  char delimiter = ',';
  NumericPolicy policy = NumericPolicy::encode_categorical;
  std::vector<std::string> drop_columns;
};

/// How raw columns became features; reapplied to evaluation files.
struct FeatureSchema {
  std::string label_column;
  std::vector<std::string> feature_names;
  std::map<std::string, LabelEncoder> categorical;  // by feature name
  std::vector<std::string> ignored_columns;
  LabelEncoder labels;
};

struct LoadResult {
  Dataset data;
  FeatureSchema schema;
  std::size_t dropped_rows = 0;
};

/// Cells treated as missing: "", "?", "NA", "N/A", "NaN", "nan", "null", "inf", ...
bool is_missing_cell(const std::string& cell);

/// Encodes a table: rows with missing or unparseable cells in any kept column
/// are dropped and counted. Throws ConfigError for a missing label column and
/// InputError when nothing usable remains.
LoadResult encode_table(const RawTable& table, const LoadOptions& options);
LoadResult load_csv(const std::string& path, const LoadOptions& options);

/// Encodes a table with an existing schema (evaluation). Rows with unknown
/// categories or labels are dropped. Throws ConfigError when the feature
/// columns do not match the schema, naming expected and actual widths.
LoadResult encode_with_schema(const RawTable& table, const FeatureSchema& schema);

struct SplitPair {
  Dataset train;
  Dataset test;
  double fraction = 0.8;
};

/// Seeded random split. Stratified mode allocates round(fraction*N) training
/// rows across classes by largest remainder, every class keeping at least one
/// row on each side. Throws ContractError if a class has < 2 rows (stratified).
SplitPair train_test_split(const Dataset& d, double fraction, std::uint64_t seed, bool stratified = true);

/// Brings every class up to the majority count with synthetic rows
///   x + lambda * (x_nn - x),  lambda ~ U[0, 1),
/// where x_nn is one of the k nearest same-class neighbours of x (Euclidean).
/// k is capped at class size - 1. Originals are kept first, in order.
/// Throws ContractError naming a minority class with a single sample.
Dataset smote_oversample(const Dataset& train, std::size_t k_neighbors, std::uint64_t seed);

/// Per-feature z-score statistics fitted on a training set.
struct Standardizer {
  std::vector<Real> mean;
  std::vector<Real> stddev;
  std::vector<std::size_t> zero_variance;  // features mapped to 0

  static Standardizer fit(const Dataset& train);
  /// [N, F, 1] model input.
  Tensor transform(const Dataset& d) const;
};

/// Standardises with train statistics and appends the channel axis.
Tensor reshape_for_model(const Dataset& d, const Standardizer& stats);

struct SynthOptions {
  std::size_t classes = 6;
  std::size_t features = 60;
  std::size_t per_class = 500;
  /// Relative class weights; the last entry repeats for remaining classes.
  /// Counts are round(per_class * w_c / max(w)).
  std::vector<double> imbalance{1.0};
  /// Peak-to-trough amplitude of the class templates, in noise standard
  /// deviations.
  double separation = 5.0;
  /// Class-dependent AR(1) noise along the feature axis instead of iid noise.
  bool sequence = true;
  /// Random per-sample template phase: class identity is then carried by
  /// frequency and autocorrelation only, not by position.
  bool phase_jitter = false;
  std::uint64_t seed = 42;
};

/// Desk-scale stand-in for an IDS feature table. Class c has a sinusoidal
/// template with c+1 cycles over the feature axis plus unit-variance noise.
Dataset synth_dataset(const SynthOptions& options);

/// Integer class counts implied by SynthOptions.
std::vector<std::size_t> synth_class_counts(const SynthOptions& options);

RawTable to_table(const Dataset& d, const std::string& label_column = "label");

}  // namespace ids
