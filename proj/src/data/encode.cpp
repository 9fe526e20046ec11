#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

#include "ids/data.hpp"
#include "ids/errors.hpp"

namespace ids {

LabelEncoder LabelEncoder::fit(std::span<const std::string> values) {
  std::set<std::string> distinct(values.begin(), values.end());
  return from_names(std::vector<std::string>(distinct.begin(), distinct.end()));
}

LabelEncoder LabelEncoder::from_names(std::vector<std::string> sorted_names) {
  LabelEncoder enc;
  if (!std::is_sorted(sorted_names.begin(), sorted_names.end()) ||
      std::adjacent_find(sorted_names.begin(), sorted_names.end()) != sorted_names.end()) {
    throw ContractError("label encoder names must be distinct and sorted");
  }
  enc.names_ = std::move(sorted_names);
  for (std::size_t i = 0; i < enc.names_.size(); ++i) enc.index_[enc.names_[i]] = static_cast<int>(i);
  return enc;
}

int LabelEncoder::encode(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown class '" + name + "'");
  return it->second;
}

const std::string& LabelEncoder::decode(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= names_.size()) {
    throw ContractError("class index " + std::to_string(index) + " out of range");
  }
  return names_[static_cast<std::size_t>(index)];
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_features = num_features;
  out.encoder = encoder;
  out.feature_names = feature_names;
  out.features.reserve(indices.size() * num_features);
  for (std::size_t i : indices) {
    const auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
    out.origin.push_back(origin[i]);
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& cell, Real& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  const char* begin = t.data();
  if (*begin == '+') ++begin;
  double value = 0;
  auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(value)) return false;
  out = static_cast<Real>(value);
  return true;
}

std::size_t column_index(const std::vector<std::string>& columns, const std::string& name) {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ConfigError("column '" + name + "' not found in header");
  return static_cast<std::size_t>(it - columns.begin());
}

}  // namespace

bool is_missing_cell(const std::string& cell) {
  static const std::set<std::string> markers{"",    "?",   "NA",  "N/A", "na",   "NaN",  "nan",
                                             "NULL", "null", "None", "inf", "-inf", "Infinity", "-Infinity"};
  return markers.count(trim(cell)) > 0;
}

LoadResult encode_table(const RawTable& table, const LoadOptions& options) {
  table.check_rectangular();
  const std::size_t label_col = column_index(table.columns, options.label_column);
  std::set<std::size_t> ignored;
  for (const auto& name : options.drop_columns) ignored.insert(column_index(table.columns, name));
  if (ignored.count(label_col)) throw ConfigError("label column '" + options.label_column + "' cannot be dropped");

  LoadResult result;
  result.schema.label_column = options.label_column;

  // A feature column is numeric when every non-missing cell parses.
  std::vector<std::size_t> feature_cols;
  std::vector<bool> categorical;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c == label_col) continue;
    if (ignored.count(c)) {
      result.schema.ignored_columns.push_back(table.columns[c]);
      continue;
    }
    bool numeric = true;
    Real scratch;
    for (const auto& row : table.rows) {
      if (!is_missing_cell(row[c]) && !parse_number(row[c], scratch)) {
        numeric = false;
        break;
      }
    }
    if (!numeric && options.policy == NumericPolicy::drop_non_numeric) {
      result.schema.ignored_columns.push_back(table.columns[c]);
      continue;
    }
    feature_cols.push_back(c);
    categorical.push_back(!numeric);
  }
  if (feature_cols.empty()) throw InputError("no usable feature columns");

  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    bool ok = !is_missing_cell(row[label_col]);
    for (std::size_t j = 0; ok && j < feature_cols.size(); ++j) ok = !is_missing_cell(row[feature_cols[j]]);
    if (ok) kept.push_back(r);
  }
  result.dropped_rows = table.rows.size() - kept.size();
  if (kept.empty()) throw InputError("no rows left after dropping rows with missing cells");

  std::vector<std::string> label_cells;
  for (std::size_t r : kept) label_cells.push_back(trim(table.rows[r][label_col]));
  result.schema.labels = LabelEncoder::fit(label_cells);

  for (std::size_t j = 0; j < feature_cols.size(); ++j) {
    const std::string& name = table.columns[feature_cols[j]];
    result.schema.feature_names.push_back(name);
    if (categorical[j]) {
      std::vector<std::string> cells;
      for (std::size_t r : kept) cells.push_back(trim(table.rows[r][feature_cols[j]]));
      result.schema.categorical[name] = LabelEncoder::fit(cells);
    }
  }

  Dataset& d = result.data;
  d.num_features = feature_cols.size();
  d.feature_names = result.schema.feature_names;
  d.encoder = result.schema.labels;
  d.features.reserve(kept.size() * d.num_features);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& row = table.rows[kept[i]];
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      Real v = 0;
      if (categorical[j]) {
        v = static_cast<Real>(result.schema.categorical.at(d.feature_names[j]).encode(trim(row[feature_cols[j]])));
      } else {
        parse_number(row[feature_cols[j]], v);
      }
      d.features.push_back(v);
    }
    d.labels.push_back(d.encoder.encode(label_cells[i]));
    d.origin.push_back(static_cast<std::int64_t>(kept[i]));
  }
  return result;
}

LoadResult load_csv(const std::string& path, const LoadOptions& options) {
  return encode_table(read_csv(path, options.delimiter), options);
}

LoadResult encode_with_schema(const RawTable& table, const FeatureSchema& schema) {
  table.check_rectangular();
  const std::size_t label_col = column_index(table.columns, schema.label_column);
  std::vector<std::string> present;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c == label_col) continue;
    if (std::find(schema.ignored_columns.begin(), schema.ignored_columns.end(), table.columns[c]) !=
        schema.ignored_columns.end()) {
      continue;
    }
    present.push_back(table.columns[c]);
  }
  const std::size_t expected = schema.feature_names.size();
  if (present.size() != expected) {
    throw ConfigError("feature width mismatch: model expects F=" + std::to_string(expected) + ", data has F=" +
                      std::to_string(present.size()));
  }
  std::vector<std::size_t> cols;
  for (const auto& name : schema.feature_names) {
    auto it = std::find(table.columns.begin(), table.columns.end(), name);
    if (it == table.columns.end()) {
      throw ConfigError("feature width mismatch: model expects F=" + std::to_string(expected) +
                        " including column '" + name + "', which the data lacks");
    }
    cols.push_back(static_cast<std::size_t>(it - table.columns.begin()));
  }

  LoadResult result;
  result.schema = schema;
  Dataset& d = result.data;
  d.num_features = expected;
  d.feature_names = schema.feature_names;
  d.encoder = schema.labels;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string label = trim(row[label_col]);
    bool ok = d.encoder.contains(label);
    std::vector<Real> values(expected);
    for (std::size_t j = 0; ok && j < expected; ++j) {
      const std::string cell = trim(row[cols[j]]);
      auto cat = schema.categorical.find(schema.feature_names[j]);
      if (cat != schema.categorical.end()) {
        ok = cat->second.contains(cell);
        if (ok) values[j] = static_cast<Real>(cat->second.encode(cell));
      } else {
        ok = !is_missing_cell(cell) && parse_number(cell, values[j]);
      }
    }
    if (!ok) {
      ++result.dropped_rows;
      continue;
    }
    d.features.insert(d.features.end(), values.begin(), values.end());
    d.labels.push_back(d.encoder.encode(label));
    d.origin.push_back(static_cast<std::int64_t>(r));
  }
  if (d.rows() == 0) throw InputError("no rows left after applying the feature schema");
  return result;
}

RawTable to_table(const Dataset& d, const std::string& label_column) {
  RawTable t;
  t.columns = d.feature_names;
  t.columns.push_back(label_column);
  char buf[32];
  for (std::size_t i = 0; i < d.rows(); ++i) {
    std::vector<std::string> cells;
    cells.reserve(d.num_features + 1);
    for (Real v : d.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
      cells.emplace_back(buf);
    }
    cells.push_back(d.encoder.decode(d.labels[i]));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace ids
