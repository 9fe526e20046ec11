#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "ids/app.hpp"
#include "ids/checkpoint.hpp"
#include "ids/errors.hpp"

namespace ids {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  for (std::size_t n = 1; std::getline(ss, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(n) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("config key '" + key + "' given twice");
  }
  return kv;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

void apply_settings(const KeyValues& kv, RunSettings& s) {
  for (const auto& [key, v] : kv) {
    auto size = [&] { return parse_number<std::size_t>(key, v); };
    auto real = [&] { return static_cast<Real>(parse_number<double>(key, v)); };
    auto flag = [&] { return parse_bool(key, v); };
    if (key == "label_column") {
      s.load.label_column = v;
    } else if (key == "delimiter") {
      if (v.size() != 1) throw ConfigError("config key 'delimiter': expected one character");
      s.load.delimiter = v[0];
    } else if (key == "policy") {
      if (v == "encode") {
        s.load.policy = NumericPolicy::encode_categorical;
      } else if (v == "drop") {
        s.load.policy = NumericPolicy::drop_non_numeric;
      } else {
        throw ConfigError("config key 'policy': expected encode or drop");
      }
    } else if (key == "drop_columns") {
      s.load.drop_columns = split_list(v, ',');
    } else if (key == "epochs") {
      s.train.epochs = size();
    } else if (key == "batch_size") {
      s.train.batch_size = size();
    } else if (key == "lr") {
      s.train.lr = real();
    } else if (key == "seed") {
      s.train.seed = parse_number<std::uint64_t>(key, v);
    } else if (key == "validation_fraction") {
      s.train.validation_fraction = parse_number<double>(key, v);
    } else if (key == "train_fraction") {
      s.train_fraction = parse_number<double>(key, v);
    } else if (key == "smote") {
      s.model.use_smote = flag();
    } else if (key == "smote_k") {
      s.smote_k = size();
    } else if (key == "use_resnet_block") {
      s.model.use_resnet_block = flag();
    } else if (key == "use_bigru") {
      s.model.use_bigru = flag();
    } else if (key == "use_mha") {
      s.model.use_mha = flag();
    } else if (key == "conv_filters") {
      s.model.conv_filters = size();
    } else if (key == "conv_kernel") {
      s.model.conv_kernel = size();
    } else if (key == "gru_units") {
      s.model.gru_units = size();
    } else if (key == "num_heads") {
      s.model.num_heads = size();
    } else if (key == "key_dim") {
      s.model.key_dim = size();
    } else if (key == "dropout_rate") {
      s.model.dropout_rate = real();
    } else if (key == "dense_units") {
      s.model.dense_units.clear();
      for (const auto& u : split_list(v, ',')) s.model.dense_units.push_back(parse_number<std::size_t>(key, u));
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  if (!(s.train_fraction > 0 && s.train_fraction < 1)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (!(s.train.validation_fraction > 0 && s.train.validation_fraction < 1)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
  if (s.smote_k == 0) throw ConfigError("smote_k must be >= 1");
}

nlohmann::json to_json(const RunSettings& s) {
  return {{"label_column", s.load.label_column},
          {"delimiter", std::string(1, s.load.delimiter)},
          {"policy", s.load.policy == NumericPolicy::encode_categorical ? "encode" : "drop"},
          {"drop_columns", s.load.drop_columns},
          {"epochs", s.train.epochs},
          {"batch_size", s.train.batch_size},
          {"lr", s.train.lr},
          {"seed", s.train.seed},
          {"validation_fraction", s.train.validation_fraction},
          {"train_fraction", s.train_fraction},
          {"smote_k", s.smote_k},
          {"model", to_json(s.model)}};
}

SeedPlan derive_seeds(std::uint64_t master) {
  // splitmix64 sequence
  std::uint64_t state = master;
  auto next = [&state] {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  SeedPlan p{};
  p.split = next();
  p.validation = next();
  p.smote = next();
  p.model = next();
  p.shuffle = next();
  return p;
}

DatasetFingerprint fingerprint(const std::string& path, const RawTable& table) {
  return {table.rows.size(), table.columns.size(), sha256_file(path)};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

nlohmann::json to_json(const RunManifest& m) {
  return {{"command", m.command},
          {"config", m.config},
          {"seed", m.seed},
          {"dataset", {{"rows", m.dataset.rows}, {"columns", m.dataset.columns}, {"sha256", m.dataset.sha256}}},
          {"tool_version", m.tool_version},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at},
          {"outputs", m.outputs}};
}

void write_manifest(const std::string& dir, const RunManifest& m) {
  const std::string path = dir + "/manifest.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << to_json(m).dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace ids
