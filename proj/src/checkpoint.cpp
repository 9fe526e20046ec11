#include "ids/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <openssl/evp.h>

#include "ids/errors.hpp"

namespace ids {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'I', 'D', 'S', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> buf, std::string path) : buf_(std::move(buf)), path_(std::move(path)) {}
  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (n > buf_.size() - pos_) throw IoError(path_ + ": truncated checkpoint");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json encoder_json(const LabelEncoder& e) { return e.class_names(); }

LabelEncoder encoder_from(const nlohmann::json& j) { return LabelEncoder::from_names(j.get<std::vector<std::string>>()); }

}  // namespace

nlohmann::json to_json(const FeatureSchema& schema) {
  nlohmann::json categorical = nlohmann::json::object();
  for (const auto& [name, enc] : schema.categorical) categorical[name] = encoder_json(enc);
  return {{"label_column", schema.label_column},
          {"feature_names", schema.feature_names},
          {"categorical", categorical},
          {"ignored_columns", schema.ignored_columns},
          {"labels", encoder_json(schema.labels)}};
}

FeatureSchema feature_schema_from_json(const nlohmann::json& j) {
  FeatureSchema s;
  s.label_column = j.at("label_column").get<std::string>();
  s.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& [name, names] : j.at("categorical").items()) s.categorical.emplace(name, encoder_from(names));
  s.ignored_columns = j.at("ignored_columns").get<std::vector<std::string>>();
  s.labels = encoder_from(j.at("labels"));
  return s;
}

nlohmann::json to_json(const Standardizer& s) {
  std::vector<double> mean(s.mean.begin(), s.mean.end()), stddev(s.stddev.begin(), s.stddev.end());
  return {{"mean", mean}, {"stddev", stddev}, {"zero_variance", s.zero_variance}};
}

Standardizer standardizer_from_json(const nlohmann::json& j) {
  Standardizer s;
  for (double v : j.at("mean").get<std::vector<double>>()) s.mean.push_back(Real(v));
  for (double v : j.at("stddev").get<std::vector<double>>()) s.stddev.push_back(Real(v));
  s.zero_variance = j.at("zero_variance").get<std::vector<std::size_t>>();
  return s;
}

void save_checkpoint(const std::string& path, const Model& model, const Checkpoint& meta) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  const nlohmann::json j = {{"model", to_json(meta.config)},
                            {"schema", to_json(meta.schema)},
                            {"standardizer", to_json(meta.standardizer)},
                            {"extra", meta.extra}};
  const std::string text = j.dump();
  w.put<std::uint64_t>(text.size());
  w.bytes(text.data(), text.size());

  const auto params = model.named_parameters();
  w.put<std::uint64_t>(params.size());
  for (const NamedVar& p : params) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    const Tensor& t = p.var.value();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
    for (Real v : t.data()) w.put<double>(static_cast<double>(v));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  Reader r(read_all(path), path);
  if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) throw IoError(path + ": not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = r.get<std::uint64_t>();
  const char* meta_text = r.take(meta_len);

  Checkpoint meta;
  try {
    const auto j = nlohmann::json::parse(meta_text, meta_text + meta_len);
    meta.config = model_config_from_json(j.at("model"));
    meta.schema = feature_schema_from_json(j.at("schema"));
    meta.standardizer = standardizer_from_json(j.at("standardizer"));
    meta.extra = j.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad checkpoint metadata: " + e.what());
  }

  Model model = build_model(meta.config, std::uint64_t{0});
  std::map<std::string, Var> by_name;
  for (const NamedVar& p : model.named_parameters()) by_name.emplace(p.name, p.var);

  const auto count = r.get<std::uint64_t>();
  if (count != by_name.size()) {
    throw ConfigError(path + ": checkpoint holds " + std::to_string(count) + " tensors, architecture needs " +
                      std::to_string(by_name.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name(r.take(name_len), name_len);
    const auto rank = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError(path + ": unexpected tensor " + name);
    Tensor& target = it->second.mutable_value();
    if (target.shape() != shape) {
      throw ConfigError(path + ": tensor " + name + " has shape " + to_string(shape) + ", architecture expects " +
                        to_string(target.shape()));
    }
    for (Real& v : target.data()) v = static_cast<Real>(r.get<double>());
    by_name.erase(it);
  }
  if (!r.done()) throw IoError(path + ": trailing bytes after tensors");
  return {std::move(meta), std::move(model)};
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  const std::vector<char> buf = read_all(path);
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(buf.data()), buf.size()});
}

}  // namespace ids
