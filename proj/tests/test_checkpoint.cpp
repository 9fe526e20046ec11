#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "ids/checkpoint.hpp"
#include "ids/errors.hpp"
#include "support.hpp"

using namespace ids;
using ids::testing::random_tensor;
using ids::testing::TempDir;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.time_steps = 8;
  c.conv_filters = 4;
  c.gru_units = 3;
  c.num_heads = 2;
  c.key_dim = 2;
  c.dense_units = {6, 5};
  c.num_classes = 3;
  return c;
}

Checkpoint make_meta(const ModelConfig& cfg) {
  const RawTable table{{"a", "proto", "b", "c", "d", "e", "f", "g", "label"},
                       {{"1", "tcp", "2", "3", "4", "5", "6", "7", "dos"},
                        {"2", "udp", "1", "0", "4", "5", "6", "9", "normal"},
                        {"0", "tcp", "2", "3", "1", "5", "2", "7", "scan"}}};
  const LoadResult loaded = encode_table(table, LoadOptions{});
  Checkpoint meta;
  meta.config = cfg;
  meta.schema = loaded.schema;
  meta.standardizer = Standardizer::fit(loaded.data);
  meta.extra = {{"note", "unit"}};
  return meta;
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream(path, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Checkpoint, RoundTripReproducesPredictionsAndMetadata) {
  TempDir dir("ckpt");
  const ModelConfig cfg = small_config();
  const Model model = build_model(cfg, 21);
  const Checkpoint meta = make_meta(cfg);
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(path, model, meta);

  const LoadedCheckpoint loaded = load_checkpoint(path);
  Rng rng(3);
  const Tensor x = random_tensor({5, 8, 1}, rng);
  EXPECT_EQ(loaded.model.predict(x), model.predict(x));
  EXPECT_EQ(loaded.model.config().architecture_name(), cfg.architecture_name());
  EXPECT_EQ(loaded.meta.schema.feature_names, meta.schema.feature_names);
  EXPECT_EQ(loaded.meta.schema.labels.class_names(), meta.schema.labels.class_names());
  EXPECT_EQ(loaded.meta.schema.categorical.at("proto").class_names(), meta.schema.categorical.at("proto").class_names());
  EXPECT_EQ(loaded.meta.standardizer.mean, meta.standardizer.mean);
  EXPECT_EQ(loaded.meta.standardizer.stddev, meta.standardizer.stddev);
  EXPECT_EQ(loaded.meta.extra, meta.extra);
}

TEST(Checkpoint, RunningStatisticsAreStored) {
  TempDir dir("ckpt");
  const ModelConfig cfg = small_config();
  Model model = build_model(cfg, 22);
  // A train-mode pass moves the batch-norm running statistics off their init.
  Tape tape;
  Rng rng(4);
  model.forward(tape, Var(random_tensor({6, 8, 1}, rng)), Mode::train, rng);
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(path, model, make_meta(cfg));
  const LoadedCheckpoint loaded = load_checkpoint(path);
  const auto a = model.named_parameters(), b = loaded.model.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].var.value(), b[i].var.value()) << a[i].name;
  }
}

TEST(Checkpoint, SavingTwiceIsByteIdentical) {
  TempDir dir("ckpt");
  const ModelConfig cfg = small_config();
  const Model model = build_model(cfg, 23);
  save_checkpoint(dir.file("a.ckpt"), model, make_meta(cfg));
  save_checkpoint(dir.file("b.ckpt"), model, make_meta(cfg));
  EXPECT_EQ(sha256_file(dir.file("a.ckpt")), sha256_file(dir.file("b.ckpt")));
}

TEST(Checkpoint, CorruptHeadersAreIoErrors) {
  TempDir dir("ckpt");
  const ModelConfig cfg = small_config();
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(path, build_model(cfg, 24), make_meta(cfg));
  const std::vector<char> good = read_bytes(path);

  std::vector<char> bad_magic = good;
  bad_magic[0] = 'X';
  write_bytes(path, bad_magic);
  EXPECT_THROW(load_checkpoint(path), IoError);

  std::vector<char> bad_version = good;
  const std::uint32_t v = 99;
  std::memcpy(bad_version.data() + 8, &v, sizeof v);
  write_bytes(path, bad_version);
  EXPECT_THROW(load_checkpoint(path), IoError);

  write_bytes(path, std::vector<char>(good.begin(), good.end() - 5));
  EXPECT_THROW(load_checkpoint(path), IoError);

  std::vector<char> trailing = good;
  trailing.push_back('\0');
  write_bytes(path, trailing);
  EXPECT_THROW(load_checkpoint(path), IoError);

  EXPECT_THROW(load_checkpoint(dir.file("missing.ckpt")), IoError);
}

TEST(Checkpoint, ArchitectureMismatchIsConfigError) {
  TempDir dir("ckpt");
  // Weights of one architecture under the metadata of another.
  ModelConfig wide = small_config();
  wide.gru_units = 5;
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(path, build_model(wide, 25), make_meta(small_config()));
  EXPECT_THROW(load_checkpoint(path), ConfigError);

  ModelConfig no_mha = small_config();
  no_mha.use_mha = false;
  save_checkpoint(path, build_model(no_mha, 25), make_meta(small_config()));
  EXPECT_THROW(load_checkpoint(path), ConfigError);
}

TEST(Sha256, KnownVectors) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex({}), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  TempDir dir("sha");
  EXPECT_EQ(sha256_file(dir.file("abc.txt", "abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
