#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ids/layers.hpp"

namespace ids {

/// Declarative architecture description. Defaults are the flagship
/// ResNet-1D / BiGRU / multi-head attention network for 60-feature input.
struct ModelConfig {
  std::size_t time_steps = 60;
  std::size_t channels = 1;
  bool use_resnet_block = true;
  bool use_bigru = true;
  bool use_mha = true;
  std::size_t conv_filters = 64;
  std::size_t conv_kernel = 3;
  std::size_t gru_units = 64;
  std::size_t num_heads = 4;
  std::size_t key_dim = 64;
  Real dropout_rate = Real(0.5);
  std::vector<std::size_t> dense_units{64, 32};
  std::size_t num_classes = 6;
  /// Pipeline flag: oversample the training split before fitting.
  bool use_smote = true;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
  /// Architecture name such as "ResNet-1D-BiGRU-MHA".
  std::string architecture_name() const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct AblationCase {
  int id = 0;
  std::string label;
  ModelConfig config;
};

/// The ten ablation variants, derived from `base` (normally the flagship):
///  #1 ResNet-1D only        #2 BiGRU-MHA          #3 ResNet-1D-BiGRU
///  #4 two heads             #5 base               #6 eight heads
///  #7 dropout 0.3           #8 dropout 0.7        #9 one hidden dense layer
///  #10 base without SMOTE
std::vector<AblationCase> ablation_grid(const ModelConfig& base = ModelConfig{});

/// Output shape of a named stage, batch axis excluded.
struct Stage {
  std::string name;
  Shape shape;
  bool operator==(const Stage&) const = default;
};

class Model {
 public:
  const ModelConfig& config() const { return cfg_; }

  /// batch: [B, time_steps, channels] -> class probabilities [B, num_classes].
  /// `rng` drives dropout in train mode. When `trace` is given, the output
  /// shape of every stage is appended to it.
  Var forward(Tape& tape, const Var& batch, Mode mode, Rng& rng, std::vector<Stage>* trace = nullptr) const;

  /// Infer-mode forward without recording.
  Tensor predict(const Tensor& batch) const;

  std::vector<NamedVar> named_parameters() const;
  std::vector<Var> trainable_parameters() const;
  std::size_t parameter_count() const;
  /// Shape chain computed when the model was built.
  const std::vector<Stage>& stages() const { return stages_; }

  friend Model build_model(const ModelConfig& cfg, Rng& rng);

 private:
  struct ResNetBlock {
    Conv1DParams conv1;
    BatchNormParams bn1;
    Conv1DParams conv2;
    BatchNormParams bn2;
    Conv1DParams shortcut;
  };

  ModelConfig cfg_;
  std::optional<ResNetBlock> resnet_;
  std::optional<BiGRUParams> bigru_;
  std::optional<LayerNormParams> layernorm_;
  std::optional<MHAParams> mha_;
  std::vector<DenseParams> dense_;
  std::vector<Stage> stages_;
};

Model build_model(const ModelConfig& cfg, Rng& rng);
Model build_model(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace ids
