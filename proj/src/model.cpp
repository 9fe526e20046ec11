#include "ids/model.hpp"

#include "ids/errors.hpp"

namespace ids {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid model config: " + what); };
  if (!use_resnet_block && !use_bigru) fail("at least one of use_resnet_block / use_bigru must be true");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) fail("dropout_rate must lie in [0, 1)");
  if (time_steps == 0 || channels == 0) fail("input shape must be positive");
  if (use_resnet_block && (conv_filters == 0 || conv_kernel == 0)) fail("conv_filters and conv_kernel must be >= 1");
  if (use_bigru && gru_units == 0) fail("gru_units must be >= 1");
  if (use_mha && (num_heads == 0 || key_dim == 0)) fail("num_heads and key_dim must be >= 1");
  for (auto u : dense_units) {
    if (u == 0) fail("dense_units entries must be >= 1");
  }
}

std::string ModelConfig::architecture_name() const {
  std::string name;
  auto append = [&](const char* part) {
    if (!name.empty()) name += "-";
    name += part;
  };
  if (use_resnet_block) append("ResNet-1D");
  if (use_bigru) append("BiGRU");
  if (use_mha) append("MHA");
  return name;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {
      {"time_steps", cfg.time_steps},     {"channels", cfg.channels},
      {"use_resnet_block", cfg.use_resnet_block}, {"use_bigru", cfg.use_bigru},
      {"use_mha", cfg.use_mha},           {"conv_filters", cfg.conv_filters},
      {"conv_kernel", cfg.conv_kernel},   {"gru_units", cfg.gru_units},
      {"num_heads", cfg.num_heads},       {"key_dim", cfg.key_dim},
      {"dropout_rate", cfg.dropout_rate}, {"dense_units", cfg.dense_units},
      {"num_classes", cfg.num_classes},   {"use_smote", cfg.use_smote},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.time_steps = j.at("time_steps").get<std::size_t>();
  cfg.channels = j.at("channels").get<std::size_t>();
  cfg.use_resnet_block = j.at("use_resnet_block").get<bool>();
  cfg.use_bigru = j.at("use_bigru").get<bool>();
  cfg.use_mha = j.at("use_mha").get<bool>();
  cfg.conv_filters = j.at("conv_filters").get<std::size_t>();
  cfg.conv_kernel = j.at("conv_kernel").get<std::size_t>();
  cfg.gru_units = j.at("gru_units").get<std::size_t>();
  cfg.num_heads = j.at("num_heads").get<std::size_t>();
  cfg.key_dim = j.at("key_dim").get<std::size_t>();
  cfg.dropout_rate = j.at("dropout_rate").get<Real>();
  cfg.dense_units = j.at("dense_units").get<std::vector<std::size_t>>();
  cfg.num_classes = j.at("num_classes").get<std::size_t>();
  cfg.use_smote = j.at("use_smote").get<bool>();
  cfg.validate();
  return cfg;
}

std::vector<AblationCase> ablation_grid(const ModelConfig& base) {
  std::vector<AblationCase> grid;
  auto add = [&](int id, std::string label, ModelConfig cfg) { grid.push_back({id, std::move(label), std::move(cfg)}); };

  ModelConfig c1 = base;
  c1.use_bigru = false;
  c1.use_mha = false;
  add(1, "ResNet-1D", c1);

  ModelConfig c2 = base;
  c2.use_resnet_block = false;
  add(2, "BiGRU-MHA", c2);

  ModelConfig c3 = base;
  c3.use_mha = false;
  add(3, "ResNet-1D-BiGRU", c3);

  ModelConfig c4 = base;
  c4.num_heads = 2;
  add(4, "ResNet-1D-BiGRU-MHA", c4);

  add(5, "ResNet-1D-BiGRU-MHA", base);

  ModelConfig c6 = base;
  c6.num_heads = 8;
  add(6, "ResNet-1D-BiGRU-MHA", c6);

  ModelConfig c7 = base;
  c7.dropout_rate = Real(0.3);
  add(7, "ResNet-1D-BiGRU-MHA", c7);

  ModelConfig c8 = base;
  c8.dropout_rate = Real(0.7);
  add(8, "ResNet-1D-BiGRU-MHA", c8);

  ModelConfig c9 = base;
  if (!c9.dense_units.empty()) c9.dense_units.pop_back();
  add(9, "ResNet-1D-BiGRU-MHA with only 2 dense layers", c9);

  ModelConfig c10 = base;
  c10.use_smote = false;
  add(10, "ResNet-1D-BiGRU-MHA without SMOTE technique", c10);
  return grid;
}

Model build_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  const std::size_t steps = cfg.time_steps;
  std::size_t width = cfg.channels;

  if (cfg.use_resnet_block) {
    Model::ResNetBlock block;
    block.conv1 = make_conv1d(width, cfg.conv_filters, cfg.conv_kernel, rng);
    block.bn1 = make_batchnorm(cfg.conv_filters);
    block.conv2 = make_conv1d(cfg.conv_filters, cfg.conv_filters, cfg.conv_kernel, rng);
    block.bn2 = make_batchnorm(cfg.conv_filters);
    block.shortcut = make_conv1d(width, cfg.conv_filters, 1, rng);
    m.resnet_ = std::move(block);
    width = cfg.conv_filters;
    m.stages_.push_back({"resnet", {steps, width}});
  }
  if (cfg.use_bigru) {
    m.bigru_ = make_bigru(width, cfg.gru_units, rng);
    width = 2 * cfg.gru_units;
    m.stages_.push_back({"bigru", {steps, width}});
    m.layernorm_ = make_layernorm(width);
    m.stages_.push_back({"layernorm", {steps, width}});
  }
  if (cfg.use_mha) {
    m.mha_ = make_mha(width, cfg.num_heads, cfg.key_dim, rng);
    m.stages_.push_back({"mha", {steps, width}});
  }
  m.stages_.push_back({"dropout", {steps, width}});
  std::size_t features = steps * width;
  m.stages_.push_back({"flatten", {features}});
  for (std::size_t i = 0; i < cfg.dense_units.size(); ++i) {
    m.dense_.push_back(make_dense(features, cfg.dense_units[i], DenseActivation::relu, rng));
    features = cfg.dense_units[i];
    m.stages_.push_back({"dense_" + std::to_string(i), {features}});
  }
  m.dense_.push_back(make_dense(features, cfg.num_classes, DenseActivation::softmax, rng));
  m.stages_.push_back({"output", {cfg.num_classes}});
  return m;
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return build_model(cfg, rng);
}

Var Model::forward(Tape& tape, const Var& batch, Mode mode, Rng& rng, std::vector<Stage>* trace) const {
  const Shape& bs = batch.shape();
  if (bs.size() != 3 || bs[1] != cfg_.time_steps || bs[2] != cfg_.channels) {
    throw DimensionError("model input " + to_string(bs) + " does not match [B, " + std::to_string(cfg_.time_steps) +
                         ", " + std::to_string(cfg_.channels) + "]");
  }
  const std::size_t n = bs[0];
  auto note = [&](const char* name, const Var& v) {
    if (trace) trace->push_back({name, Shape(v.shape().begin() + 1, v.shape().end())});
  };

  Var h = batch;
  if (resnet_) {
    Var main = conv1d_forward(tape, h, resnet_->conv1);
    main = relu(tape, batchnorm_forward(tape, main, resnet_->bn1, mode));
    main = batchnorm_forward(tape, conv1d_forward(tape, main, resnet_->conv2), resnet_->bn2, mode);
    const Var shortcut = conv1d_forward(tape, h, resnet_->shortcut);
    h = relu(tape, add(tape, main, shortcut));
    note("resnet", h);
  }
  if (bigru_) {
    h = bigru_forward(tape, h, bigru_->forward, bigru_->backward);
    note("bigru", h);
    h = layernorm_forward(tape, h, *layernorm_);
    note("layernorm", h);
  }
  if (mha_) {
    h = multi_head_attention(tape, h, *mha_);
    note("mha", h);
  }
  h = dropout_forward(tape, h, cfg_.dropout_rate, mode, rng);
  note("dropout", h);
  h = reshape(tape, h, {n, h.value().size() / n});
  note("flatten", h);
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    h = dense_forward(tape, h, dense_[i]);
    if (i + 1 < dense_.size()) {
      if (trace) trace->push_back({"dense_" + std::to_string(i), {h.shape()[1]}});
    } else {
      note("output", h);
    }
  }
  return h;
}

Tensor Model::predict(const Tensor& batch) const {
  Tape tape(false);
  Rng unused(0);
  return forward(tape, Var(batch), Mode::infer, unused).value();
}

std::vector<NamedVar> Model::named_parameters() const {
  std::vector<NamedVar> out;
  if (resnet_) {
    resnet_->conv1.collect("resnet.conv1", out);
    resnet_->bn1.collect("resnet.bn1", out);
    resnet_->conv2.collect("resnet.conv2", out);
    resnet_->bn2.collect("resnet.bn2", out);
    resnet_->shortcut.collect("resnet.shortcut", out);
  }
  if (bigru_) {
    bigru_->collect("bigru", out);
    layernorm_->collect("layernorm", out);
  }
  if (mha_) mha_->collect("mha", out);
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    dense_[i].collect(i + 1 < dense_.size() ? "dense_" + std::to_string(i) : std::string("output"), out);
  }
  return out;
}

std::vector<Var> Model::trainable_parameters() const {
  std::vector<Var> out;
  for (const NamedVar& p : named_parameters()) {
    if (p.trainable) out.push_back(p.var);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t count = 0;
  for (const Var& v : trainable_parameters()) count += v.value().size();
  return count;
}

}  // namespace ids
