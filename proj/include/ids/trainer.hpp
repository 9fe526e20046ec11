#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ids/model.hpp"

namespace ids {

/// -(1/B) sum_i log(max(probs[i, y_i], floor)). probs: [B, K].
/// Throws ContractError for labels outside 0..K-1.
Var cross_entropy_loss(Tape& tape, const Var& probs, std::span<const int> labels, Real floor = Real(1e-12));

struct AdamConfig {
  Real lr = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real epsilon = Real(1e-8);
};

/// First/second moment estimates, one pair per parameter.
struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
};

AdamState make_adam_state(std::span<const Var> params, const AdamConfig& config = {});

/// One bias-corrected Adam update from the gradients held by `params`
/// (a missing gradient counts as zero). Increments s.t by one.
void adam_step(std::span<const Var> params, AdamState& s);

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 128;
  Real lr = Real(1e-3);
  std::uint64_t seed = 42;
  /// Share of the training split held out for validation curves.
  double validation_fraction = 0.1;
};

struct EpochRecord {
  std::size_t epoch = 0;
  Real train_loss = 0;
  Real train_accuracy = 0;
  Real val_loss = 0;
  Real val_accuracy = 0;
  double wall_time_seconds = 0;
};

/// Model-ready inputs [N, T, C] with labels.
struct LabeledTensor {
  Tensor x;
  std::vector<int> y;
  std::size_t rows() const { return y.size(); }
};

/// Rows `indices` of a [N, ...] tensor.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);

struct Evaluation {
  Real loss = 0;
  Real accuracy = 0;
  Tensor probabilities;  // [N, K]
  std::vector<int> predictions;
};

/// Infer-mode pass over the whole set in batches.
Evaluation evaluate(const Model& model, const LabeledTensor& data, std::size_t batch_size = 256);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on categorical cross-entropy. Batches are reshuffled every
/// epoch from `cfg.seed`; updates run in train mode and validation in infer
/// mode. Throws NumericError naming epoch and batch on a non-finite loss.
std::vector<EpochRecord> train(Model& model, const LabeledTensor& train_set, const LabeledTensor& validation,
                               const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Median wall time of `repetitions` infer-mode passes over `batch` divided by
/// the batch size, after one warm-up pass. Needs repetitions >= 10.
double measure_inference(const Model& model, const Tensor& batch, std::size_t repetitions = 20);

/// Keeps freed heap memory mapped so that large per-batch activations are
/// reused instead of being faulted in on every pass. Process-wide; no-op
/// outside glibc.
void retain_freed_memory();

/// epoch,train_loss,train_acc,val_loss,val_acc,seconds
void write_epoch_csv(const std::string& path, std::span<const EpochRecord> records);

}  // namespace ids
