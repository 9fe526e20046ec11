#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ids/autodiff.hpp"

namespace ids {

using Rng = std::mt19937_64;

enum class Mode { train, infer };

/// A parameter or buffer with its checkpoint name. Buffers (BatchNorm running
/// statistics) are Vars without requires_grad.
struct NamedVar {
  std::string name;
  Var var;
  bool trainable = true;
};

/// Glorot/Xavier uniform: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// ---------------------------------------------------------------------------
// Conv1D

enum class Padding { same, valid };

/// Kernel layout is [out_channels, in_channels, kernel_size]; the layer is a
/// cross-correlation (no kernel flip) over the time axis of [B, T, C] input.
struct Conv1DParams {
  Var kernel;
  Var bias;
  std::size_t stride = 1;
  Padding padding = Padding::same;

  std::size_t out_channels() const { return kernel.shape()[0]; }
  std::size_t in_channels() const { return kernel.shape()[1]; }
  std::size_t kernel_size() const { return kernel.shape()[2]; }
  void collect(const std::string& prefix, std::vector<NamedVar>& out) const;
};

Conv1DParams make_conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size, Rng& rng,
                         Padding padding = Padding::same, std::size_t stride = 1);
std::size_t conv1d_output_length(std::size_t length, const Conv1DParams& p);
/// x: [T, C_in] or [B, T, C_in].
Var conv1d_forward(Tape& tape, const Var& x, const Conv1DParams& p);

// ---------------------------------------------------------------------------
// BatchNorm over every axis but the last (channel) one.

struct BatchNormParams {
  Var gamma;
  Var beta;
  Var running_mean;
  Var running_var;
  Real momentum = Real(0.99);
  Real epsilon = Real(1e-3);

  void collect(const std::string& prefix, std::vector<NamedVar>& out) const;
};

BatchNormParams make_batchnorm(std::size_t channels);
/// Train mode normalises with batch statistics and folds them into the running
/// statistics (the buffers shared through p); infer mode reads them only.
Var batchnorm_forward(Tape& tape, const Var& x, const BatchNormParams& p, Mode mode);

// ---------------------------------------------------------------------------
// GRU

/// Input weights are stored [input, hidden] and recurrent weights
/// [hidden, hidden], so a gate pre-activation is x W + h U + b.
struct GRUParams {
  Var w_update, u_update, b_update;
  Var w_reset, u_reset, b_reset;
  Var w_candidate, u_candidate, b_candidate;

  std::size_t input_size() const { return w_update.shape()[0]; }
  std::size_t hidden_size() const { return u_update.shape()[0]; }
  void collect(const std::string& prefix, std::vector<NamedVar>& out) const;
};

GRUParams make_gru(std::size_t input_size, std::size_t hidden_size, Rng& rng);

/// One recurrence step:
///   z = sigmoid(x W_z + h U_z + b_z)
///   r = sigmoid(x W_r + h U_r + b_r)
///   c = tanh(x W_h + (r * h) U_h + b_h)
///   h' = (1 - z) * h + z * c
/// x_t: [input] or [B, input]; h_prev: matching [hidden] or [B, hidden].
Var gru_cell_step(Tape& tape, const Var& x_t, const Var& h_prev, const GRUParams& p);

/// Runs a GRU over x [B, T, F] from a zero state. Returns per-time-step hidden
/// states indexed by input position; with `reverse` the recurrence starts at
/// the last position.
std::vector<Var> gru_sequence(Tape& tape, const Var& x, const GRUParams& p, bool reverse);

struct BiGRUParams {
  GRUParams forward;
  GRUParams backward;
  void collect(const std::string& prefix, std::vector<NamedVar>& out) const;
};

BiGRUParams make_bigru(std::size_t input_size, std::size_t hidden_size, Rng& rng);
/// x: [T, F] or [B, T, F] -> [.., T, 2*hidden], forward half first.
Var bigru_forward(Tape& tape, const Var& x, const GRUParams& fwd, const GRUParams& bwd);

// ---------------------------------------------------------------------------
// LayerNorm over the last axis.

struct LayerNormParams {
  Var gamma;
  Var beta;
  Real epsilon = Real(1e-5);
  void collect(const std::string& prefix, std::vector<NamedVar>& out) const;
};

LayerNormParams make_layernorm(std::size_t features);
Var layernorm_forward(Tape& tape, const Var& x, const LayerNormParams& p);

// ---------------------------------------------------------------------------
// Attention

/// Q K^T / sqrt(d_q). Q: [.., T_q, d_q], K: [.., T_k, d_q]; rank 2 or 3.
Var attention_scores(Tape& tape, const Var& q, const Var& k);

struct AttentionOutput {
  Var output;   // [.., T_q, d_v]
  Var weights;  // [.., T_q, T_k], rows sum to 1
};

/// softmax(Q K^T / sqrt(d_q)) V, rows of the softmax taken over keys.
AttentionOutput scaled_dot_product_attention(Tape& tape, const Var& q, const Var& k, const Var& v);

/// Head h uses columns [h*key_dim, (h+1)*key_dim) of w_query/w_key/w_value,
/// i.e. the per-head projections packed side by side. w_output maps the
/// concatenated heads back to model_dim.
struct MHAParams {
  Var w_query;   // [model_dim, heads*key_dim]
  Var w_key;     // [model_dim, heads*key_dim]
  Var w_value;   // [model_dim, heads*key_dim]
  Var w_output;  // [heads*key_dim, model_dim]
  std::size_t num_heads = 1;
  std::size_t key_dim = 1;

  std::size_t model_dim() const { return w_query.shape()[0]; }
  void collect(const std::string& prefix, std::vector<NamedVar>& out) const;
};

MHAParams make_mha(std::size_t model_dim, std::size_t num_heads, std::size_t key_dim, Rng& rng);
/// Self-attention over x: [T, F] or [B, T, F]; output has the input's shape.
Var multi_head_attention(Tape& tape, const Var& x, const MHAParams& p);

// ---------------------------------------------------------------------------
// Dropout, Dense

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate). Identity in infer mode.
Var dropout_forward(Tape& tape, const Var& x, Real rate, Mode mode, Rng& rng);

enum class DenseActivation { none, relu, softmax };

/// Weight layout [in, out].
struct DenseParams {
  Var w;
  Var b;
  DenseActivation activation = DenseActivation::none;

  std::size_t in_features() const { return w.shape()[0]; }
  std::size_t out_features() const { return w.shape()[1]; }
  void collect(const std::string& prefix, std::vector<NamedVar>& out) const;
};

DenseParams make_dense(std::size_t in, std::size_t out, DenseActivation activation, Rng& rng);
/// x: [in] or [B, in].
Var dense_forward(Tape& tape, const Var& x, const DenseParams& p);

}  // namespace ids
