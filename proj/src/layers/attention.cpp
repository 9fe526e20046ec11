#include <Eigen/Core>
#include <cmath>

#include "ids/errors.hpp"
#include "ids/layers.hpp"

namespace ids {

namespace {

// Lifts [T, d] to [1, T, d] so every attention op runs batched.
Var as_batched(Tape& tape, const Var& v) {
  if (v.shape().size() == 3) return v;
  if (v.shape().size() == 2) return reshape(tape, v, {1, v.shape()[0], v.shape()[1]});
  throw DimensionError("attention: expected rank 2 or 3 input, got " + to_string(v.shape()));
}

Var restore_rank(Tape& tape, const Var& v, std::size_t rank) {
  if (rank == 3) return v;
  return reshape(tape, v, {v.shape()[1], v.shape()[2]});
}

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Block = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstBlock = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

/// Scaled dot-product attention of every head at once. q, k, v: [B, T, H*dk]
/// with head h in columns [h*dk, (h+1)*dk). Output has the same layout, so
/// heads are already concatenated. One (b, h) block is processed at a time,
/// keeping the T x T weights in cache. Weights are kept for backward only
/// when the tape records.
Var packed_heads_attention(Tape& tape, const Var& q, const Var& k, const Var& v, std::size_t heads,
                           std::size_t dk) {
  const std::size_t batch = q.shape()[0], steps = q.shape()[1], width = heads * dk;
  const Real inv_scale = Real(1) / std::sqrt(static_cast<Real>(dk));
  const bool keep = tape.recording() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  auto weights = std::make_shared<std::vector<RowMat>>();
  if (keep) weights->reserve(batch * heads);

  Tensor out({batch, steps, width});
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(width));
  const auto T = static_cast<Eigen::Index>(steps), D = static_cast<Eigen::Index>(dk);
  RowMat p(T, T), head(T, D);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * steps * width + h * dk;
      ConstBlock qb(q.value().raw() + off, T, D, stride);
      ConstBlock kb(k.value().raw() + off, T, D, stride);
      ConstBlock vb(v.value().raw() + off, T, D, stride);
      p.noalias() = (qb * kb.transpose()) * inv_scale;
      for (Eigen::Index i = 0; i < T; ++i) {
        auto row = p.row(i).array();
        row = (row - row.maxCoeff()).exp();
        row /= row.sum();
      }
      head.noalias() = p * vb;
      Block(out.raw() + off, T, D, stride) = head;
      if (keep) weights->push_back(p);
    }
  }
  return tape.record(std::move(out), {&q, &k, &v},
                     [q, k, v, weights, batch, heads, steps, width, dk, inv_scale](const Node& o) {
                       const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(width));
                       const auto T = static_cast<Eigen::Index>(steps), D = static_cast<Eigen::Index>(dk);
                       Tensor* gq = grad_target(q);
                       Tensor* gk = grad_target(k);
                       Tensor* gv = grad_target(v);
                       RowMat dp(T, T), ds(T, T);
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t h = 0; h < heads; ++h) {
                           const std::size_t off = b * steps * width + h * dk;
                           const RowMat& p = (*weights)[b * heads + h];
                           ConstBlock dout(o.grad.raw() + off, T, D, stride);
                           ConstBlock qb(q.value().raw() + off, T, D, stride);
                           ConstBlock kb(k.value().raw() + off, T, D, stride);
                           ConstBlock vb(v.value().raw() + off, T, D, stride);
                           if (gv) Block(gv->raw() + off, T, D, stride).noalias() += p.transpose() * dout;
                           if (!gq && !gk) continue;
                           dp.noalias() = dout * vb.transpose();
                           // softmax backward: P * (dP - rowsum(dP * P))
                           ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
                           ds *= inv_scale;
                           if (gq) Block(gq->raw() + off, T, D, stride).noalias() += ds * kb;
                           if (gk) Block(gk->raw() + off, T, D, stride).noalias() += ds.transpose() * qb;
                         }
                       }
                     });
}

}  // namespace

Var attention_scores(Tape& tape, const Var& q, const Var& k) {
  if (q.shape().size() != k.shape().size() || q.shape().back() != k.shape().back()) {
    throw DimensionError("attention: query " + to_string(q.shape()) + " and key " + to_string(k.shape()) +
                         " disagree on d_q");
  }
  const std::size_t d_q = q.shape().back();
  const Var scores = batched_matmul(tape, as_batched(tape, q), as_batched(tape, k), true);
  return restore_rank(tape, scale(tape, scores, Real(1) / std::sqrt(static_cast<Real>(d_q))), q.shape().size());
}

AttentionOutput scaled_dot_product_attention(Tape& tape, const Var& q, const Var& k, const Var& v) {
  const std::size_t rank = q.shape().size();
  if (v.shape().size() != rank || v.shape()[rank - 2] != k.shape()[rank - 2]) {
    throw DimensionError("attention: value " + to_string(v.shape()) + " does not match key " + to_string(k.shape()));
  }
  const Var weights = softmax(tape, as_batched(tape, attention_scores(tape, q, k)), 2);
  const Var out = batched_matmul(tape, weights, as_batched(tape, v));
  return {restore_rank(tape, out, rank), restore_rank(tape, weights, rank)};
}

void MHAParams::collect(const std::string& prefix, std::vector<NamedVar>& out) const {
  out.push_back({prefix + ".w_query", w_query, true});
  out.push_back({prefix + ".w_key", w_key, true});
  out.push_back({prefix + ".w_value", w_value, true});
  out.push_back({prefix + ".w_output", w_output, true});
}

MHAParams make_mha(std::size_t model_dim, std::size_t num_heads, std::size_t key_dim, Rng& rng) {
  if (model_dim == 0 || num_heads == 0 || key_dim == 0) {
    throw ConfigError("mha: model_dim, num_heads and key_dim must be positive");
  }
  const std::size_t width = num_heads * key_dim;
  MHAParams p;
  p.num_heads = num_heads;
  p.key_dim = key_dim;
  p.w_query = Var(glorot_uniform({model_dim, width}, model_dim, width, rng), true);
  p.w_key = Var(glorot_uniform({model_dim, width}, model_dim, width, rng), true);
  p.w_value = Var(glorot_uniform({model_dim, width}, model_dim, width, rng), true);
  p.w_output = Var(glorot_uniform({width, model_dim}, width, model_dim, rng), true);
  return p;
}

Var multi_head_attention(Tape& tape, const Var& x, const MHAParams& p) {
  const Shape& xs = x.shape();
  if ((xs.size() != 2 && xs.size() != 3) || xs.back() != p.model_dim()) {
    throw DimensionError("mha: input " + to_string(xs) + " does not match model_dim " +
                         std::to_string(p.model_dim()));
  }
  const bool batched = xs.size() == 3;
  const Var input = batched ? x : reshape(tape, x, {1, xs[0], xs[1]});
  const Var attended = packed_heads_attention(tape, linear(tape, input, p.w_query), linear(tape, input, p.w_key),
                                              linear(tape, input, p.w_value), p.num_heads, p.key_dim);
  Var out = linear(tape, attended, p.w_output);
  if (!batched) out = reshape(tape, out, xs);
  return out;
}

}  // namespace ids
