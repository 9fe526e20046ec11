#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ids/errors.hpp"
#include "ids/grad_check.hpp"
#include "ids/layers.hpp"
#include "support.hpp"

using namespace ids;
using ids::testing::max_abs_diff;
using ids::testing::random_tensor;

namespace {

constexpr Real kStep = 1e-6;
constexpr Real kTol = 1e-5;

/// Weighted sum so every output coordinate carries a distinct gradient.
Var probe(Tape& t, const Var& y, const Tensor& w) { return sum(t, mul(t, y, Var(w))); }

std::vector<Var> as_vars(std::initializer_list<Var> vs) { return {vs}; }

void randomize(Var v, Rng& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (Real& x : v.mutable_value().data()) x = static_cast<Real>(u(rng));
}

/// Independent attention oracle with explicit loops.
Tensor brute_force_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t tq = q.shape()[0], tk = k.shape()[0], d = q.shape()[1], dv = v.shape()[1];
  Tensor out({tq, dv});
  for (std::size_t i = 0; i < tq; ++i) {
    std::vector<double> s(tk);
    double mx = -1e300;
    for (std::size_t j = 0; j < tk; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q.at(i, c) * k.at(j, c);
      s[j] = dot / std::sqrt(double(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (double& e : s) z += (e = std::exp(e - mx));
    for (std::size_t c = 0; c < dv; ++c) {
      double acc = 0;
      for (std::size_t j = 0; j < tk; ++j) acc += s[j] / z * v.at(j, c);
      out.at(i, c) = acc;
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Conv1D

TEST(Conv1D, HandCrossCorrelationValidPadding) {
  Rng rng(1);
  Conv1DParams p = make_conv1d(1, 1, 3, rng, Padding::valid);
  p.kernel.mutable_value() = Tensor({1, 1, 3}, {1, 0, -1});
  p.bias.mutable_value().fill(0);
  Tape tape(false);
  const Var y = conv1d_forward(tape, Var(Tensor({4, 1}, {1, 2, 3, 4})), p);
  EXPECT_EQ(y.value(), Tensor({2, 1}, {-2, -2}));
}

TEST(Conv1D, UnitKernelIsIdentity) {
  Rng rng(2);
  Conv1DParams p = make_conv1d(1, 1, 1, rng);
  p.kernel.mutable_value().fill(1);
  const Tensor x = ids::testing::random_tensor({7, 1}, rng);
  Tape tape(false);
  EXPECT_EQ(conv1d_forward(tape, Var(x), p).value(), x);
}

TEST(Conv1D, SamePaddingPreservesLength) {
  Rng rng(3);
  const Conv1DParams p = make_conv1d(2, 5, 3, rng);
  EXPECT_EQ(conv1d_output_length(60, p), 60u);
  Tape tape(false);
  EXPECT_EQ(conv1d_forward(tape, Var(random_tensor({3, 60, 2}, rng)), p).shape(), (Shape{3, 60, 5}));
}

TEST(Conv1D, SamePaddingMatchesZeroPaddedLoop) {
  Rng rng(4);
  const Conv1DParams p = make_conv1d(2, 3, 3, rng);
  randomize(p.bias, rng);
  const Tensor x = random_tensor({5, 2}, rng);
  Tape tape(false);
  const Tensor y = conv1d_forward(tape, Var(x), p).value();
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t o = 0; o < 3; ++o) {
      double ref = p.bias.value()[o];
      for (std::size_t j = 0; j < 3; ++j) {
        const long src = long(t) + long(j) - 1;
        if (src < 0 || src >= 5) continue;
        for (std::size_t c = 0; c < 2; ++c) ref += p.kernel.value().at(o, c, j) * x.at(std::size_t(src), c);
      }
      EXPECT_NEAR(y.at(t, o), ref, 1e-12);
    }
  }
}

TEST(Conv1D, ChannelMismatchIsDimensionError) {
  Rng rng(5);
  const Conv1DParams p = make_conv1d(2, 3, 3, rng);
  Tape tape(false);
  EXPECT_THROW(conv1d_forward(tape, Var(Tensor({4, 3})), p), DimensionError);
}

TEST(Conv1D, GradientCheck) {
  Rng rng(6);
  for (Padding pad : {Padding::same, Padding::valid}) {
    const Conv1DParams p = make_conv1d(2, 3, 3, rng, pad);
    randomize(p.bias, rng);
    Var x(random_tensor({2, 6, 2}, rng), true);
    const Tensor w = random_tensor({2, pad == Padding::same ? 6u : 4u, 3}, rng);
    auto wrt = as_vars({x, p.kernel, p.bias});
    EXPECT_LT(grad_check([&](Tape& t) { return probe(t, conv1d_forward(t, x, p), w); }, wrt, kStep), kTol);
  }
}

// ------------------------------------------------------------- BatchNorm

TEST(BatchNorm, TrainModeNormalisesPerChannel) {
  Rng rng(7);
  const BatchNormParams p = make_batchnorm(3);
  Tape tape(false);
  const Tensor y = batchnorm_forward(tape, Var(random_tensor({4, 5, 3}, rng, -3, 7)), p, Mode::train).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    for (std::size_t i = 0; i < 20; ++i) mean += y[i * 3 + c] / 20;
    for (std::size_t i = 0; i < 20; ++i) sq += (y[i * 3 + c] - mean) * (y[i * 3 + c] - mean) / 20;
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(sq, 1.0, 1e-3);  // epsilon 1e-3 in the denominator
  }
}

TEST(BatchNorm, IdenticalSamplesGiveZeros) {
  const BatchNormParams p = make_batchnorm(2);
  Tape tape(false);
  const Tensor y = batchnorm_forward(tape, Var(Tensor({4, 3, 2}, Real(2.5))), p, Mode::train).value();
  for (Real v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, InferModeUsesRunningStatistics) {
  Rng rng(8);
  BatchNormParams p = make_batchnorm(2);
  p.running_mean.mutable_value() = Tensor::vector({0.5, -1});
  p.running_var.mutable_value() = Tensor::vector({4, 0.25});
  p.gamma.mutable_value() = Tensor::vector({2, 3});
  p.beta.mutable_value() = Tensor::vector({0.1, -0.2});
  const Tensor x = random_tensor({3, 2}, rng);
  Tape tape(false);
  const Tensor y = batchnorm_forward(tape, Var(x), p, Mode::infer).value();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      const double ref = (x.at(i, c) - p.running_mean.value()[c]) / std::sqrt(p.running_var.value()[c] + 1e-3) *
                             p.gamma.value()[c] +
                         p.beta.value()[c];
      EXPECT_NEAR(y.at(i, c), ref, 1e-12);
    }
  }
}

TEST(BatchNorm, RunningStatisticsFollowMomentum) {
  BatchNormParams p = make_batchnorm(1);
  Tape tape(false);
  batchnorm_forward(tape, Var(Tensor({4, 1}, {1, 2, 3, 4})), p, Mode::train);
  // mean 2.5, biased var 1.25
  EXPECT_NEAR(p.running_mean.value()[0], 0.01 * 2.5, 1e-12);
  EXPECT_NEAR(p.running_var.value()[0], 0.99 + 0.01 * 1.25, 1e-12);
  EXPECT_GE(p.running_var.value()[0], 0.0);
}

TEST(BatchNorm, SingleElementTrainModeIsContractError) {
  const BatchNormParams p = make_batchnorm(2);
  Tape tape(false);
  EXPECT_THROW(batchnorm_forward(tape, Var(Tensor({1, 1, 2})), p, Mode::train), ContractError);
}

TEST(BatchNorm, GradientCheckBothModes) {
  Rng rng(9);
  const BatchNormParams p = make_batchnorm(3);
  randomize(p.gamma, rng, 2);
  randomize(p.beta, rng);
  Var x(random_tensor({2, 4, 3}, rng), true);
  const Tensor w = random_tensor({2, 4, 3}, rng);
  auto wrt = as_vars({x, p.gamma, p.beta});
  for (Mode mode : {Mode::train, Mode::infer}) {
    EXPECT_LT(grad_check([&](Tape& t) { return probe(t, batchnorm_forward(t, x, p, mode), w); }, wrt, kStep), kTol);
  }
}

// ------------------------------------------------------------------- GRU

TEST(GRU, ZeroWeightsHalveTheState) {
  Rng rng(10);
  GRUParams p = make_gru(3, 4, rng);
  std::vector<NamedVar> all;
  p.collect("gru", all);
  for (auto& nv : all) nv.var.mutable_value().fill(0);
  const Tensor h = Tensor::vector({1, -2, 0.5, 4});
  Tape tape(false);
  const Tensor out = gru_cell_step(tape, Var(random_tensor({3}, rng)), Var(h), p).value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out[i], 0.5 * h[i]);
}

TEST(GRU, StepMatchesScalarFormula) {
  Rng rng(11);
  const GRUParams p = make_gru(2, 3, rng);
  randomize(p.b_update, rng);
  randomize(p.b_reset, rng);
  randomize(p.b_candidate, rng);
  const Tensor x = random_tensor({2}, rng), h = random_tensor({3}, rng);
  auto sig = [](double a) { return 1 / (1 + std::exp(-a)); };
  auto pre = [&](const Var& w, const Var& u, const Var& b, const std::vector<double>& hh, std::size_t j) {
    double s = b.value()[j];
    for (std::size_t i = 0; i < 2; ++i) s += x[i] * w.value().at(i, j);
    for (std::size_t i = 0; i < 3; ++i) s += hh[i] * u.value().at(i, j);
    return s;
  };
  std::vector<double> hv(h.data().begin(), h.data().end()), rh(3);
  for (std::size_t j = 0; j < 3; ++j) rh[j] = sig(pre(p.w_reset, p.u_reset, p.b_reset, hv, j)) * hv[j];
  Tape tape(false);
  const Tensor out = gru_cell_step(tape, Var(x), Var(h), p).value();
  for (std::size_t j = 0; j < 3; ++j) {
    const double z = sig(pre(p.w_update, p.u_update, p.b_update, hv, j));
    const double c = std::tanh(pre(p.w_candidate, p.u_candidate, p.b_candidate, rh, j));
    EXPECT_NEAR(out[j], (1 - z) * hv[j] + z * c, 1e-12);
  }
}

TEST(GRU, DimensionMismatch) {
  Rng rng(12);
  const GRUParams p = make_gru(2, 3, rng);
  Tape tape(false);
  EXPECT_THROW(gru_cell_step(tape, Var(Tensor({3})), Var(Tensor({3})), p), DimensionError);
  EXPECT_THROW(gru_cell_step(tape, Var(Tensor({2})), Var(Tensor({4})), p), DimensionError);
}

TEST(GRU, CellGradientCheck) {
  Rng rng(13);
  const GRUParams p = make_gru(3, 4, rng);
  randomize(p.b_update, rng);
  Var x(random_tensor({2, 3}, rng), true), h(random_tensor({2, 4}, rng), true);
  const Tensor w = random_tensor({2, 4}, rng);
  auto wrt = as_vars({x, h, p.w_update, p.u_update, p.b_update, p.w_reset, p.u_reset, p.b_reset, p.w_candidate,
                      p.u_candidate, p.b_candidate});
  EXPECT_LT(grad_check([&](Tape& t) { return probe(t, gru_cell_step(t, x, h, p), w); }, wrt, kStep), kTol);
}

TEST(BiGRU, SingleStepReducesToTwoCells) {
  Rng rng(14);
  const BiGRUParams p = make_bigru(3, 2, rng);
  const Tensor x = random_tensor({1, 3}, rng);
  Tape tape(false);
  const Tensor y = bigru_forward(tape, Var(x), p.forward, p.backward).value();
  const Var x1(x.reshaped({3})), zero(Tensor({2}));
  const Tensor f = gru_cell_step(tape, x1, zero, p.forward).value();
  const Tensor b = gru_cell_step(tape, x1, zero, p.backward).value();
  EXPECT_EQ(y.shape(), (Shape{1, 4}));
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(y[i], f[i], 1e-15);
    EXPECT_NEAR(y[2 + i], b[i], 1e-15);
  }
}

TEST(BiGRU, BackwardHalfIsForwardHalfOfReversedInputWithSwappedParams) {
  Rng rng(15);
  const BiGRUParams p = make_bigru(2, 3, rng);
  const std::size_t T = 5;
  const Tensor x = random_tensor({T, 2}, rng);
  Tensor rev({T, 2});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < 2; ++c) rev.at(t, c) = x.at(T - 1 - t, c);
  }
  Tape tape(false);
  const Tensor y = bigru_forward(tape, Var(x), p.forward, p.backward).value();
  const Tensor ys = bigru_forward(tape, Var(rev), p.backward, p.forward).value();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(y.at(t, 3 + j), ys.at(T - 1 - t, j), 1e-14);
  }
}

TEST(BiGRU, FlagshipShapeAndHiddenMismatch) {
  Rng rng(16);
  const BiGRUParams p = make_bigru(64, 64, rng);
  Tape tape(false);
  EXPECT_EQ(bigru_forward(tape, Var(random_tensor({60, 64}, rng)), p.forward, p.backward).shape(), (Shape{60, 128}));
  const GRUParams other = make_gru(64, 32, rng);
  EXPECT_THROW(bigru_forward(tape, Var(Tensor({60, 64})), p.forward, other), ContractError);
}

TEST(BiGRU, GradientCheck) {
  Rng rng(17);
  const BiGRUParams p = make_bigru(2, 3, rng);
  Var x(random_tensor({2, 4, 2}, rng), true);
  const Tensor w = random_tensor({2, 4, 6}, rng);
  std::vector<Var> wrt{x};
  std::vector<NamedVar> named;
  p.collect("bigru", named);
  for (auto& nv : named) wrt.push_back(nv.var);
  EXPECT_LT(grad_check([&](Tape& t) { return probe(t, bigru_forward(t, x, p.forward, p.backward), w); }, wrt, kStep),
            kTol);
}

// ------------------------------------------------------------- LayerNorm

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  Rng rng(18);
  const LayerNormParams p = make_layernorm(8);
  Tape tape(false);
  const Tensor y = layernorm_forward(tape, Var(random_tensor({5, 8}, rng, -4, 9)), p).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 8; ++c) mean += y.at(r, c) / 8;
    for (std::size_t c = 0; c < 8; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean) / 8;
    EXPECT_NEAR(mean, 0, 1e-12);
    EXPECT_NEAR(var, 1, 1e-4);
  }
}

TEST(LayerNorm, ConstantRowIsZero) {
  const LayerNormParams p = make_layernorm(4);
  Tape tape(false);
  const Tensor y = layernorm_forward(tape, Var(Tensor({2, 4}, Real(7))), p).value();
  for (Real v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, InvariantToPerRowAffineShift) {
  Rng rng(19);
  LayerNormParams p = make_layernorm(16);
  p.epsilon = 0;
  const Tensor x = random_tensor({3, 16}, rng);
  Tensor shifted = x;
  const double a[] = {2.0, 0.5, 3.0}, c[] = {-1.0, 4.0, 0.25};
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t j = 0; j < 16; ++j) shifted.at(r, j) = a[r] * x.at(r, j) + c[r];
  }
  Tape tape(false);
  // Exact when epsilon is zero; only rounding remains.
  EXPECT_LT(max_abs_diff(layernorm_forward(tape, Var(x), p).value(), layernorm_forward(tape, Var(shifted), p).value()),
            1e-12);
}

TEST(LayerNorm, GradientCheck) {
  Rng rng(20);
  const LayerNormParams p = make_layernorm(5);
  randomize(p.gamma, rng, 2);
  randomize(p.beta, rng);
  Var x(random_tensor({2, 3, 5}, rng), true);
  const Tensor w = random_tensor({2, 3, 5}, rng);
  auto wrt = as_vars({x, p.gamma, p.beta});
  EXPECT_LT(grad_check([&](Tape& t) { return probe(t, layernorm_forward(t, x, p), w); }, wrt, kStep), kTol);
}

// ------------------------------------------------------------- Attention

TEST(Attention, MatchesBruteForceOnRandom8x8) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor q = random_tensor({8, 8}, rng, -2, 2), k = random_tensor({8, 8}, rng, -2, 2),
                 v = random_tensor({8, 8}, rng, -2, 2);
    Tape tape(false);
    const AttentionOutput a = scaled_dot_product_attention(tape, Var(q), Var(k), Var(v));
    EXPECT_LT(max_abs_diff(a.output.value(), brute_force_attention(q, k, v)), 1e-6);
    for (std::size_t i = 0; i < 8; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < 8; ++j) {
        const double w = a.weights.value().at(i, j);
        EXPECT_GT(w, 0.0);
        EXPECT_LT(w, 1.0);
        row += w;
      }
      EXPECT_NEAR(row, 1.0, 1e-6);
    }
  }
}

TEST(Attention, ScoresAreDividedBySqrtKeyDim) {
  Rng rng(22);
  const Tensor q = random_tensor({3, 64}, rng), k = random_tensor({4, 64}, rng);
  Tape tape(false);
  const Tensor s = attention_scores(tape, Var(q), Var(k)).value();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < 64; ++c) dot += q.at(i, c) * k.at(j, c);
      EXPECT_NEAR(s.at(i, j), dot / 8.0, 1e-12);
    }
  }
}

TEST(Attention, SingleKeyReturnsItsValue) {
  Rng rng(23);
  const Tensor v = random_tensor({1, 3}, rng);
  Tape tape(false);
  const Tensor out =
      scaled_dot_product_attention(tape, Var(random_tensor({4, 2}, rng)), Var(random_tensor({1, 2}, rng)), Var(v))
          .output.value();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.at(i, c), v[c], 1e-15);
  }
}

TEST(Attention, DominantSelfMatchSelectsMatchingRow) {
  const Tensor qk = Tensor::matrix(2, 2, {10, 0, 0, 10});
  const Tensor v = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tape tape(false);
  const Tensor out = scaled_dot_product_attention(tape, Var(qk), Var(qk), Var(v)).output.value();
  // scores/sqrt(2): diagonal 100/sqrt2, off-diagonal 0
  const double w = 1.0 / (1.0 + std::exp(-100.0 / std::sqrt(2.0)));
  EXPECT_NEAR(out.at(0, 0), w * 1 + (1 - w) * 3, 1e-12);
  EXPECT_NEAR(out.at(1, 1), w * 4 + (1 - w) * 2, 1e-12);
  EXPECT_NEAR(out.at(0, 0), 1.0, 1e-12);
}

TEST(Attention, KeyDimMismatchIsDimensionError) {
  Tape tape(false);
  EXPECT_THROW(scaled_dot_product_attention(tape, Var(Tensor({2, 3})), Var(Tensor({2, 4})), Var(Tensor({2, 4}))),
               DimensionError);
}

TEST(Attention, GradientCheck) {
  Rng rng(24);
  Var q(random_tensor({2, 3, 4}, rng), true), k(random_tensor({2, 5, 4}, rng), true),
      v(random_tensor({2, 5, 2}, rng), true);
  const Tensor w = random_tensor({2, 3, 2}, rng);
  auto wrt = as_vars({q, k, v});
  EXPECT_LT(grad_check([&](Tape& t) { return probe(t, scaled_dot_product_attention(t, q, k, v).output, w); }, wrt,
                       kStep),
            kTol);
}

TEST(MHA, OneHeadWithIdentityOutputIsProjectedAttention) {
  Rng rng(25);
  MHAParams p = make_mha(4, 1, 4, rng);
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1;
  p.w_output.mutable_value() = eye;
  const Tensor x = random_tensor({6, 4}, rng);
  Tape tape(false);
  const Var xv(x);
  const Tensor ref = scaled_dot_product_attention(tape, linear(tape, xv, p.w_query), linear(tape, xv, p.w_key),
                                                  linear(tape, xv, p.w_value))
                         .output.value();
  EXPECT_LT(max_abs_diff(multi_head_attention(tape, xv, p).value(), ref), 1e-14);
}

TEST(MHA, HeadsUseTheirOwnColumnBlocks) {
  Rng rng(26);
  const MHAParams p = make_mha(6, 3, 2, rng);
  const Tensor x = random_tensor({5, 6}, rng);
  Tape tape(false);
  const Var xv(x);
  std::vector<Var> heads;
  for (std::size_t h = 0; h < 3; ++h) {
    auto proj = [&](const Var& w) { return linear(tape, xv, slice(tape, w, 1, h * 2, 2)); };
    heads.push_back(scaled_dot_product_attention(tape, proj(p.w_query), proj(p.w_key), proj(p.w_value)).output);
  }
  const Tensor ref = matmul(tape, concat(tape, heads, 1), p.w_output).value();
  EXPECT_LT(max_abs_diff(multi_head_attention(tape, xv, p).value(), ref), 1e-13);
}

TEST(MHA, FlagshipShapePreserved) {
  Rng rng(27);
  const MHAParams p = make_mha(128, 4, 64, rng);
  Tape tape(false);
  EXPECT_EQ(multi_head_attention(tape, Var(random_tensor({60, 128}, rng)), p).shape(), (Shape{60, 128}));
  EXPECT_EQ(p.w_output.shape(), (Shape{256, 128}));
  EXPECT_THROW(multi_head_attention(tape, Var(Tensor({60, 64})), p), DimensionError);
}

TEST(MHA, GradientCheckOn4x8) {
  Rng rng(28);
  const MHAParams p = make_mha(8, 2, 3, rng);
  Var x(random_tensor({4, 8}, rng), true);
  const Tensor w = random_tensor({4, 8}, rng);
  auto wrt = as_vars({x, p.w_query, p.w_key, p.w_value, p.w_output});
  EXPECT_LT(grad_check([&](Tape& t) { return probe(t, multi_head_attention(t, x, p), w); }, wrt, kStep), kTol);
}

// ------------------------------------------------------- Dropout / Dense

TEST(Dropout, InferModeAndZeroRateAreIdentity) {
  Rng rng(29);
  const Tensor x = random_tensor({50}, rng);
  Tape tape(false);
  EXPECT_EQ(dropout_forward(tape, Var(x), 0.5, Mode::infer, rng).value(), x);
  EXPECT_EQ(dropout_forward(tape, Var(x), 0.0, Mode::train, rng).value(), x);
  EXPECT_EQ(dropout_forward(tape, Var(x), 0.0, Mode::infer, rng).value(), x);
}

TEST(Dropout, PreservesExpectationOverManyElements) {
  Rng rng(30);
  const std::size_t n = 100000;
  const Tensor x = random_tensor({n}, rng, 0.5, 1.5);
  Tape tape(false);
  const Tensor y = dropout_forward(tape, Var(x), 0.5, Mode::train, rng).value();
  std::size_t zeros = 0;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    zeros += y[i] == 0;
    mx += x[i] / n;
    my += y[i] / n;
    if (y[i] != 0) {
      EXPECT_DOUBLE_EQ(y[i], 2 * x[i]);
    }
  }
  EXPECT_NEAR(double(zeros) / n, 0.5, 0.01);
  EXPECT_NEAR(my / mx, 1.0, 0.02);
}

TEST(Dropout, GradientWithFrozenMask) {
  Rng rng(31);
  Var x(random_tensor({3, 4}, rng), true);
  const Tensor w = random_tensor({3, 4}, rng);
  std::vector<Var> wrt{x};
  EXPECT_LT(grad_check(
                [&](Tape& t) {
                  Rng mask(99);  // same mask on every evaluation
                  return probe(t, dropout_forward(t, x, 0.3, Mode::train, mask), w);
                },
                wrt, kStep),
            kTol);
}

TEST(Dense, IdentityAndReluAndSoftmax) {
  Rng rng(32);
  DenseParams id = make_dense(3, 3, DenseActivation::none, rng);
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1;
  id.w.mutable_value() = eye;
  const Tensor x = Tensor::vector({-1, 2, -3});
  Tape tape(false);
  EXPECT_EQ(dense_forward(tape, Var(x), id).value(), x);

  id.activation = DenseActivation::relu;
  EXPECT_EQ(dense_forward(tape, Var(x), id).value(), Tensor::vector({0, 2, 0}));

  const DenseParams out = make_dense(10, 6, DenseActivation::softmax, rng);
  const Tensor probs = dense_forward(tape, Var(random_tensor({4, 10}, rng)), out).value();
  for (std::size_t i = 0; i < 4; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < 6; ++j) total += probs.at(i, j);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  EXPECT_THROW(dense_forward(tape, Var(Tensor({4, 9})), out), DimensionError);
}

TEST(Dense, GradientCheckEachActivation) {
  Rng rng(33);
  for (DenseActivation a : {DenseActivation::none, DenseActivation::relu, DenseActivation::softmax}) {
    const DenseParams p = make_dense(5, 4, a, rng);
    randomize(p.b, rng, 0.3);
    Var x(random_tensor({3, 5}, rng), true);
    const Tensor w = random_tensor({3, 4}, rng);
    auto wrt = as_vars({x, p.w, p.b});
    EXPECT_LT(grad_check([&](Tape& t) { return probe(t, dense_forward(t, x, p), w); }, wrt, kStep), kTol);
  }
}

TEST(Init, GlorotBoundsAndDeterminism) {
  Rng a(34), b(34);
  const Tensor w = glorot_uniform({100, 50}, 100, 50, a);
  EXPECT_EQ(w, glorot_uniform({100, 50}, 100, 50, b));
  const double bound = std::sqrt(6.0 / 150.0);
  for (Real v : w.data()) EXPECT_LE(std::abs(v), bound);
}
