#include <cmath>

#include "ids/errors.hpp"
#include "ids/layers.hpp"

namespace ids {

void BatchNormParams::collect(const std::string& prefix, std::vector<NamedVar>& out) const {
  out.push_back({prefix + ".gamma", gamma, true});
  out.push_back({prefix + ".beta", beta, true});
  out.push_back({prefix + ".running_mean", running_mean, false});
  out.push_back({prefix + ".running_var", running_var, false});
}

BatchNormParams make_batchnorm(std::size_t channels) {
  BatchNormParams p;
  p.gamma = Var(Tensor({channels}, Real(1)), true);
  p.beta = Var(Tensor({channels}, Real(0)), true);
  p.running_mean = Var(Tensor({channels}, Real(0)));
  p.running_var = Var(Tensor({channels}, Real(1)));
  return p;
}

Var batchnorm_forward(Tape& tape, const Var& x, const BatchNormParams& p, Mode mode) {
  const Shape& xs = x.shape();
  const std::size_t channels = p.gamma.value().size();
  if (xs.empty() || xs.back() != channels) {
    throw DimensionError("batchnorm: input " + to_string(xs) + " does not end in " + std::to_string(channels) +
                         " channels");
  }
  const std::size_t count = x.value().size() / channels;
  if (mode == Mode::train && count < 2) {
    throw ContractError("batchnorm: train mode needs at least 2 values per channel, got " + std::to_string(count));
  }
  const Real* in = x.value().raw();
  std::vector<Real> mean(channels, Real(0)), var(channels, Real(0));
  if (mode == Mode::train) {
    for (std::size_t r = 0; r < count; ++r) {
      for (std::size_t c = 0; c < channels; ++c) mean[c] += in[r * channels + c];
    }
    for (auto& m : mean) m /= static_cast<Real>(count);
    for (std::size_t r = 0; r < count; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        const Real d = in[r * channels + c] - mean[c];
        var[c] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<Real>(count);
    Var running_mean = p.running_mean, running_var = p.running_var;
    Real* rm = running_mean.mutable_value().raw();
    Real* rv = running_var.mutable_value().raw();
    for (std::size_t c = 0; c < channels; ++c) {
      rm[c] = p.momentum * rm[c] + (Real(1) - p.momentum) * mean[c];
      rv[c] = p.momentum * rv[c] + (Real(1) - p.momentum) * var[c];
    }
  } else {
    const Real* rm = p.running_mean.value().raw();
    const Real* rv = p.running_var.value().raw();
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = rm[c];
      var[c] = rv[c];
    }
  }
  std::vector<Real> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) inv_std[c] = Real(1) / std::sqrt(var[c] + p.epsilon);

  Tensor normalized(xs);
  Tensor out(xs);
  const Real* gamma = p.gamma.value().raw();
  const Real* beta = p.beta.value().raw();
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = r * channels + c;
      normalized[i] = (in[i] - mean[c]) * inv_std[c];
      out[i] = gamma[c] * normalized[i] + beta[c];
    }
  }

  Var gamma_var = p.gamma, beta_var = p.beta;
  return tape.record(std::move(out), {&x, &p.gamma, &p.beta},
                     [x, gamma_var, beta_var, normalized = std::move(normalized), inv_std = std::move(inv_std),
                      count, channels, train = mode == Mode::train](const Node& o) {
                       const Real* g = o.grad.raw();
                       const Real* xhat = normalized.raw();
                       std::vector<Real> sum_g(channels, Real(0)), sum_gx(channels, Real(0));
                       for (std::size_t r = 0; r < count; ++r) {
                         for (std::size_t c = 0; c < channels; ++c) {
                           sum_g[c] += g[r * channels + c];
                           sum_gx[c] += g[r * channels + c] * xhat[r * channels + c];
                         }
                       }
                       if (Tensor* dg = grad_target(gamma_var)) {
                         for (std::size_t c = 0; c < channels; ++c) (*dg)[c] += sum_gx[c];
                       }
                       if (Tensor* db = grad_target(beta_var)) {
                         for (std::size_t c = 0; c < channels; ++c) (*db)[c] += sum_g[c];
                       }
                       Tensor* dx = grad_target(x);
                       if (!dx) return;
                       const Real* gamma = gamma_var.value().raw();
                       const Real n = static_cast<Real>(count);
                       for (std::size_t r = 0; r < count; ++r) {
                         for (std::size_t c = 0; c < channels; ++c) {
                           const std::size_t i = r * channels + c;
                           if (train) {
                             (*dx)[i] += gamma[c] * inv_std[c] * (g[i] - sum_g[c] / n - xhat[i] * sum_gx[c] / n);
                           } else {
                             (*dx)[i] += gamma[c] * inv_std[c] * g[i];
                           }
                         }
                       }
                     });
}

void LayerNormParams::collect(const std::string& prefix, std::vector<NamedVar>& out) const {
  out.push_back({prefix + ".gamma", gamma, true});
  out.push_back({prefix + ".beta", beta, true});
}

LayerNormParams make_layernorm(std::size_t features) {
  LayerNormParams p;
  p.gamma = Var(Tensor({features}, Real(1)), true);
  p.beta = Var(Tensor({features}, Real(0)), true);
  return p;
}

Var layernorm_forward(Tape& tape, const Var& x, const LayerNormParams& p) {
  const Shape& xs = x.shape();
  const std::size_t features = p.gamma.value().size();
  if (xs.empty() || xs.back() != features) {
    throw DimensionError("layernorm: input " + to_string(xs) + " does not end in " + std::to_string(features) +
                         " features");
  }
  const std::size_t rows = x.value().size() / features;
  const Real* in = x.value().raw();
  const Real* gamma = p.gamma.value().raw();
  const Real* beta = p.beta.value().raw();
  Tensor normalized(xs), out(xs);
  std::vector<Real> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = in + r * features;
    Real mean = 0;
    for (std::size_t f = 0; f < features; ++f) mean += row[f];
    mean /= static_cast<Real>(features);
    Real var = 0;
    for (std::size_t f = 0; f < features; ++f) var += (row[f] - mean) * (row[f] - mean);
    var /= static_cast<Real>(features);
    inv_std[r] = Real(1) / std::sqrt(var + p.epsilon);
    for (std::size_t f = 0; f < features; ++f) {
      const std::size_t i = r * features + f;
      normalized[i] = (row[f] - mean) * inv_std[r];
      out[i] = gamma[f] * normalized[i] + beta[f];
    }
  }
  Var gamma_var = p.gamma, beta_var = p.beta;
  return tape.record(std::move(out), {&x, &p.gamma, &p.beta},
                     [x, gamma_var, beta_var, normalized = std::move(normalized), inv_std = std::move(inv_std), rows,
                      features](const Node& o) {
                       const Real* g = o.grad.raw();
                       const Real* xhat = normalized.raw();
                       const Real* gamma = gamma_var.value().raw();
                       Tensor* dg = grad_target(gamma_var);
                       Tensor* db = grad_target(beta_var);
                       Tensor* dx = grad_target(x);
                       const Real n = static_cast<Real>(features);
                       for (std::size_t r = 0; r < rows; ++r) {
                         Real sum_h = 0, sum_hx = 0;
                         for (std::size_t f = 0; f < features; ++f) {
                           const std::size_t i = r * features + f;
                           if (dg) (*dg)[f] += g[i] * xhat[i];
                           if (db) (*db)[f] += g[i];
                           const Real h = g[i] * gamma[f];
                           sum_h += h;
                           sum_hx += h * xhat[i];
                         }
                         if (!dx) continue;
                         for (std::size_t f = 0; f < features; ++f) {
                           const std::size_t i = r * features + f;
                           (*dx)[i] += inv_std[r] * (g[i] * gamma[f] - sum_h / n - xhat[i] * sum_hx / n);
                         }
                       }
                     });
}

}  // namespace ids
