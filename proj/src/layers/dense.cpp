#include <cmath>

#include "ids/errors.hpp"
#include "ids/layers.hpp"

namespace ids {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const Real bound = std::sqrt(Real(6) / static_cast<Real>(fan_in + fan_out));
  std::uniform_real_distribution<Real> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (Real& v : t.data()) v = dist(rng);
  return t;
}

Var dropout_forward(Tape& tape, const Var& x, Real rate, Mode mode, Rng& rng) {
  if (rate < 0 || rate >= 1) throw ContractError("dropout: rate must lie in [0, 1)");
  if (mode == Mode::infer || rate == 0) return x;
  const Real keep_scale = Real(1) / (Real(1) - rate);
  std::uniform_real_distribution<Real> uniform(Real(0), Real(1));
  std::vector<Real> mask(x.value().size());
  for (Real& m : mask) m = uniform(rng) < rate ? Real(0) : keep_scale;
  Tensor out = x.value();
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] *= mask[i];
  return tape.record(std::move(out), {&x}, [x, mask = std::move(mask)](const Node& o) {
    Real* d = x.grad_slot().raw();
    for (std::size_t i = 0; i < mask.size(); ++i) d[i] += o.grad[i] * mask[i];
  });
}

void DenseParams::collect(const std::string& prefix, std::vector<NamedVar>& out) const {
  out.push_back({prefix + ".w", w, true});
  out.push_back({prefix + ".b", b, true});
}

DenseParams make_dense(std::size_t in, std::size_t out, DenseActivation activation, Rng& rng) {
  if (in == 0 || out == 0) throw ConfigError("dense: sizes must be positive");
  DenseParams p;
  p.w = Var(glorot_uniform({in, out}, in, out, rng), true);
  p.b = Var(Tensor({out}, Real(0)), true);
  p.activation = activation;
  return p;
}

Var dense_forward(Tape& tape, const Var& x, const DenseParams& p) {
  const Shape& xs = x.shape();
  if ((xs.size() != 1 && xs.size() != 2) || xs.back() != p.in_features()) {
    throw DimensionError("dense: input " + to_string(xs) + " does not match weight " + to_string(p.w.shape()));
  }
  const Var pre = add(tape, linear(tape, x, p.w), p.b);
  switch (p.activation) {
    case DenseActivation::relu: return relu(tape, pre);
    case DenseActivation::softmax: return softmax(tape, pre, pre.shape().size() - 1);
    case DenseActivation::none: break;
  }
  return pre;
}

}  // namespace ids
