#include <array>

#include "ids/errors.hpp"
#include "ids/layers.hpp"

namespace ids {

namespace {

// Recurrence given the already projected input contributions (x W + b).
Var gru_update(Tape& tape, const Var& xz, const Var& xr, const Var& xh, const Var& h, const GRUParams& p) {
  const Var z = sigmoid(tape, add(tape, xz, linear(tape, h, p.u_update)));
  const Var r = sigmoid(tape, add(tape, xr, linear(tape, h, p.u_reset)));
  const Var c = tanh(tape, add(tape, xh, linear(tape, mul(tape, r, h), p.u_candidate)));
  return add(tape, mul(tape, one_minus(tape, z), h), mul(tape, z, c));
}

Var project(Tape& tape, const Var& x, const Var& w, const Var& b) { return add(tape, linear(tape, x, w), b); }

}  // namespace

void GRUParams::collect(const std::string& prefix, std::vector<NamedVar>& out) const {
  out.push_back({prefix + ".w_update", w_update, true});
  out.push_back({prefix + ".u_update", u_update, true});
  out.push_back({prefix + ".b_update", b_update, true});
  out.push_back({prefix + ".w_reset", w_reset, true});
  out.push_back({prefix + ".u_reset", u_reset, true});
  out.push_back({prefix + ".b_reset", b_reset, true});
  out.push_back({prefix + ".w_candidate", w_candidate, true});
  out.push_back({prefix + ".u_candidate", u_candidate, true});
  out.push_back({prefix + ".b_candidate", b_candidate, true});
}

GRUParams make_gru(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  if (input_size == 0 || hidden_size == 0) throw ConfigError("gru: sizes must be positive");
  auto w = [&] { return Var(glorot_uniform({input_size, hidden_size}, input_size, hidden_size, rng), true); };
  auto u = [&] { return Var(glorot_uniform({hidden_size, hidden_size}, hidden_size, hidden_size, rng), true); };
  auto b = [&] { return Var(Tensor({hidden_size}, Real(0)), true); };
  GRUParams p;
  p.w_update = w();
  p.u_update = u();
  p.b_update = b();
  p.w_reset = w();
  p.u_reset = u();
  p.b_reset = b();
  p.w_candidate = w();
  p.u_candidate = u();
  p.b_candidate = b();
  return p;
}

Var gru_cell_step(Tape& tape, const Var& x_t, const Var& h_prev, const GRUParams& p) {
  const Shape& xs = x_t.shape();
  const Shape& hs = h_prev.shape();
  if (xs.empty() || xs.back() != p.input_size() || hs.empty() || hs.back() != p.hidden_size() ||
      xs.size() != hs.size() || (xs.size() == 2 && xs[0] != hs[0])) {
    throw DimensionError("gru_cell_step: input " + to_string(xs) + " / state " + to_string(hs) +
                         " do not match input size " + std::to_string(p.input_size()) + " and hidden size " +
                         std::to_string(p.hidden_size()));
  }
  return gru_update(tape, project(tape, x_t, p.w_update, p.b_update), project(tape, x_t, p.w_reset, p.b_reset),
                    project(tape, x_t, p.w_candidate, p.b_candidate), h_prev, p);
}

std::vector<Var> gru_sequence(Tape& tape, const Var& x, const GRUParams& p, bool reverse) {
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[2] != p.input_size()) {
    throw DimensionError("gru_sequence: expected [B, T, " + std::to_string(p.input_size()) + "], got " +
                         to_string(xs));
  }
  const std::size_t batch = xs[0], steps = xs[1], hidden = p.hidden_size();
  // Input projections for all time steps at once.
  const Var xz = project(tape, x, p.w_update, p.b_update);
  const Var xr = project(tape, x, p.w_reset, p.b_reset);
  const Var xh = project(tape, x, p.w_candidate, p.b_candidate);
  auto at = [&](const Var& v, std::size_t t) { return reshape(tape, slice(tape, v, 1, t, 1), {batch, hidden}); };

  std::vector<Var> states(steps);
  Var h(Tensor({batch, hidden}, Real(0)));
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = reverse ? steps - 1 - i : i;
    h = gru_update(tape, at(xz, t), at(xr, t), at(xh, t), h, p);
    states[t] = h;
  }
  return states;
}

void BiGRUParams::collect(const std::string& prefix, std::vector<NamedVar>& out) const {
  forward.collect(prefix + ".forward", out);
  backward.collect(prefix + ".backward", out);
}

BiGRUParams make_bigru(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  BiGRUParams p;
  p.forward = make_gru(input_size, hidden_size, rng);
  p.backward = make_gru(input_size, hidden_size, rng);
  return p;
}

Var bigru_forward(Tape& tape, const Var& x, const GRUParams& fwd, const GRUParams& bwd) {
  if (fwd.hidden_size() != bwd.hidden_size()) {
    throw ContractError("bigru: direction hidden sizes differ (" + std::to_string(fwd.hidden_size()) + " vs " +
                        std::to_string(bwd.hidden_size()) + ")");
  }
  const Shape& xs = x.shape();
  if (xs.size() != 2 && xs.size() != 3) throw DimensionError("bigru: expected [T, F] or [B, T, F], got " + to_string(xs));
  const bool batched = xs.size() == 3;
  const Var input = batched ? x : reshape(tape, x, {1, xs[0], xs[1]});
  const std::vector<Var> f = gru_sequence(tape, input, fwd, false);
  const std::vector<Var> b = gru_sequence(tape, input, bwd, true);
  const std::array<Var, 2> halves{stack(tape, f, 1), stack(tape, b, 1)};
  Var out = concat(tape, halves, 2);
  if (!batched) out = reshape(tape, out, {xs[0], 2 * fwd.hidden_size()});
  return out;
}

}  // namespace ids
