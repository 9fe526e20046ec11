#include "ids/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ids/errors.hpp"

namespace ids {

namespace {

Real evaluate(const ScalarFn& f) {
  Tape tape(false);
  return f(tape).value()[0];
}

}  // namespace

Real grad_check(const ScalarFn& f, std::span<Var> wrt, Real h) {
  if (h <= 0) throw ContractError("grad_check: step must be positive");
  for (Var& v : wrt) {
    if (!v.requires_grad()) throw ContractError("grad_check: every input must require a gradient");
    v.zero_grad();
  }
  {
    Tape tape;
    Var loss = f(tape);
    if (loss.value().size() != 1) throw ContractError("grad_check: function must be scalar-valued");
    tape.backward(loss);
  }
  Real worst = 0;
  for (Var& v : wrt) {
    const Tensor analytic = v.has_grad() ? v.grad() : Tensor(v.shape(), Real(0));
    Tensor& x = v.mutable_value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Real saved = x[i];
      x[i] = saved + h;
      const Real plus = evaluate(f);
      x[i] = saved - h;
      const Real minus = evaluate(f);
      x[i] = saved;
      const Real numeric = (plus - minus) / (2 * h);
      const Real err = std::abs(analytic[i] - numeric) / std::max(Real(1), std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

Real grad_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x0, Real h) {
  Var x(x0, true);
  std::vector<Var> wrt{x};
  return grad_check([&](Tape& tape) { return f(tape, x); }, wrt, h);
}

}  // namespace ids
