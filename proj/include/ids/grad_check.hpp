#pragma once

#include <functional>
#include <span>

#include "ids/autodiff.hpp"

namespace ids {

/// A scalar-valued function of the current contents of some Vars.
using ScalarFn = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of `f` with central differences
///   (f(x + h e_i) - f(x - h e_i)) / 2h
/// for every coordinate of every Var in `wrt`, and returns
///   max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
///
/// Each Var must have requires_grad set. Functions with kinks (ReLU at 0) are
/// only checkable when no coordinate sits within h of the kink; callers nudge
/// inputs away from such points.
Real grad_check(const ScalarFn& f, std::span<Var> wrt, Real h);

/// Single-input convenience: f(x) with x initialised from `x0`.
Real grad_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x0, Real h);

}  // namespace ids
