#pragma once

#include <functional>
#include <vector>

#include "gca/tape.hpp"

namespace gca::ad {

// Builds a scalar loss on the given tape from a differentiable leaf bound
// to the probed tensor. Must be pure: same input, same bits out.
using ScalarFn = std::function<Var(Tape&, Var)>;

// Central-difference comparison of analytic gradients against
// (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps), one coordinate at a time.
// Returns max over coordinates of |analytic - numeric| / max(1, |numeric|).
// Throws NumericError if two evaluations of f at x disagree bitwise.
double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

// Same check with several leaves probed jointly (e.g. a whole parameter
// set). Every tensor in xs becomes one differentiable leaf, in order.
using ScalarFnMany = std::function<Var(Tape&, const std::vector<Var>&)>;
double finite_diff_check_many(const ScalarFnMany& f, const std::vector<Tensor>& xs,
                              double eps = 1e-5);

}  // namespace gca::ad
