#include "gca/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "gca/error.hpp"

namespace gca::ad {

namespace {

double evaluate(const ScalarFnMany& f, const std::vector<Tensor>& xs,
                std::vector<Tensor>* grads_out) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(xs.size());
  for (const Tensor& t : xs) vars.push_back(tape.leaf(t));
  Var out = f(tape, vars);
  if (out.val().size() != 1)
    throw ConfigError("finite_diff_check: f must produce a scalar, got shape " +
                      shape_str(out.val().shape));
  const double value = out.val().v[0];
  if (grads_out != nullptr) {
    tape.backward(out);
    grads_out->clear();
    for (Var v : vars) grads_out->push_back(v.grad());
  }
  return value;
}

}  // namespace

double finite_diff_check_many(const ScalarFnMany& f, const std::vector<Tensor>& xs, double eps) {
  if (eps <= 0.0) throw ConfigError("finite_diff_check: eps must be positive");
  const double probe1 = evaluate(f, xs, nullptr);
  std::vector<Tensor> analytic;
  const double probe2 = evaluate(f, xs, &analytic);
  if (probe1 != probe2)
    throw NumericError("finite_diff_check: f returned different values for identical input; "
                       "freeze all randomness before checking gradients");

  double worst = 0.0;
  std::vector<Tensor> shifted = xs;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    for (std::size_t i = 0; i < xs[t].size(); ++i) {
      const double orig = shifted[t].v[i];
      shifted[t].v[i] = orig + eps;
      const double fp = evaluate(f, shifted, nullptr);
      shifted[t].v[i] = orig - eps;
      const double fm = evaluate(f, shifted, nullptr);
      shifted[t].v[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double err = std::abs(analytic[t].v[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps) {
  return finite_diff_check_many(
      [&f](Tape& tape, const std::vector<Var>& vars) { return f(tape, vars[0]); },
      std::vector<Tensor>{x}, eps);
}

}  // namespace gca::ad
