#pragma once

#include <cmath>
#include <functional>

#include "pansharp/autodiff.hpp"

namespace pansharp {

// Differentiable scalar-valued map under test: builds a scalar Var from the
// given input Var on the given tape.
using GradFn = std::function<Var<double>(Tape<double>&, Var<double>)>;

inline double gradcheck_forward(const GradFn& fn, const Tensor<double>& point) {
  Tape<double> tape(/*recording=*/false);
  Var<double> x = tape.input(point);
  Var<double> y = fn(tape, x);
  if (y.value().numel() != 1)
    throw ContractViolation("grad_check: fn must produce a scalar, got shape " +
                            shape_str(y.value().shape()));
  double v = y.value()[0];
  if (!std::isfinite(v)) throw DegenerateInput("grad_check: non-finite forward value");
  return v;
}

// Max over coordinates of |analytic - central difference| normalized by
// (|analytic| + |cd| + 1e-12). 64-bit only.
inline double grad_check(const GradFn& fn, const Tensor<double>& point, double h = 1e-5) {
  Tape<double> tape;
  Var<double> x = tape.input(point);
  Var<double> loss = fn(tape, x);
  if (loss.value().numel() != 1)
    throw ContractViolation("grad_check: fn must produce a scalar");
  if (!std::isfinite(loss.value()[0]))
    throw DegenerateInput("grad_check: non-finite forward value");
  tape.backward(loss);
  Tensor<double> analytic = tape.grad(x);

  double max_err = 0;
  Tensor<double> p = point;
  for (long i = 0; i < point.numel(); ++i) {
    double orig = p[i];
    p[i] = orig + h;
    double fp = gradcheck_forward(fn, p);
    p[i] = orig - h;
    double fm = gradcheck_forward(fn, p);
    p[i] = orig;
    double cd = (fp - fm) / (2 * h);
    double err = std::abs(analytic[i] - cd) / (std::abs(analytic[i]) + std::abs(cd) + 1e-12);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace pansharp
