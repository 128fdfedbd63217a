#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pansharp/imaging.hpp"
#include "pansharp/ops.hpp"

namespace pansharp {

// Trade-off weights of the fusion energy
//   (lambda/2)|DB(u)-Y|^2 + beta*|Phat.u - P.Hhat|_1 + mu*R(u),
// with R(u) = 0.5*|grad u|^2 in classical mode. B is the Gaussian blur with
// sigma_b and D the s-fold decimation, matching the data generator.
struct EnergyParams {
  double lambda = 1.0;
  double beta = 0.1;
  double mu = 0.0;
  double sigma_b = -1.0;  // negative requests sigma_b = s/2 at the call site
  int s = 2;

  void validate() const {
    if (lambda <= 0 || beta < 0 || mu < 0)
      throw ContractViolation("energy params: need lambda > 0, beta >= 0, mu >= 0");
  }
};

template <typename T>
Tensor<T> apply_DB(const Tensor<T>& u, const EnergyParams& p) {
  return decimate(gaussian_blur(u, p.sigma_b), p.s);
}

template <typename T>
Tensor<T> apply_BtDt(const Tensor<T>& t, const EnergyParams& p) {
  return gaussian_blur_adjoint(zero_insert(t, p.s), p.sigma_b);
}

// grad^T grad with forward differences and Neumann boundary, per band.
template <typename T>
Tensor<T> laplacian_neumann(const Tensor<T>& u) {
  require_rank(u, 3, "laplacian");
  int c = u.extent(0), h = u.extent(1), w = u.extent(2);
  Tensor<T> out(u.shape());
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        if (x + 1 < w) acc += static_cast<double>(u.at(ci, y, x)) - u.at(ci, y, x + 1);
        if (x > 0) acc += static_cast<double>(u.at(ci, y, x)) - u.at(ci, y, x - 1);
        if (y + 1 < h) acc += static_cast<double>(u.at(ci, y, x)) - u.at(ci, y + 1, x);
        if (y > 0) acc += static_cast<double>(u.at(ci, y, x)) - u.at(ci, y - 1, x);
        out.at(ci, y, x) = static_cast<T>(acc);
      }
  return out;
}

// 0.5*|grad u|^2 with the same discretization as laplacian_neumann.
template <typename T>
double gradient_energy(const Tensor<T>& u) {
  int c = u.extent(0), h = u.extent(1), w = u.extent(2);
  double acc = 0;
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (x + 1 < w) {
          double d = static_cast<double>(u.at(ci, y, x + 1)) - u.at(ci, y, x);
          acc += d * d;
        }
        if (y + 1 < h) {
          double d = static_cast<double>(u.at(ci, y + 1, x)) - u.at(ci, y, x);
          acc += d * d;
        }
      }
  return 0.5 * acc;
}

template <typename T>
double energy_eval(const Tensor<T>& u, const Tensor<T>& y, const Tensor<T>& pan,
                   const Tensor<T>& phat, const Tensor<T>& hhat, const EnergyParams& p) {
  p.validate();
  Tensor<T> r = sub(apply_DB(u, p), y);
  double fid = 0.5 * p.lambda * dot(r, r);
  Tensor<T> c = sub(mul(phat, u), mul(pan, hhat));
  double rad = p.beta * l1_norm(c);
  double prior = p.mu * gradient_energy(u);
  return fid + rad + prior;
}

// Resolvent of the fidelity conjugate: scales the assembled dual argument.
template <typename T>
Tensor<T> prox_dual_fidelity(const Tensor<T>& arg, double tau_d, double lambda) {
  if (tau_d <= 0 || lambda <= 0)
    throw ContractViolation("prox_dual_fidelity: tau_d and lambda must be positive");
  return scale(arg, static_cast<T>(1.0 / (1.0 + tau_d / lambda)));
}

// Componentwise projection onto the L-inf ball of radius beta.
template <typename T>
Tensor<T> project_linf(const Tensor<T>& x, double beta) {
  if (beta <= 0) throw ContractViolation("project_linf: beta must be positive");
  return clamp(x, static_cast<T>(-beta), static_cast<T>(beta));
}

// Conjugate gradient for s.p.d. operators; relative residual target.
template <typename T>
Tensor<T> conjugate_gradient(const std::function<Tensor<T>(const Tensor<T>&)>& apply,
                             const Tensor<T>& b, double rel_tol, int max_iter,
                             const char* what) {
  Tensor<T> x(b.shape());
  Tensor<T> r = b;
  Tensor<T> d = r;
  double bnorm = norm2(b);
  if (bnorm == 0) return x;
  double rr = dot(r, r);
  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) / bnorm < rel_tol) return x;
    Tensor<T> ad = apply(d);
    double alpha = rr / dot(d, ad);
    x.array() += static_cast<T>(alpha) * d.array();
    r.array() -= static_cast<T>(alpha) * ad.array();
    double rr2 = dot(r, r);
    d = add(r, scale(d, static_cast<T>(rr2 / rr)));
    rr = rr2;
  }
  if (std::sqrt(rr) / bnorm >= rel_tol)
    throw NumericalError(std::string(what) + ": CG did not converge in " +
                         std::to_string(max_iter) + " iterations, residual " +
                         std::to_string(std::sqrt(rr) / bnorm));
  return x;
}

// Solves (I + tau_p*mu*grad^T grad) y = x; the exact prox of the quadratic
// gradient prior. mu = 0 (or tau_p = 0) is the identity.
template <typename T>
Tensor<T> prox_quadratic_prior(const Tensor<T>& x, double tau_p, double mu) {
  if (tau_p < 0 || mu < 0) throw ContractViolation("prox_quadratic_prior: tau_p, mu must be >= 0");
  double k = tau_p * mu;
  if (k == 0) return x;
  auto apply = [&](const Tensor<T>& v) {
    Tensor<T> lv = laplacian_neumann(v);
    return add(v, scale(lv, static_cast<T>(k)));
  };
  return conjugate_gradient<T>(apply, x, 1e-8, 500, "prox_quadratic_prior");
}

// Largest singular value of a linear map given K and K^T, by power iteration
// on K^T K.
template <typename T>
double power_iteration_norm(const std::function<Tensor<T>(const Tensor<T>&)>& fwd,
                            const std::function<Tensor<T>(const Tensor<T>&)>& adj,
                            const Shape& in_shape, int iters) {
  if (iters < 10) throw ContractViolation("power_iteration_norm: iters must be >= 10");
  CounterRng rng(0x5eedu);
  Tensor<T> z = Tensor<T>::random_normal(in_shape, rng);
  double lam = 0;
  for (int i = 0; i < iters; ++i) {
    Tensor<T> w = adj(fwd(z));
    double n = norm2(w);
    if (n == 0) return 0;
    lam = n;  // Rayleigh quotient with |z| = 1
    z = scale(w, static_cast<T>(1.0 / n));
  }
  return std::sqrt(lam);
}

template <typename T>
struct PdStateT {
  Tensor<T> u, ubar, t, v;
  int iter = 0;
};

// One Chambolle-Pock iterate: dual ascent in (t, v), primal descent with the
// quadratic prox, then over-relaxation. beta == 0 disables the v block.
template <typename T>
PdStateT<T> pd_iterate(const PdStateT<T>& st, const Tensor<T>& y, const Tensor<T>& pan,
                       const Tensor<T>& phat, const Tensor<T>& hhat, const EnergyParams& p,
                       double tau_p, double tau_d) {
  PdStateT<T> out;
  Tensor<T> targ = add(st.t, scale(sub(apply_DB(st.ubar, p), y), static_cast<T>(tau_d)));
  out.t = prox_dual_fidelity(targ, tau_d, p.lambda);
  if (p.beta > 0) {
    Tensor<T> varg =
        add(st.v, scale(sub(mul(phat, st.ubar), mul(pan, hhat)), static_cast<T>(tau_d)));
    out.v = project_linf(varg, p.beta);
  } else {
    out.v = Tensor<T>(st.v.shape());
  }
  Tensor<T> uarg = sub(st.u, scale(add(apply_BtDt(out.t, p), mul(phat, out.v)),
                                   static_cast<T>(tau_p)));
  out.u = prox_quadratic_prior(uarg, tau_p, p.mu);
  out.ubar = sub(scale(out.u, T(2)), st.u);
  out.iter = st.iter + 1;
  return out;
}

template <typename T>
struct SolveResult {
  Tensor<T> u;
  std::vector<double> energy;    // E(u^n) per iteration
  std::vector<double> residual;  // |u^{n+1}-u^n| / |u^n|
  int iterations = 0;
  bool converged = false;
};

template <typename T>
struct SolveOptions {
  double tau_p = 0;  // 0 means 0.99 / L from power iteration
  double tau_d = 0;
  int max_iter = 2000;
  double tol = 0;  // 0 disables the relative-change stop
  int power_iters = 50;
};

template <typename T>
SolveResult<T> primal_dual_solve(const Tensor<T>& y, const Tensor<T>& pan, const Tensor<T>& phat,
                                 const Tensor<T>& hhat, const EnergyParams& p,
                                 SolveOptions<T> opt = {}) {
  p.validate();
  const Shape hi = phat.shape();
  // L bounds the stacked operator K = (DB ; Phat .) so tau_p*tau_d*L^2 <= 1.
  auto fwd_sq = [&](const Tensor<T>& u) {
    return add(apply_BtDt(apply_DB(u, p), p), mul(mul(phat, phat), u));
  };
  // fwd_sq is already K^T K, so with the identity adjoint the estimate is |K|.
  double l = power_iteration_norm<T>(fwd_sq, [](const Tensor<T>& u) { return u; }, hi,
                                     opt.power_iters);
  l = std::max(l, 1e-6);
  double tau_p = opt.tau_p > 0 ? opt.tau_p : 0.99 / l;
  double tau_d = opt.tau_d > 0 ? opt.tau_d : 0.99 / l;

  PdStateT<T> st;
  st.u = bicubic_up(y, p.s);
  st.ubar = st.u;
  st.t = apply_DB(st.u, p);
  st.v = mul(phat, st.u);

  SolveResult<T> res;
  double e0 = energy_eval(st.u, y, pan, phat, hhat, p);
  for (int it = 0; it < opt.max_iter; ++it) {
    PdStateT<T> next = pd_iterate(st, y, pan, phat, hhat, p, tau_p, tau_d);
    double un = norm2(st.u);
    double r = norm2(sub(next.u, st.u)) / std::max(un, 1e-30);
    double e = energy_eval(next.u, y, pan, phat, hhat, p);
    res.residual.push_back(r);
    res.energy.push_back(e);
    if (e > 10 * std::max(e0, 1e-30) && it > 5)
      throw NumericalError(
          "primal_dual_solve: energy grew by more than 10x the initial value; "
          "reduce tau_p/tau_d below 0.99/L");
    st = next;
    res.iterations = it + 1;
    if (opt.tol > 0 && r < opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.u = st.u;
  return res;
}

}  // namespace pansharp
