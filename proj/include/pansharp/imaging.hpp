#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pansharp/autodiff.hpp"
#include "pansharp/ops.hpp"
#include "pansharp/tensor.hpp"

namespace pansharp {

// Non-decreasing prime factorization; s = 1 yields an empty list.
inline std::vector<int> prime_decomposition(int s) {
  if (s <= 0) throw ContractViolation("prime_decomposition: s must be positive, got " +
                                      std::to_string(s));
  std::vector<int> out;
  for (int p = 2; static_cast<long>(p) * p <= s; ++p)
    while (s % p == 0) {
      out.push_back(p);
      s /= p;
    }
  if (s > 1) out.push_back(s);
  return out;
}

// Mirror reflection about the boundary, edge sample included: -1 -> 0, n -> n-1.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

// Truncated at radius ceil(4*sigma), renormalized to sum 1. sigma == 0 gives
// the identity kernel.
inline std::vector<double> gaussian_kernel(double sigma) {
  if (sigma < 0) throw ContractViolation("gaussian_kernel: sigma must be >= 0");
  if (sigma == 0) return {1.0};
  int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double s2 = 2.0 * sigma * sigma, total = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-static_cast<double>(i) * i / s2);
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

namespace detail {

// axis: 1 = rows (vertical), 2 = cols (horizontal). Reflect boundary.
template <typename T>
Tensor<T> blur_axis(const Tensor<T>& x, const std::vector<double>& k, int axis, bool adjoint) {
  require_rank(x, 3, "gaussian_blur");
  int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  int radius = static_cast<int>(k.size()) / 2;
  Tensor<T> out(x.shape());
  int n = axis == 1 ? h : w;
  int m = axis == 1 ? w : h;
  for (int ci = 0; ci < c; ++ci)
    for (int j = 0; j < m; ++j) {
      auto at = [&](Tensor<T>& t, int i) -> T& {
        return axis == 1 ? t.at(ci, i, j) : t.at(ci, j, i);
      };
      auto cat = [&](const Tensor<T>& t, int i) -> T {
        return axis == 1 ? t.at(ci, i, j) : t.at(ci, j, i);
      };
      if (!adjoint) {
        for (int i = 0; i < n; ++i) {
          double acc = 0;
          for (int d = -radius; d <= radius; ++d)
            acc += k[d + radius] * cat(x, reflect_index(i + d, n));
          at(out, i) = static_cast<T>(acc);
        }
      } else {
        // exact adjoint of the reflect-padded convolution: scatter through
        // the same index map
        for (int i = 0; i < n; ++i) {
          double g = cat(x, i);
          for (int d = -radius; d <= radius; ++d)
            at(out, reflect_index(i + d, n)) += static_cast<T>(k[d + radius] * g);
        }
      }
    }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& x, double sigma) {
  if (sigma == 0) return x;
  auto k = gaussian_kernel(sigma);
  return detail::blur_axis(detail::blur_axis(x, k, 1, false), k, 2, false);
}

template <typename T>
Tensor<T> gaussian_blur_adjoint(const Tensor<T>& x, double sigma) {
  if (sigma == 0) return x;
  auto k = gaussian_kernel(sigma);
  return detail::blur_axis(detail::blur_axis(x, k, 2, true), k, 1, true);
}

// ---------------------------------------------------------------------------
// Bicubic (Catmull-Rom, a = -0.5) resampling by an integer factor, reflect
// boundary. The grid is top-left aligned: upsampling maps output y to source
// y/s, so out(s*i) == in(i); downsampling samples at y*s, matching the
// decimation offset.
// ---------------------------------------------------------------------------

inline double cubic_weight(double t) {
  t = std::abs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

namespace detail {

template <typename T>
Tensor<T> cubic_axis(const Tensor<T>& x, int n_out, double step, int axis) {
  int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  int n = axis == 1 ? h : w;
  int m = axis == 1 ? w : h;
  Shape os = axis == 1 ? Shape{c, n_out, w} : Shape{c, h, n_out};
  Tensor<T> out(os);
  for (int i = 0; i < n_out; ++i) {
    double src = static_cast<double>(i) * step;
    int i0 = static_cast<int>(std::floor(src));
    double wts[4];
    for (int d = 0; d < 4; ++d) wts[d] = cubic_weight(src - (i0 - 1 + d));
    for (int ci = 0; ci < c; ++ci)
      for (int j = 0; j < m; ++j) {
        double acc = 0;
        for (int d = 0; d < 4; ++d) {
          int si = reflect_index(i0 - 1 + d, n);
          acc += wts[d] * (axis == 1 ? x.at(ci, si, j) : x.at(ci, j, si));
        }
        if (axis == 1)
          out.at(ci, i, j) = static_cast<T>(acc);
        else
          out.at(ci, j, i) = static_cast<T>(acc);
      }
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> bicubic_up(const Tensor<T>& x, int s) {
  require_rank(x, 3, "bicubic");
  if (s < 1) throw ContractViolation("bicubic: factor must be >= 1");
  if (s == 1) return x;
  double step = 1.0 / static_cast<double>(s);
  Tensor<T> t = detail::cubic_axis(x, x.extent(1) * s, step, 1);
  return detail::cubic_axis(t, x.extent(2) * s, step, 2);
}

namespace detail {

// Exact adjoint of cubic_axis: scatter through the same taps and reflection.
template <typename T>
Tensor<T> cubic_axis_adjoint(const Tensor<T>& g, int n_in, double step, int axis) {
  int c = g.extent(0), h = g.extent(1), w = g.extent(2);
  int n_out = axis == 1 ? h : w;
  int m = axis == 1 ? w : h;
  Shape os = axis == 1 ? Shape{c, n_in, w} : Shape{c, h, n_in};
  Tensor<T> out(os);
  for (int i = 0; i < n_out; ++i) {
    double src = static_cast<double>(i) * step;
    int i0 = static_cast<int>(std::floor(src));
    double wts[4];
    int idx[4];
    for (int d = 0; d < 4; ++d) {
      wts[d] = cubic_weight(src - (i0 - 1 + d));
      idx[d] = reflect_index(i0 - 1 + d, n_in);
    }
    for (int ci = 0; ci < c; ++ci)
      for (int j = 0; j < m; ++j) {
        double gv = axis == 1 ? g.at(ci, i, j) : g.at(ci, j, i);
        for (int d = 0; d < 4; ++d) {
          if (axis == 1)
            out.at(ci, idx[d], j) += static_cast<T>(wts[d] * gv);
          else
            out.at(ci, j, idx[d]) += static_cast<T>(wts[d] * gv);
        }
      }
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> bicubic_up_adjoint(const Tensor<T>& g, int s) {
  require_rank(g, 3, "bicubic_adjoint");
  if (s == 1) return g;
  double step = 1.0 / static_cast<double>(s);
  Tensor<T> t = detail::cubic_axis_adjoint(g, g.extent(2) / s, step, 2);
  return detail::cubic_axis_adjoint(t, g.extent(1) / s, step, 1);
}

// Differentiable bicubic upsampling (a fixed linear map).
template <typename T>
Var<T> bicubic_up(Var<T> x, int s) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = bicubic_up(x.value(), s);
  return t.make(std::move(out), t.requires_grad(x.id), [x, s](Tape<T>& tp, int self) {
    tp.add_grad(x.id, bicubic_up_adjoint(tp.grad(Var<T>{&tp, self}), s));
  });
}

template <typename T>
Tensor<T> bicubic_down(const Tensor<T>& x, int s) {
  require_rank(x, 3, "bicubic");
  if (s < 1) throw ContractViolation("bicubic: factor must be >= 1");
  if (s == 1) return x;
  if (x.extent(1) % s != 0 || x.extent(2) % s != 0)
    throw ContractViolation("bicubic: extents " + shape_str(x.shape()) + " not divisible by " +
                            std::to_string(s));
  Tensor<T> t = detail::cubic_axis(x, x.extent(1) / s, static_cast<double>(s), 1);
  return detail::cubic_axis(t, x.extent(2) / s, static_cast<double>(s), 2);
}

template <typename T>
Tensor<T> bicubic_resample(const Tensor<T>& x, int s, bool up) {
  return up ? bicubic_up(x, s) : bicubic_down(x, s);
}

// ---------------------------------------------------------------------------
// PAN pyramid: levels[0] is the full-resolution 1-channel PAN; level k is
// level k-1 low-passed (Gaussian, sigma = q/2) and decimated by q, consuming
// the primes from the largest down. Built with fixed weights so datasets and
// model stages see the same geometry images.
// ---------------------------------------------------------------------------

template <typename T>
struct PanPyramid {
  std::vector<Tensor<T>> levels;

  const Tensor<T>& level(int k) const { return levels[static_cast<std::size_t>(k)]; }
  int depth() const { return static_cast<int>(levels.size()); }
};

template <typename T>
Tensor<T> pyramid_step(const Tensor<T>& x, int q) {
  if (x.extent(1) % q != 0 || x.extent(2) % q != 0)
    throw ContractViolation("pan_pyramid: level shape " + shape_str(x.shape()) +
                            " not divisible by prime " + std::to_string(q));
  return decimate(gaussian_blur(x, static_cast<double>(q) / 2.0), q);
}

template <typename T>
PanPyramid<T> build_pan_pyramid(const Tensor<T>& pan, const std::vector<int>& primes_asc) {
  require_rank(pan, 3, "pan_pyramid");
  if (pan.extent(0) != 1) throw ContractViolation("pan_pyramid: PAN must have a single channel");
  PanPyramid<T> pyr;
  pyr.levels.push_back(pan);
  int m = static_cast<int>(primes_asc.size());
  for (int k = 1; k < m; ++k) {
    int q = primes_asc[static_cast<std::size_t>(m - k)];  // q_{M-k+1}, 1-based
    pyr.levels.push_back(pyramid_step(pyr.levels.back(), q));
  }
  return pyr;
}

}  // namespace pansharp
