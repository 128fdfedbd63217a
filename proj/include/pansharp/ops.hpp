#pragma once

#include <algorithm>
#include <type_traits>
#include <cmath>
#include <string>
#include <vector>

#include "pansharp/tensor.hpp"

namespace pansharp {

// ---------------------------------------------------------------------------
// Broadcasting for binary elementwise ops. Supported pairings:
//   same shape; one side a 1-element scalar; (1,H,W) against (C,H,W).
// ---------------------------------------------------------------------------

enum class Bcast { Same, LeftScalar, RightScalar, LeftChan, RightChan };

inline Bcast bcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Bcast::Same;
  if (shape_numel(a) == 1) return Bcast::LeftScalar;
  if (shape_numel(b) == 1) return Bcast::RightScalar;
  if (a.size() == 3 && b.size() == 3 && a[1] == b[1] && a[2] == b[2]) {
    if (a[0] == 1 && b[0] > 1) return Bcast::LeftChan;
    if (b[0] == 1 && a[0] > 1) return Bcast::RightChan;
  }
  throw ContractViolation(std::string(op) + ": shapes not broadcastable " + shape_str(a) +
                          " vs " + shape_str(b));
}

template <typename T, typename F>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, F f, const char* op) {
  switch (bcast_kind(a.shape(), b.shape(), op)) {
    case Bcast::Same: {
      Tensor<T> out(a.shape());
      for (long i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
      return out;
    }
    case Bcast::LeftScalar: {
      Tensor<T> out(b.shape());
      T av = a[0];
      for (long i = 0; i < b.numel(); ++i) out[i] = f(av, b[i]);
      return out;
    }
    case Bcast::RightScalar: {
      Tensor<T> out(a.shape());
      T bv = b[0];
      for (long i = 0; i < a.numel(); ++i) out[i] = f(a[i], bv);
      return out;
    }
    case Bcast::LeftChan: {
      Tensor<T> out(b.shape());
      long hw = static_cast<long>(b.extent(1)) * b.extent(2);
      for (int c = 0; c < b.extent(0); ++c)
        for (long p = 0; p < hw; ++p) out[c * hw + p] = f(a[p], b[c * hw + p]);
      return out;
    }
    case Bcast::RightChan: {
      Tensor<T> out(a.shape());
      long hw = static_cast<long>(a.extent(1)) * a.extent(2);
      for (int c = 0; c < a.extent(0); ++c)
        for (long p = 0; p < hw; ++p) out[c * hw + p] = f(a[c * hw + p], b[p]);
      return out;
    }
  }
  throw ContractViolation("unreachable");
}

// Sums a gradient of the broadcast output shape back down to `target`.
template <typename T>
Tensor<T> reduce_to_shape(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor<T> out(target);
  if (shape_numel(target) == 1) {
    double acc = 0;
    for (long i = 0; i < g.numel(); ++i) acc += static_cast<double>(g[i]);
    out[0] = static_cast<T>(acc);
    return out;
  }
  // (C,H,W) -> (1,H,W)
  if (target.size() == 3 && target[0] == 1 && g.rank() == 3 && g.extent(1) == target[1] &&
      g.extent(2) == target[2]) {
    long hw = static_cast<long>(target[1]) * target[2];
    for (int c = 0; c < g.extent(0); ++c)
      for (long p = 0; p < hw; ++p) out[p] += g[c * hw + p];
    return out;
  }
  throw ContractViolation("reduce_to_shape: cannot reduce " + shape_str(g.shape()) + " to " +
                          shape_str(target));
}

// ---------------------------------------------------------------------------
// Elementwise primitives
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x + y; }, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x - y; }, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x * y; }, "mul");
}

template <typename T>
void require_safe_divisor(const Tensor<T>& b, const char* op) {
  for (long i = 0; i < b.numel(); ++i)
    if (std::abs(static_cast<double>(b[i])) < 1e-12)
      throw DegenerateInput(std::string(op) + ": divisor magnitude < 1e-12 at flat index " +
                            std::to_string(i));
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  require_safe_divisor(b, "div");
  return binary_op(a, b, [](T x, T y) { return x / y; }, "div");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  out.array() = a.array() * s;
  return out;
}
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  out.array() = a.array() + s;
  return out;
}

template <typename T>
Tensor<T> max_scalar(const Tensor<T>& a, T c) {
  Tensor<T> out(a.shape());
  for (long i = 0; i < a.numel(); ++i) out[i] = std::max(a[i], c);
  return out;
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  out.array() = a.array().exp();
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (long i = 0; i < a.numel(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  Tensor<T> out(a.shape());
  for (long i = 0; i < a.numel(); ++i) out[i] = std::min(std::max(a[i], lo), hi);
  return out;
}

// ---------------------------------------------------------------------------
// matmul on rank-2 tensors
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.extent(1) != b.extent(0))
    throw ContractViolation("matmul: inner extents differ " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> ma(a.data(), a.extent(0), a.extent(1));
  Eigen::Map<const Mat> mb(b.data(), b.extent(0), b.extent(1));
  Tensor<T> out({a.extent(0), b.extent(1)});
  Eigen::Map<Mat>(out.data(), out.extent(0), out.extent(1)) = ma * mb;
  return out;
}

// ---------------------------------------------------------------------------
// Channel concat / spatial zero-pad
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ContractViolation("concat: no inputs");
  int h = parts[0]->extent(1), w = parts[0]->extent(2);
  int ctot = 0;
  for (const auto* p : parts) {
    require_rank(*p, 3, "concat");
    if (p->extent(1) != h || p->extent(2) != w)
      throw ContractViolation("concat: spatial mismatch " + shape_str(p->shape()));
    ctot += p->extent(0);
  }
  Tensor<T> out({ctot, h, w});
  long hw = static_cast<long>(h) * w, off = 0;
  for (const auto* p : parts) {
    std::copy(p->data(), p->data() + p->numel(), out.data() + off);
    off += p->numel();
  }
  (void)hw;
  return out;
}

template <typename T>
Tensor<T> pad_spatial(const Tensor<T>& x, int top, int bottom, int left, int right) {
  require_rank(x, 3, "pad");
  int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  Tensor<T> out({c, h + top + bottom, w + left + right});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      std::copy(&x.at(ci, y, 0), &x.at(ci, y, 0) + w, &out.at(ci, y + top, left));
  return out;
}

template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, int top, int left, int h, int w) {
  require_rank(x, 3, "crop");
  Tensor<T> out({x.extent(0), h, w});
  for (int ci = 0; ci < x.extent(0); ++ci)
    for (int y = 0; y < h; ++y)
      std::copy(&x.at(ci, y + top, left), &x.at(ci, y + top, left) + w, &out.at(ci, y, 0));
  return out;
}

// ---------------------------------------------------------------------------
// conv2d: x (Cin,H,W), w (Cout,Cin,k,k), zero padding, stride >= 1.
// Output (Cout, (H+2p-k)/s+1, (W+2p-k)/s+1).
// ---------------------------------------------------------------------------

inline int conv_out_extent(int in, int k, int stride, int pad, const char* op) {
  int num = in + 2 * pad - k;
  if (num < 0) throw ContractViolation(std::string(op) + ": kernel larger than padded input");
  return num / stride + 1;
}

template <typename T>
void conv2d_shape_check(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                        const char* op) {
  require_rank(x, 3, op);
  require_rank(w, 4, op);
  if (w.extent(1) != x.extent(0))
    throw ContractViolation(std::string(op) + ": weight expects " + std::to_string(w.extent(1)) +
                            " input channels, image has shape " + shape_str(x.shape()));
  if (bias && (bias->rank() != 1 || bias->extent(0) != w.extent(0)))
    throw ContractViolation(std::string(op) + ": bias shape " + shape_str(bias->shape()) +
                            " does not match " + std::to_string(w.extent(0)) + " outputs");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w,
                 std::type_identity_t<const Tensor<T>*> bias, int stride, int pad) {
  conv2d_shape_check(x, w, bias, "conv2d");
  int cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  int cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  int ho = conv_out_extent(h, kh, stride, pad, "conv2d");
  int wo = conv_out_extent(wd, kw, stride, pad, "conv2d");
  Tensor<T> out({cout, ho, wo});
  for (int co = 0; co < cout; ++co) {
    if (bias) {
      T bv = (*bias)[co];
      for (long p = 0; p < static_cast<long>(ho) * wo; ++p) out[co * static_cast<long>(ho) * wo + p] = bv;
    }
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          T wv = w.at4(co, ci, ky, kx);
          if (wv == T(0)) continue;
          int ox0 = 0, ox1 = wo;
          while (ox0 < wo && ox0 * stride - pad + kx < 0) ++ox0;
          while (ox1 > ox0 && (ox1 - 1) * stride - pad + kx >= wd) --ox1;
          int off = kx - pad;
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const T* xr = &x.at(ci, iy, 0);
            T* orow = &out.at(co, oy, 0);
            if (stride == 1) {
              for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * xr[ox + off];
            } else {
              for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * xr[ox * stride + off];
            }
          }
        }
  }
  return out;
}

namespace detail {

// valid ox range so that ox*stride - pad + kx lands in [0, wd)
inline void conv_ox_range(int wo, int stride, int pad, int kx, int wd, int& ox0, int& ox1) {
  ox0 = 0;
  ox1 = wo;
  while (ox0 < wo && ox0 * stride - pad + kx < 0) ++ox0;
  while (ox1 > ox0 && (ox1 - 1) * stride - pad + kx >= wd) --ox1;
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& g, const Tensor<T>& w, int stride, int pad, int h,
                            int wd) {
  int cin = w.extent(1), cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  int ho = g.extent(1), wo = g.extent(2);
  Tensor<T> gx({cin, h, wd});
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          T wv = w.at4(co, ci, ky, kx);
          if (wv == T(0)) continue;
          int ox0, ox1;
          detail::conv_ox_range(wo, stride, pad, kx, wd, ox0, ox1);
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const T* grow = &g.at(co, oy, 0);
            T* xrow = gx.data() + (static_cast<long>(ci) * h + iy) * wd;
            int off = kx - pad;
            if (stride == 1) {
              for (int ox = ox0; ox < ox1; ++ox) xrow[ox + off] += wv * grow[ox];
            } else {
              for (int ox = ox0; ox < ox1; ++ox) xrow[ox * stride + off] += wv * grow[ox];
            }
          }
        }
  return gx;
}

template <typename T>
Tensor<T> conv2d_grad_weight(const Tensor<T>& g, const Tensor<T>& x, int stride, int pad, int kh,
                             int kw) {
  int cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  int cout = g.extent(0), ho = g.extent(1), wo = g.extent(2);
  Tensor<T> gw({cout, cin, kh, kw});
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          int ox0, ox1;
          detail::conv_ox_range(wo, stride, pad, kx, wd, ox0, ox1);
          double acc = 0;
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const T* grow = &g.at(co, oy, 0);
            const T* xrow = x.data() + (static_cast<long>(ci) * h + iy) * wd;
            int off = kx - pad;
            if (stride == 1) {
              T local = T(0);
              for (int ox = ox0; ox < ox1; ++ox) local += grow[ox] * xrow[ox + off];
              acc += local;
            } else {
              for (int ox = ox0; ox < ox1; ++ox)
                acc += static_cast<double>(grow[ox]) * xrow[ox * stride + off];
            }
          }
          gw.at4(co, ci, ky, kx) = static_cast<T>(acc);
        }
  return gw;
}

template <typename T>
Tensor<T> spatial_sum_per_channel(const Tensor<T>& g) {
  require_rank(g, 3, "bias_grad");
  Tensor<T> out({g.extent(0)});
  long hw = static_cast<long>(g.extent(1)) * g.extent(2);
  for (int c = 0; c < g.extent(0); ++c) {
    double acc = 0;
    for (long p = 0; p < hw; ++p) acc += static_cast<double>(g[c * hw + p]);
    out[c] = static_cast<T>(acc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transposed conv: x (Cin,h,w), w (Cout,Cin,k,k), output
// (Cout, (h-1)*stride - 2*pad + k, ...). out[y = iy*s - p + ky] += x*w.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d_transposed(const Tensor<T>& x, const Tensor<T>& w,
                            std::type_identity_t<const Tensor<T>*> bias, int stride, int pad) {
  conv2d_shape_check(x, w, bias, "conv2d_transposed");
  int cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  int cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  int ho = (h - 1) * stride - 2 * pad + kh;
  int wo = (wd - 1) * stride - 2 * pad + kw;
  if (ho <= 0 || wo <= 0)
    throw ContractViolation("conv2d_transposed: non-positive output extent");
  Tensor<T> out({cout, ho, wo});
  for (int co = 0; co < cout; ++co) {
    if (bias) {
      T bv = (*bias)[co];
      for (long p = 0; p < static_cast<long>(ho) * wo; ++p)
        out[co * static_cast<long>(ho) * wo + p] = bv;
    }
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          T wv = w.at4(co, ci, ky, kx);
          if (wv == T(0)) continue;
          int ix0, ix1;
          detail::conv_ox_range(wd, stride, pad, kx, wo, ix0, ix1);
          int off = kx - pad;
          for (int iy = 0; iy < h; ++iy) {
            int oy = iy * stride - pad + ky;
            if (oy < 0 || oy >= ho) continue;
            const T* xrow = &x.at(ci, iy, 0);
            T* orow = &out.at(co, oy, 0);
            for (int ix = ix0; ix < ix1; ++ix) orow[ix * stride + off] += wv * xrow[ix];
          }
        }
  }
  return out;
}

template <typename T>
Tensor<T> tconv_grad_input(const Tensor<T>& g, const Tensor<T>& w, int stride, int pad, int h,
                           int wd) {
  int cin = w.extent(1), cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  int ho = g.extent(1), wo = g.extent(2);
  Tensor<T> gx({cin, h, wd});
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          T wv = w.at4(co, ci, ky, kx);
          if (wv == T(0)) continue;
          int ix0, ix1;
          detail::conv_ox_range(wd, stride, pad, kx, wo, ix0, ix1);
          int off = kx - pad;
          for (int iy = 0; iy < h; ++iy) {
            int oy = iy * stride - pad + ky;
            if (oy < 0 || oy >= ho) continue;
            const T* grow = &g.at(co, oy, 0);
            T* xrow = &gx.at(ci, iy, 0);
            for (int ix = ix0; ix < ix1; ++ix) xrow[ix] += wv * grow[ix * stride + off];
          }
        }
  return gx;
}

template <typename T>
Tensor<T> tconv_grad_weight(const Tensor<T>& g, const Tensor<T>& x, int stride, int pad, int kh,
                            int kw) {
  int cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  int cout = g.extent(0), ho = g.extent(1), wo = g.extent(2);
  Tensor<T> gw({cout, cin, kh, kw});
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          int ix0, ix1;
          detail::conv_ox_range(wd, stride, pad, kx, wo, ix0, ix1);
          int off = kx - pad;
          double acc = 0;
          for (int iy = 0; iy < h; ++iy) {
            int oy = iy * stride - pad + ky;
            if (oy < 0 || oy >= ho) continue;
            const T* grow = &g.at(co, oy, 0);
            const T* xrow = &x.at(ci, iy, 0);
            T local = T(0);
            for (int ix = ix0; ix < ix1; ++ix) local += grow[ix * stride + off] * xrow[ix];
            acc += local;
          }
          gw.at4(co, ci, ky, kx) = static_cast<T>(acc);
        }
  return gw;
}

// ---------------------------------------------------------------------------
// Batch norm over the spatial extent of each channel.
// ---------------------------------------------------------------------------

template <typename T>
struct BnForward {
  Tensor<T> out;
  Tensor<T> xhat;    // saved for the train-mode backward
  Tensor<T> invstd;  // per channel
};

template <typename T>
BnForward<T> bn_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps) {
  require_rank(x, 3, "batch_norm");
  int c = x.extent(0);
  long hw = static_cast<long>(x.extent(1)) * x.extent(2);
  BnForward<T> r{Tensor<T>(x.shape()), Tensor<T>(x.shape()), Tensor<T>({c})};
  for (int ci = 0; ci < c; ++ci) {
    const T* xp = x.data() + ci * hw;
    double mean = 0;
    for (long p = 0; p < hw; ++p) mean += xp[p];
    mean /= static_cast<double>(hw);
    double var = 0;
    for (long p = 0; p < hw; ++p) {
      double d = xp[p] - mean;
      var += d * d;
    }
    var /= static_cast<double>(hw);
    double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    r.invstd[ci] = static_cast<T>(inv);
    T* xh = r.xhat.data() + ci * hw;
    T* op = r.out.data() + ci * hw;
    for (long p = 0; p < hw; ++p) {
      xh[p] = static_cast<T>((xp[p] - mean) * inv);
      op[p] = gamma[ci] * xh[p] + beta[ci];
    }
    double unbiased = hw > 1 ? var * static_cast<double>(hw) / static_cast<double>(hw - 1) : var;
    running_mean[ci] = static_cast<T>((1 - momentum) * running_mean[ci] + momentum * mean);
    running_var[ci] = static_cast<T>((1 - momentum) * running_var[ci] + momentum * unbiased);
  }
  return r;
}

template <typename T>
Tensor<T> bn_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                  const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps) {
  require_rank(x, 3, "batch_norm");
  int c = x.extent(0);
  long hw = static_cast<long>(x.extent(1)) * x.extent(2);
  Tensor<T> out(x.shape());
  for (int ci = 0; ci < c; ++ci) {
    T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[ci]) +
                                           static_cast<double>(eps)));
    T a = gamma[ci] * inv;
    T b = beta[ci] - a * running_mean[ci];
    const T* xp = x.data() + ci * hw;
    T* op = out.data() + ci * hw;
    for (long p = 0; p < hw; ++p) op[p] = a * xp[p] + b;
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax over one axis
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw ContractViolation("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                            shape_str(x.shape()));
  long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.extent(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);
  long n = x.extent(axis);
  Tensor<T> out(x.shape());
  for (long o = 0; o < outer; ++o)
    for (long i = 0; i < inner; ++i) {
      auto idx = [&](long k) { return (o * n + k) * inner + i; };
      T m = x[idx(0)];
      for (long k = 1; k < n; ++k) m = std::max(m, x[idx(k)]);
      double z = 0;
      for (long k = 0; k < n; ++k) z += std::exp(static_cast<double>(x[idx(k)] - m));
      for (long k = 0; k < n; ++k)
        out[idx(k)] = static_cast<T>(std::exp(static_cast<double>(x[idx(k)] - m)) / z);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions (double accumulation)
// ---------------------------------------------------------------------------

template <typename T>
double sum(const Tensor<T>& x) {
  double acc = 0;
  for (long i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]);
  return acc;
}

template <typename T>
double mean(const Tensor<T>& x) {
  return sum(x) / static_cast<double>(x.numel());
}

template <typename T>
double l1_norm(const Tensor<T>& x) {
  double acc = 0;
  for (long i = 0; i < x.numel(); ++i) acc += std::abs(static_cast<double>(x[i]));
  return acc;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "dot");
  double acc = 0;
  for (long i = 0; i < a.numel(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <typename T>
double norm2(const Tensor<T>& x) {
  return std::sqrt(dot(x, x));
}

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mse");
  double acc = 0;
  for (long i = 0; i < a.numel(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

// ---------------------------------------------------------------------------
// Decimation (offset 0) and its adjoint zero-insertion
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> decimate(const Tensor<T>& x, int q) {
  require_rank(x, 3, "decimate");
  if (q == 1) return x;
  if (x.extent(1) % q != 0)
    throw ContractViolation("decimate: height " + std::to_string(x.extent(1)) +
                            " not divisible by " + std::to_string(q));
  if (x.extent(2) % q != 0)
    throw ContractViolation("decimate: width " + std::to_string(x.extent(2)) +
                            " not divisible by " + std::to_string(q));
  Tensor<T> out({x.extent(0), x.extent(1) / q, x.extent(2) / q});
  for (int c = 0; c < x.extent(0); ++c)
    for (int y = 0; y < out.extent(1); ++y)
      for (int xx = 0; xx < out.extent(2); ++xx) out.at(c, y, xx) = x.at(c, q * y, q * xx);
  return out;
}

template <typename T>
Tensor<T> zero_insert(const Tensor<T>& x, int q) {
  require_rank(x, 3, "zero_insert");
  if (q == 1) return x;
  Tensor<T> out({x.extent(0), x.extent(1) * q, x.extent(2) * q});
  for (int c = 0; c < x.extent(0); ++c)
    for (int y = 0; y < x.extent(1); ++y)
      for (int xx = 0; xx < x.extent(2); ++xx) out.at(c, q * y, q * xx) = x.at(c, y, xx);
  return out;
}

template <typename T>
Tensor<T> replicate_channels(const Tensor<T>& x, int c) {
  require_rank(x, 3, "replicate_channels");
  if (x.extent(0) != 1) throw ContractViolation("replicate_channels: source must have 1 channel");
  Tensor<T> out({c, x.extent(1), x.extent(2)});
  long hw = static_cast<long>(x.extent(1)) * x.extent(2);
  for (int ci = 0; ci < c; ++ci) std::copy(x.data(), x.data() + hw, out.data() + ci * hw);
  return out;
}

}  // namespace pansharp
