#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pansharp/ops.hpp"
#include "pansharp/tensor.hpp"

namespace pansharp {

// A named, trainable tensor owned by a model. Gradients accumulate across
// backward passes until zero_grad(), which is what batching relies on.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.array().setZero(); }
};

template <typename T>
class Tape;

// Lightweight handle to a tape node.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
};

// Eager reverse-mode tape. Nodes are appended in execution order, so the
// reverse node order is a valid topological order for backprop. One tape
// serves one forward/backward pass; reset() frees everything.
template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int self)>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, nullptr, nullptr); }

  // Leaf bound to a model parameter; backward() adds into p.grad.
  Var<T> leaf(Param<T>& p) {
    return push(Tensor<T>(p.value), recording_ && p.trainable, nullptr, &p);
  }

  // Leaf whose gradient is read back through grad() (used by grad checks).
  Var<T> input(Tensor<T> v) { return push(std::move(v), recording_, nullptr, nullptr); }

  Var<T> make(Tensor<T> v, bool requires_grad, BackFn back) {
    return push(std::move(v), recording_ && requires_grad, recording_ ? std::move(back) : nullptr,
                nullptr);
  }

  const Tensor<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  const Tensor<T>& grad(Var<T> v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  // grad[id] += g, reducing over broadcast axes if needed. No-op for nodes
  // that do not require gradients.
  void add_grad(int id, const Tensor<T>& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    Tensor<T> r = reduce_to_shape(g, n.value.shape());
    if (n.grad.empty())
      n.grad = std::move(r);
    else
      n.grad.array() += r.array();
  }

  // Reverse sweep from a scalar loss. Gradients of bound parameters are
  // accumulated into Param::grad. The tape is single-use afterwards.
  void backward(Var<T> loss) {
    if (consumed_) throw ContractViolation("backward: tape already consumed");
    if (nodes_.empty()) throw ContractViolation("backward: empty tape");
    Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (ln.value.numel() != 1)
      throw ContractViolation("backward: loss must be scalar, got shape " +
                              shape_str(ln.value.shape()));
    ln.grad = Tensor<T>::full(ln.value.shape(), T(1));
    ln.requires_grad = true;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.back) n.back(*this, i);
      if (n.param) n.param->grad.array() += n.grad.array();
    }
    consumed_ = true;
  }

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackFn back;
    Param<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var<T> push(Tensor<T> v, bool req, BackFn back, Param<T>* p) {
    if (consumed_) throw ContractViolation("tape: consumed by backward; reset() before reuse");
    Node n;
    n.value = std::move(v);
    n.back = std::move(back);
    n.param = p;
    n.requires_grad = req;
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool recording_ = true;
  bool consumed_ = false;
};

namespace detail {
template <typename T>
Tape<T>& same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape != b.tape) throw ContractViolation(std::string(op) + ": operands on different tapes");
  return *a.tape;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable wrappers. Each records a closure that routes the output
// gradient to its inputs using the kernels in ops.hpp.
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b, "add");
  Tensor<T> out = add(a.value(), b.value());
  bool req = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.make(std::move(out), req, [a, b](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    tp.add_grad(a.id, g);
    tp.add_grad(b.id, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b, "sub");
  Tensor<T> out = sub(a.value(), b.value());
  bool req = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.make(std::move(out), req, [a, b](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    tp.add_grad(a.id, g);
    tp.add_grad(b.id, scale(g, T(-1)));
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b, "mul");
  Tensor<T> out = mul(a.value(), b.value());
  bool req = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.make(std::move(out), req, [a, b](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    if (tp.requires_grad(a.id)) tp.add_grad(a.id, mul(g, b.value()));
    if (tp.requires_grad(b.id)) tp.add_grad(b.id, mul(g, a.value()));
  });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b, "div");
  Tensor<T> out = div(a.value(), b.value());
  bool req = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.make(std::move(out), req, [a, b](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    if (tp.requires_grad(a.id)) tp.add_grad(a.id, div(g, b.value()));
    if (tp.requires_grad(b.id)) {
      Tensor<T> gb = mul(g, div(a.value(), mul(b.value(), b.value())));
      tp.add_grad(b.id, scale(gb, T(-1)));
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tape<T>& t = *a.tape;
  return t.make(scale(a.value(), s), t.requires_grad(a.id), [a, s](Tape<T>& tp, int self) {
    tp.add_grad(a.id, scale(tp.grad(Var<T>{&tp, self}), s));
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  Tape<T>& t = *a.tape;
  return t.make(add_scalar(a.value(), s), t.requires_grad(a.id), [a](Tape<T>& tp, int self) {
    tp.add_grad(a.id, tp.grad(Var<T>{&tp, self}));
  });
}

template <typename T>
Var<T> max_scalar(Var<T> a, T c) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = max_scalar(a.value(), c);
  return t.make(std::move(out), t.requires_grad(a.id), [a, c](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    const Tensor<T>& x = tp.value(a.id);
    Tensor<T> gx(x.shape());
    for (long i = 0; i < x.numel(); ++i) gx[i] = x[i] > c ? g[i] : T(0);
    tp.add_grad(a.id, gx);
  });
}

template <typename T>
Var<T> exp(Var<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = exp(a.value());
  return t.make(std::move(out), t.requires_grad(a.id), [a](Tape<T>& tp, int self) {
    tp.add_grad(a.id, mul(tp.grad(Var<T>{&tp, self}), tp.value(self)));
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = relu(a.value());
  return t.make(std::move(out), t.requires_grad(a.id), [a](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    const Tensor<T>& x = tp.value(a.id);
    Tensor<T> gx(x.shape());
    for (long i = 0; i < x.numel(); ++i) gx[i] = x[i] > T(0) ? g[i] : T(0);
    tp.add_grad(a.id, gx);
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b, "matmul");
  Tensor<T> out = matmul(a.value(), b.value());
  bool req = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.make(std::move(out), req, [a, b](Tape<T>& tp, int self) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    const Tensor<T>& av = tp.value(a.id);
    const Tensor<T>& bv = tp.value(b.id);
    Eigen::Map<const Mat> mg(g.data(), g.extent(0), g.extent(1));
    Eigen::Map<const Mat> ma(av.data(), av.extent(0), av.extent(1));
    Eigen::Map<const Mat> mb(bv.data(), bv.extent(0), bv.extent(1));
    if (tp.requires_grad(a.id)) {
      Tensor<T> ga(av.shape());
      Eigen::Map<Mat>(ga.data(), ga.extent(0), ga.extent(1)) = mg * mb.transpose();
      tp.add_grad(a.id, ga);
    }
    if (tp.requires_grad(b.id)) {
      Tensor<T> gb(bv.shape());
      Eigen::Map<Mat>(gb.data(), gb.extent(0), gb.extent(1)) = ma.transpose() * mg;
      tp.add_grad(b.id, gb);
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractViolation("concat: no inputs");
  Tape<T>& t = *parts[0].tape;
  std::vector<const Tensor<T>*> vals;
  bool req = false;
  for (const auto& p : parts) {
    vals.push_back(&p.value());
    req = req || t.requires_grad(p.id);
  }
  Tensor<T> out = concat_channels(vals);
  return t.make(std::move(out), req, [parts](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    int h = g.extent(1), w = g.extent(2);
    int c0 = 0;
    for (const auto& p : parts) {
      int c = tp.value(p.id).extent(0);
      if (tp.requires_grad(p.id)) {
        Tensor<T> gp({c, h, w});
        std::copy(&g.at(c0, 0, 0), &g.at(c0, 0, 0) + gp.numel(), gp.data());
        tp.add_grad(p.id, gp);
      }
      c0 += c;
    }
  });
}

template <typename T>
Var<T> pad_spatial(Var<T> a, int top, int bottom, int left, int right) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = pad_spatial(a.value(), top, bottom, left, right);
  return t.make(std::move(out), t.requires_grad(a.id),
                [a, top, left](Tape<T>& tp, int self) {
                  const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
                  const Shape& s = tp.value(a.id).shape();
                  tp.add_grad(a.id, crop_spatial(g, top, left, s[1], s[2]));
                });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, int stride, int pad) {
  Tape<T>& t = detail::same_tape(x, w, "conv2d");
  const Tensor<T>* bp = bias.id >= 0 ? &bias.value() : nullptr;
  Tensor<T> out = conv2d(x.value(), w.value(), bp, stride, pad);
  bool req = t.requires_grad(x.id) || t.requires_grad(w.id) ||
             (bias.id >= 0 && t.requires_grad(bias.id));
  return t.make(std::move(out), req, [x, w, bias, stride, pad](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    const Tensor<T>& xv = tp.value(x.id);
    const Tensor<T>& wv = tp.value(w.id);
    if (tp.requires_grad(x.id))
      tp.add_grad(x.id, conv2d_grad_input(g, wv, stride, pad, xv.extent(1), xv.extent(2)));
    if (tp.requires_grad(w.id))
      tp.add_grad(w.id, conv2d_grad_weight(g, xv, stride, pad, wv.extent(2), wv.extent(3)));
    if (bias.id >= 0 && tp.requires_grad(bias.id))
      tp.add_grad(bias.id, spatial_sum_per_channel(g));
  });
}

template <typename T>
Var<T> conv2d_transposed(Var<T> x, Var<T> w, Var<T> bias, int stride, int pad) {
  Tape<T>& t = detail::same_tape(x, w, "conv2d_transposed");
  const Tensor<T>* bp = bias.id >= 0 ? &bias.value() : nullptr;
  Tensor<T> out = conv2d_transposed(x.value(), w.value(), bp, stride, pad);
  bool req = t.requires_grad(x.id) || t.requires_grad(w.id) ||
             (bias.id >= 0 && t.requires_grad(bias.id));
  return t.make(std::move(out), req, [x, w, bias, stride, pad](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    const Tensor<T>& xv = tp.value(x.id);
    const Tensor<T>& wv = tp.value(w.id);
    if (tp.requires_grad(x.id))
      tp.add_grad(x.id, tconv_grad_input(g, wv, stride, pad, xv.extent(1), xv.extent(2)));
    if (tp.requires_grad(w.id))
      tp.add_grad(w.id, tconv_grad_weight(g, xv, stride, pad, wv.extent(2), wv.extent(3)));
    if (bias.id >= 0 && tp.requires_grad(bias.id))
      tp.add_grad(bias.id, spatial_sum_per_channel(g));
  });
}

// Train-mode batch norm; updates running stats in place as a side effect.
template <typename T>
Var<T> batch_norm_train(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>& running_mean,
                        Tensor<T>& running_var, T momentum, T eps) {
  Tape<T>& t = *x.tape;
  BnForward<T> f = bn_train(x.value(), gamma.value(), beta.value(), running_mean, running_var,
                            momentum, eps);
  bool req = t.requires_grad(x.id) || t.requires_grad(gamma.id) || t.requires_grad(beta.id);
  // xhat and invstd are captured by value for the backward pass.
  Tensor<T> xhat = std::move(f.xhat);
  Tensor<T> invstd = std::move(f.invstd);
  return t.make(std::move(f.out), req,
                [x, gamma, beta, xhat, invstd](Tape<T>& tp, int self) {
                  const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
                  int c = g.extent(0);
                  long hw = static_cast<long>(g.extent(1)) * g.extent(2);
                  Tensor<T> ggamma({c}), gbeta({c});
                  for (int ci = 0; ci < c; ++ci) {
                    double sg = 0, sgx = 0;
                    for (long p = 0; p < hw; ++p) {
                      sg += static_cast<double>(g[ci * hw + p]);
                      sgx += static_cast<double>(g[ci * hw + p]) * xhat[ci * hw + p];
                    }
                    ggamma[ci] = static_cast<T>(sgx);
                    gbeta[ci] = static_cast<T>(sg);
                  }
                  if (tp.requires_grad(x.id)) {
                    const Tensor<T>& gm = tp.value(gamma.id);
                    Tensor<T> gx(g.shape());
                    for (int ci = 0; ci < c; ++ci) {
                      double sg = gbeta[ci], sgx = ggamma[ci];
                      double k = static_cast<double>(gm[ci]) * invstd[ci] / static_cast<double>(hw);
                      for (long p = 0; p < hw; ++p) {
                        double n = static_cast<double>(hw) * g[ci * hw + p] - sg -
                                   static_cast<double>(xhat[ci * hw + p]) * sgx;
                        gx[ci * hw + p] = static_cast<T>(k * n);
                      }
                    }
                    tp.add_grad(x.id, gx);
                  }
                  tp.add_grad(gamma.id, ggamma);
                  tp.add_grad(beta.id, gbeta);
                });
}

// Eval-mode batch norm: a fixed per-channel affine map of the input.
template <typename T>
Var<T> batch_norm_eval(Var<T> x, Var<T> gamma, Var<T> beta, const Tensor<T>& running_mean,
                       const Tensor<T>& running_var, T eps) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = bn_eval(x.value(), gamma.value(), beta.value(), running_mean, running_var, eps);
  bool req = t.requires_grad(x.id) || t.requires_grad(gamma.id) || t.requires_grad(beta.id);
  Tensor<T> rm = running_mean, rv = running_var;
  return t.make(std::move(out), req, [x, gamma, beta, rm, rv, eps](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    const Tensor<T>& xv = tp.value(x.id);
    const Tensor<T>& gm = tp.value(gamma.id);
    int c = g.extent(0);
    long hw = static_cast<long>(g.extent(1)) * g.extent(2);
    Tensor<T> ggamma({c}), gbeta({c}), gx(g.shape());
    for (int ci = 0; ci < c; ++ci) {
      T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[ci]) + eps));
      double sg = 0, sgx = 0;
      for (long p = 0; p < hw; ++p) {
        double gv = g[ci * hw + p];
        sg += gv;
        sgx += gv * (xv[ci * hw + p] - rm[ci]) * inv;
        gx[ci * hw + p] = static_cast<T>(gv * gm[ci] * inv);
      }
      ggamma[ci] = static_cast<T>(sgx);
      gbeta[ci] = static_cast<T>(sg);
    }
    if (tp.requires_grad(x.id)) tp.add_grad(x.id, gx);
    tp.add_grad(gamma.id, ggamma);
    tp.add_grad(beta.id, gbeta);
  });
}

template <typename T>
Var<T> softmax(Var<T> x, int axis) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = softmax(x.value(), axis);
  return t.make(std::move(out), t.requires_grad(x.id), [x, axis](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    const Tensor<T>& y = tp.value(self);
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= y.extent(i);
    for (int i = axis + 1; i < y.rank(); ++i) inner *= y.extent(i);
    long n = y.extent(axis);
    Tensor<T> gx(y.shape());
    for (long o = 0; o < outer; ++o)
      for (long i = 0; i < inner; ++i) {
        auto idx = [&](long k) { return (o * n + k) * inner + i; };
        double s = 0;
        for (long k = 0; k < n; ++k) s += static_cast<double>(g[idx(k)]) * y[idx(k)];
        for (long k = 0; k < n; ++k)
          gx[idx(k)] = static_cast<T>(y[idx(k)] * (static_cast<double>(g[idx(k)]) - s));
      }
    tp.add_grad(x.id, gx);
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(sum(x.value())));
  return t.make(std::move(out), t.requires_grad(x.id), [x](Tape<T>& tp, int self) {
    T g = tp.grad(Var<T>{&tp, self})[0];
    tp.add_grad(x.id, Tensor<T>::full(tp.value(x.id).shape(), g));
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(mean(x.value())));
  return t.make(std::move(out), t.requires_grad(x.id), [x](Tape<T>& tp, int self) {
    T g = tp.grad(Var<T>{&tp, self})[0];
    long n = tp.value(x.id).numel();
    tp.add_grad(x.id, Tensor<T>::full(tp.value(x.id).shape(), g / static_cast<T>(n)));
  });
}

template <typename T>
Var<T> l1_norm(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(l1_norm(x.value())));
  return t.make(std::move(out), t.requires_grad(x.id), [x](Tape<T>& tp, int self) {
    T g = tp.grad(Var<T>{&tp, self})[0];
    const Tensor<T>& xv = tp.value(x.id);
    Tensor<T> gx(xv.shape());
    for (long i = 0; i < xv.numel(); ++i)
      gx[i] = xv[i] > T(0) ? g : (xv[i] < T(0) ? -g : T(0));
    tp.add_grad(x.id, gx);
  });
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b, "mse");
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(mse(a.value(), b.value())));
  bool req = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.make(std::move(out), req, [a, b](Tape<T>& tp, int self) {
    T g = tp.grad(Var<T>{&tp, self})[0];
    const Tensor<T>& av = tp.value(a.id);
    const Tensor<T>& bv = tp.value(b.id);
    T k = T(2) * g / static_cast<T>(av.numel());
    Tensor<T> d = sub(av, bv);
    if (tp.requires_grad(a.id)) tp.add_grad(a.id, scale(d, k));
    if (tp.requires_grad(b.id)) tp.add_grad(b.id, scale(d, -k));
  });
}

// mean |a - b|; the L1 training loss.
template <typename T>
Var<T> l1_loss(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b, "l1_loss");
  Tensor<T> d = sub(a.value(), b.value());
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(l1_norm(d) / static_cast<double>(d.numel())));
  bool req = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.make(std::move(out), req, [a, b](Tape<T>& tp, int self) {
    T g = tp.grad(Var<T>{&tp, self})[0];
    const Tensor<T>& av = tp.value(a.id);
    const Tensor<T>& bv = tp.value(b.id);
    T k = g / static_cast<T>(av.numel());
    Tensor<T> gx(av.shape());
    for (long i = 0; i < av.numel(); ++i) {
      T d2 = av[i] - bv[i];
      gx[i] = d2 > T(0) ? k : (d2 < T(0) ? -k : T(0));
    }
    if (tp.requires_grad(a.id)) tp.add_grad(a.id, gx);
    if (tp.requires_grad(b.id)) tp.add_grad(b.id, scale(gx, T(-1)));
  });
}

// log(1 + e^x), the smooth positive map for learned scalars.
template <typename T>
Var<T> softplus(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (long i = 0; i < xv.numel(); ++i) {
    double v = static_cast<double>(xv[i]);
    out[i] = static_cast<T>(v > 30 ? v : std::log1p(std::exp(v)));
  }
  return t.make(std::move(out), t.requires_grad(x.id), [x](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    const Tensor<T>& xv2 = tp.value(x.id);
    Tensor<T> gx(xv2.shape());
    for (long i = 0; i < xv2.numel(); ++i) {
      double s = 1.0 / (1.0 + std::exp(-static_cast<double>(xv2[i])));
      gx[i] = static_cast<T>(g[i] * s);
    }
    tp.add_grad(x.id, gx);
  });
}

// Componentwise projection onto [-radius, radius]; radius is a positive
// scalar Var so the ball size stays learnable.
template <typename T>
Var<T> clip_linf(Var<T> x, Var<T> radius) {
  Tape<T>& t = detail::same_tape(x, radius, "clip_linf");
  if (radius.value().numel() != 1)
    throw ContractViolation("clip_linf: radius must be a scalar");
  T r = radius.value()[0];
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (long i = 0; i < xv.numel(); ++i) out[i] = std::min(std::max(xv[i], -r), r);
  bool req = t.requires_grad(x.id) || t.requires_grad(radius.id);
  return t.make(std::move(out), req, [x, radius, r](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    const Tensor<T>& xv2 = tp.value(x.id);
    if (tp.requires_grad(x.id)) {
      Tensor<T> gx(xv2.shape());
      for (long i = 0; i < xv2.numel(); ++i)
        gx[i] = (xv2[i] > -r && xv2[i] < r) ? g[i] : T(0);
      tp.add_grad(x.id, gx);
    }
    if (tp.requires_grad(radius.id)) {
      double acc = 0;
      for (long i = 0; i < xv2.numel(); ++i) {
        if (xv2[i] >= r)
          acc += static_cast<double>(g[i]);
        else if (xv2[i] <= -r)
          acc -= static_cast<double>(g[i]);
      }
      tp.add_grad(radius.id, Tensor<T>::scalar(static_cast<T>(acc)));
    }
  });
}

template <typename T>
Var<T> decimate(Var<T> x, int q) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = decimate(x.value(), q);
  return t.make(std::move(out), t.requires_grad(x.id), [x, q](Tape<T>& tp, int self) {
    tp.add_grad(x.id, zero_insert(tp.grad(Var<T>{&tp, self}), q));
  });
}

template <typename T>
Var<T> zero_insert(Var<T> x, int q) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = zero_insert(x.value(), q);
  return t.make(std::move(out), t.requires_grad(x.id), [x, q](Tape<T>& tp, int self) {
    tp.add_grad(x.id, decimate(tp.grad(Var<T>{&tp, self}), q));
  });
}

}  // namespace pansharp
