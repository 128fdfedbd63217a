#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pansharp/autodiff.hpp"
#include "pansharp/rng.hpp"

namespace pansharp {

// Named non-trainable state (batch-norm running stats) that still belongs in
// checkpoints.
template <typename T>
using BufferList = std::vector<std::pair<std::string, Tensor<T>*>>;

// gain scales the He-style stddev; output convs of residual branches use a
// small gain so freshly built models start near the identity map.
template <typename T>
Tensor<T> fan_in_normal(Shape shape, long fan_in, CounterRng& rng, double gain = 1.0) {
  double stddev = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
  return Tensor<T>::random_normal(std::move(shape), rng, static_cast<T>(stddev));
}

// Convs feeding a batch norm run bias-free: the normalization cancels any
// per-channel constant, which would leave the bias without gradient.
template <typename T>
struct Conv2dLayer {
  Param<T> w, b;
  int stride = 1, pad = 1;
  bool has_bias = true;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int cout, int cin, int k, int pad_, CounterRng& rng,
              int stride_ = 1, bool bias = true, double gain = 1.0)
      : w(name + ".w",
          fan_in_normal<T>({cout, cin, k, k}, static_cast<long>(cin) * k * k, rng, gain)),
        stride(stride_),
        pad(pad_),
        has_bias(bias) {
    if (has_bias) b = Param<T>(name + ".b", Tensor<T>({cout}));
  }

  Var<T> forward(Tape<T>& t, Var<T> x) {
    return conv2d(x, t.leaf(w), has_bias ? t.leaf(b) : Var<T>{}, stride, pad);
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&w);
    if (has_bias) out.push_back(&b);
  }
};

template <typename T>
struct TConv2dLayer {
  Param<T> w, b;
  int stride = 1, pad = 1;
  bool has_bias = true;

  TConv2dLayer() = default;
  TConv2dLayer(const std::string& name, int cout, int cin, int k, int stride_, int pad_,
               CounterRng& rng, bool bias = true)
      : w(name + ".w", fan_in_normal<T>({cout, cin, k, k}, static_cast<long>(cin) * k * k, rng)),
        stride(stride_),
        pad(pad_),
        has_bias(bias) {
    if (has_bias) b = Param<T>(name + ".b", Tensor<T>({cout}));
  }

  Var<T> forward(Tape<T>& t, Var<T> x) {
    return conv2d_transposed(x, t.leaf(w), has_bias ? t.leaf(b) : Var<T>{}, stride, pad);
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&w);
    if (has_bias) out.push_back(&b);
  }
};

template <typename T>
struct BatchNormLayer {
  Param<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  std::string name;
  T momentum = static_cast<T>(0.1);
  T eps = static_cast<T>(1e-5);

  BatchNormLayer() = default;
  BatchNormLayer(const std::string& n, int c)
      : gamma(n + ".gamma", Tensor<T>::full({c}, T(1))),
        beta(n + ".beta", Tensor<T>({c})),
        running_mean({c}),
        running_var(Tensor<T>::full({c}, T(1))),
        name(n) {}

  Var<T> forward(Tape<T>& t, Var<T> x, bool train) {
    Var<T> g = t.leaf(gamma), bt = t.leaf(beta);
    if (train) return batch_norm_train(x, g, bt, running_mean, running_var, momentum, eps);
    return batch_norm_eval(x, g, bt, running_mean, running_var, eps);
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void collect_buffers(BufferList<T>& out) {
    out.emplace_back(name + ".running_mean", &running_mean);
    out.emplace_back(name + ".running_var", &running_var);
  }
};

// x + conv3x3(relu(conv3x3(x)))
template <typename T>
struct ResBlock {
  Conv2dLayer<T> c1, c2;

  ResBlock() = default;
  ResBlock(const std::string& name, int width, CounterRng& rng)
      : c1(name + ".c1", width, width, 3, 1, rng), c2(name + ".c2", width, width, 3, 1, rng) {}

  Var<T> forward(Tape<T>& t, Var<T> x) {
    return add(x, c2.forward(t, relu(c1.forward(t, x))));
  }

  void collect(std::vector<Param<T>*>& out) {
    c1.collect(out);
    c2.collect(out);
  }
};

}  // namespace pansharp
