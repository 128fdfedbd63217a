#pragma once

#include <vector>

#include "pansharp/adam.hpp"
#include "pansharp/baselines.hpp"
#include "pansharp/datasynth.hpp"
#include "pansharp/marnet.hpp"
#include "pansharp/metrics.hpp"

namespace pansharp {

// Denoising harness for the MARNet architecture comparison: each candidate
// replaces the proximity operator of a denoising problem, so it trains with
// MSE against the clean image. The attention heads that want a PAN image get
// the band mean of the noisy input.
struct DenoiseHarnessConfig {
  int variant = 6;  // 1..6 select MARNet variants, 0 the plain ResNet
  int channels = 3;
  int size = 24;
  int n_train = 10, n_val = 4;
  double sigma = 25.0;  // noise std on the 0-255 scale
  int epochs = 60;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  AttentionConfig attention;
};

template <typename T>
struct DenoisePair {
  Tensor<T> noisy, clean, pan;
};

template <typename T>
std::vector<DenoisePair<T>> make_denoise_set(const DenoiseHarnessConfig& cfg, int count,
                                             std::uint64_t stream) {
  CounterRng base(cfg.seed);
  std::vector<DenoisePair<T>> out;
  for (int i = 0; i < count; ++i) {
    CounterRng sr = base.fork(stream * 1000 + static_cast<std::uint64_t>(i));
    DenoisePair<T> p;
    p.clean = synth_scene<T>(sr.next_u64(), cfg.channels, cfg.size, cfg.size);
    p.noisy = p.clean;
    double std01 = cfg.sigma / 255.0;
    for (long k = 0; k < p.noisy.numel(); ++k)
      p.noisy[k] += static_cast<T>(std01 * sr.normal());
    p.pan = band_mean(p.noisy);
    out.push_back(std::move(p));
  }
  return out;
}

// Trains one candidate and returns its best validation PSNR.
template <typename T>
double denoise_harness_val_psnr(const DenoiseHarnessConfig& cfg) {
  auto train_set = make_denoise_set<T>(cfg, cfg.n_train, 1);
  auto val_set = make_denoise_set<T>(cfg, cfg.n_val, 2);

  CounterRng init_rng(cfg.seed ^ 0xab1a7e5ull);
  Marnet<T> marnet;
  PlainResNet<T> resnet;
  std::vector<Param<T>*> params;
  if (cfg.variant >= 1) {
    marnet = Marnet<T>("denoise.marnet", cfg.channels, cfg.attention, cfg.variant, init_rng);
    marnet.collect(params);
  } else {
    resnet = PlainResNet<T>("denoise.resnet", cfg.channels, cfg.attention.feat, init_rng);
    resnet.collect(params);
  }
  auto forward = [&](Tape<T>& tp, const DenoisePair<T>& p) {
    Var<T> x = tp.constant(p.noisy);
    return cfg.variant >= 1 ? marnet.forward(tp, x, p.pan) : resnet.forward(tp, x, p.pan);
  };

  AdamState<T> adam = AdamState<T>::init(params, static_cast<T>(cfg.lr));
  CounterRng rng(cfg.seed ^ 0xdeb015e5ull);
  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  double best = -1e300;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    for (int idx : order) {
      for (Param<T>* p : params) p->zero_grad();
      Tape<T> tp;
      Var<T> out = forward(tp, train_set[static_cast<std::size_t>(idx)]);
      Var<T> loss = mse(out, tp.constant(train_set[static_cast<std::size_t>(idx)].clean));
      tp.backward(loss);
      adam_step(params, adam);
    }
    double acc = 0;
    for (const auto& p : val_set) {
      Tape<T> tp(/*recording=*/false);
      acc += psnr(forward(tp, p).value(), p.clean);
    }
    best = std::max(best, acc / static_cast<double>(val_set.size()));
  }
  return best;
}

}  // namespace pansharp
