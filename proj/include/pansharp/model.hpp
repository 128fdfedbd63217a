#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pansharp/imaging.hpp"
#include "pansharp/marnet.hpp"

namespace pansharp {

// ---------------------------------------------------------------------------
// Geometry injection: concat one PAN pyramid channel, then three
// conv3x3+batchnorm layers (ReLU between the first two pairs); channel count
// returns to C.
// ---------------------------------------------------------------------------

template <typename T>
struct GeometryInject {
  Conv2dLayer<T> c1, c2, c3;
  BatchNormLayer<T> b1, b2, b3;

  GeometryInject() = default;
  GeometryInject(const std::string& name, int c, CounterRng& rng)
      : c1(name + ".c1", c, c + 1, 3, 1, rng, 1, /*bias=*/false),
        c2(name + ".c2", c, c, 3, 1, rng, 1, /*bias=*/false),
        c3(name + ".c3", c, c, 3, 1, rng, 1, /*bias=*/false),
        b1(name + ".b1", c),
        b2(name + ".b2", c),
        b3(name + ".b3", c) {
    // a small final gamma keeps the injection from rescaling weak dual
    // signals to unit variance before training has shaped it
    b3.gamma.value.array() = T(0.1);
  }

  Var<T> forward(Tape<T>& t, Var<T> x, const Tensor<T>& pan_level, bool train) {
    if (pan_level.extent(1) != x.value().extent(1) ||
        pan_level.extent(2) != x.value().extent(2))
      throw ContractViolation("geometry_injection: features " + shape_str(x.value().shape()) +
                              " vs PAN level " + shape_str(pan_level.shape()));
    Var<T> h = concat_channels<T>({x, t.constant(pan_level)});
    h = relu(b1.forward(t, c1.forward(t, h), train));
    h = relu(b2.forward(t, c2.forward(t, h), train));
    return b3.forward(t, c3.forward(t, h), train);
  }

  void collect(std::vector<Param<T>*>& out) {
    c1.collect(out);
    c2.collect(out);
    c3.collect(out);
    b1.collect(out);
    b2.collect(out);
    b3.collect(out);
  }
  void collect_buffers(BufferList<T>& out) {
    b1.collect_buffers(out);
    b2.collect_buffers(out);
    b3.collect_buffers(out);
  }
};

// ---------------------------------------------------------------------------
// Learned Down: one conv3x3 + decimation per prime, primes consumed in
// descending order. s = 1 degenerates to a single conv.
// ---------------------------------------------------------------------------

template <typename T>
struct DownNet {
  std::vector<int> primes_desc;
  std::vector<Conv2dLayer<T>> convs;

  DownNet() = default;
  DownNet(const std::string& name, int c, const std::vector<int>& primes_asc, CounterRng& rng) {
    primes_desc.assign(primes_asc.rbegin(), primes_asc.rend());
    std::size_t steps = std::max<std::size_t>(primes_desc.size(), 1);
    for (std::size_t i = 0; i < steps; ++i)
      convs.emplace_back(name + ".step" + std::to_string(i) + ".conv", c, c, 3, 1, rng);
  }

  Var<T> forward(Tape<T>& t, Var<T> x) {
    if (primes_desc.empty()) return convs[0].forward(t, x);
    for (std::size_t i = 0; i < primes_desc.size(); ++i)
      x = decimate(convs[i].forward(t, x), primes_desc[i]);
    return x;
  }

  void collect(std::vector<Param<T>*>& out) {
    for (auto& c : convs) c.collect(out);
  }
};

// ---------------------------------------------------------------------------
// Learned Up: per prime (ascending) a transposed conv (k = q+2, stride q,
// pad 1, exact x q upsizing) followed by geometry injection with the matching
// pyramid level, then a final conv3x3.
// ---------------------------------------------------------------------------

template <typename T>
struct UpNet {
  std::vector<int> primes_asc;
  std::vector<TConv2dLayer<T>> tconvs;
  std::vector<GeometryInject<T>> inject;
  Conv2dLayer<T> final_conv;

  UpNet() = default;
  UpNet(const std::string& name, int c, const std::vector<int>& primes, CounterRng& rng)
      : primes_asc(primes) {
    for (std::size_t i = 0; i < primes_asc.size(); ++i) {
      int q = primes_asc[i];
      tconvs.emplace_back(name + ".step" + std::to_string(i) + ".tconv", c, c, q + 2, q, 1,
                          rng, /*bias=*/false);
      inject.emplace_back(name + ".step" + std::to_string(i) + ".inject", c, rng);
    }
    final_conv = Conv2dLayer<T>(name + ".final", c, c, 3, 1, rng, 1, true, 0.1);
  }

  Var<T> forward(Tape<T>& t, Var<T> x, const PanPyramid<T>& pyr, bool train) {
    int m = static_cast<int>(primes_asc.size());
    for (int i = 0; i < m; ++i) {
      x = tconvs[static_cast<std::size_t>(i)].forward(t, x);
      const Tensor<T>& lvl = pyr.level(m - 1 - i);
      if (lvl.extent(1) != x.value().extent(1) || lvl.extent(2) != x.value().extent(2)) {
        std::string want;
        for (int j = 0; j < pyr.depth(); ++j)
          want += (j ? ", " : "") + shape_str(pyr.level(j).shape());
        throw ContractViolation("up_forward: features " + shape_str(x.value().shape()) +
                                " do not match pyramid level " + std::to_string(m - 1 - i) +
                                "; expected level sizes [" + want + "]");
      }
      x = inject[static_cast<std::size_t>(i)].forward(t, x, lvl, train);
    }
    return final_conv.forward(t, x);
  }

  void collect(std::vector<Param<T>*>& out) {
    for (auto& c : tconvs) c.collect(out);
    for (auto& g : inject) g.collect(out);
    final_conv.collect(out);
  }
  void collect_buffers(BufferList<T>& out) {
    for (auto& g : inject) g.collect_buffers(out);
  }
};

// ---------------------------------------------------------------------------
// One primal-dual stage. The operator slots make the update skeleton
// reusable: the model binds the learned nets, oracle tests bind the analytic
// counterparts.
// ---------------------------------------------------------------------------

template <typename T>
struct PdVars {
  Var<T> u, ubar, t, v;
};

template <typename T>
struct StageOperators {
  std::function<Var<T>(Tape<T>&, Var<T>)> down;
  std::function<Var<T>(Tape<T>&, Var<T>)> up;
  std::function<Var<T>(Tape<T>&, Var<T>)> prox;
};

template <typename T>
struct StageData {
  Var<T> y;     // (C,h,w) observed low-res
  Var<T> pan;   // (1,H,W), broadcast against C-channel tensors
  Var<T> phat;  // (C,H,W) low-pass PAN
  Var<T> hhat;  // (C,H,W) upsampled low-res
};

template <typename T>
void require_finite_update(const Var<T>& v, const char* which) {
  if (!v.value().all_finite())
    throw NumericalError(std::string("stage_forward: non-finite values after the ") + which +
                         " update");
}

template <typename T>
PdVars<T> stage_update(Tape<T>& tp, const PdVars<T>& st, const StageOperators<T>& ops,
                       Var<T> lambda, Var<T> beta, Var<T> tau_p, Var<T> tau_d,
                       const StageData<T>& data) {
  PdVars<T> out;
  // t^{n+1} = (t^n + tau_d (Down(ubar) - Y)) / (1 + tau_d/lambda)
  Var<T> targ = add(st.t, mul(sub(ops.down(tp, st.ubar), data.y), tau_d));
  out.t = div(targ, add_scalar(div(tau_d, lambda), T(1)));
  require_finite_update(out.t, "t");
  // v^{n+1} = proj_{|.|inf <= beta}(v^n + tau_d (Phat.ubar - P.Hhat))
  Var<T> varg = add(st.v, mul(sub(mul(data.phat, st.ubar), mul(data.pan, data.hhat)), tau_d));
  out.v = clip_linf(varg, beta);
  require_finite_update(out.v, "v");
  // u^{n+1} = prox(u^n - tau_p Up(t^{n+1}) - tau_p Phat.v^{n+1})
  Var<T> uarg = sub(st.u, mul(add(ops.up(tp, out.t), mul(data.phat, out.v)), tau_p));
  out.u = ops.prox(tp, uarg);
  require_finite_update(out.u, "u");
  // over-relaxation
  out.ubar = sub(scale(out.u, T(2)), st.u);
  return out;
}

// ---------------------------------------------------------------------------
// Full unfolded model
// ---------------------------------------------------------------------------

struct ModelConfig {
  int channels = 4;
  int s = 4;
  int stages = 4;  // N
  int variant = 6;
  AttentionConfig attention;
  double lambda0 = 1.0;
  double beta0 = 0.1;
  double tau0 = 0.5;

  void validate() const {
    if (channels < 1 || s < 1 || stages < 1)
      throw ConfigError("model config: channels, s and stages must be positive");
    if (variant < 1 || variant > 6) throw ConfigError("model config: variant must be in 1..6");
    attention.validate();
    if (lambda0 <= 0 || beta0 <= 0 || tau0 <= 0)
      throw ConfigError("model config: scalar inits must be positive");
  }
};

inline double softplus_inv(double y) { return std::log(std::expm1(y)); }

template <typename T>
struct StageNets {
  DownNet<T> down;
  UpNet<T> up;
  Marnet<T> prox;
};

template <typename T>
struct StageTrace {
  std::vector<Var<T>> stage_u;  // U^1..U^N
  Var<T> u_out;
};

template <typename T>
class UnfoldedModel {
 public:
  ModelConfig cfg;
  std::vector<int> primes;  // ascending

  UnfoldedModel(const ModelConfig& c, std::uint64_t seed) : cfg(c) {
    cfg.validate();
    primes = prime_decomposition(cfg.s);
    CounterRng rng(seed);
    int ch = cfg.channels;
    down0_.emplace("init.down", ch, primes, rng);
    up0_.emplace("init.up", ch, primes, rng);
    for (int n = 1; n <= cfg.stages; ++n) {
      std::string p = "stage" + std::to_string(n);
      stages_.push_back(StageNets<T>{DownNet<T>(p + ".down", ch, primes, rng),
                                     UpNet<T>(p + ".up", ch, primes, rng),
                                     Marnet<T>(p + ".marnet", ch, cfg.attention, cfg.variant, rng)});
    }
    post_.emplace("post.marnet", ch, cfg.attention, cfg.variant, rng);
    lambda_raw_ = Param<T>("scalars.lambda_raw",
                           Tensor<T>::scalar(static_cast<T>(softplus_inv(cfg.lambda0))));
    beta_raw_ = Param<T>("scalars.beta_raw",
                         Tensor<T>::scalar(static_cast<T>(softplus_inv(cfg.beta0))));
    taup_raw_ = Param<T>("scalars.taup_raw",
                         Tensor<T>::scalar(static_cast<T>(softplus_inv(cfg.tau0))));
    taud_raw_ = Param<T>("scalars.taud_raw",
                         Tensor<T>::scalar(static_cast<T>(softplus_inv(cfg.tau0))));
  }

  struct Scalars {
    Var<T> lambda, beta, tau_p, tau_d;
  };

  Scalars scalars(Tape<T>& t) {
    return {softplus(t.leaf(lambda_raw_)), softplus(t.leaf(beta_raw_)),
            softplus(t.leaf(taup_raw_)), softplus(t.leaf(taud_raw_))};
  }

  // Softplus-mapped scalar values, for logging and checkpoints.
  std::array<double, 4> scalar_values() const {
    auto sp = [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); };
    return {sp(lambda_raw_.value[0]), sp(beta_raw_.value[0]), sp(taup_raw_.value[0]),
            sp(taud_raw_.value[0])};
  }

  struct InitResult {
    StageData<T> data;
    PdVars<T> state;
    PanPyramid<T> pyramid;
  };

  // Section init: Phat = Up0(Down0(P)), Hhat = Up0(Y), u0 = ubar0 =
  // Bicubic(Y), t0 = Down0(u0), v0 = u0 . Phat.
  InitResult initialize(Tape<T>& tp, Var<T> yv, const Tensor<T>& pan, bool train) {
    const Tensor<T>& y = yv.value();
    require_rank(y, 3, "initialize");
    require_rank(pan, 3, "initialize");
    if (y.extent(0) != cfg.channels)
      throw ContractViolation("initialize: expected " + std::to_string(cfg.channels) +
                              " bands, got " + shape_str(y.shape()));
    if (pan.extent(0) != 1)
      throw ContractViolation("initialize: PAN must be single-channel, got " +
                              shape_str(pan.shape()));
    if (pan.extent(1) != cfg.s * y.extent(1) || pan.extent(2) != cfg.s * y.extent(2))
      throw ContractViolation("initialize: PAN " + shape_str(pan.shape()) + " is not " +
                              std::to_string(cfg.s) + "x the low-res extents " +
                              shape_str(y.shape()));
    InitResult r;
    r.pyramid = build_pan_pyramid(pan, primes);
    Var<T> pan_rep = tp.constant(replicate_channels(pan, cfg.channels));
    r.data.y = yv;
    r.data.pan = tp.constant(pan);
    r.data.phat = up0_->forward(tp, down0_->forward(tp, pan_rep), r.pyramid, train);
    r.data.hhat = up0_->forward(tp, r.data.y, r.pyramid, train);
    Var<T> u0 = bicubic_up(yv, cfg.s);
    r.state.u = u0;
    r.state.ubar = u0;
    r.state.t = down0_->forward(tp, u0);
    r.state.v = mul(u0, r.data.phat);
    return r;
  }

  InitResult initialize(Tape<T>& tp, const Tensor<T>& y, const Tensor<T>& pan, bool train) {
    return initialize(tp, tp.constant(y), pan, train);
  }

  StageTrace<T> forward(Tape<T>& tp, Var<T> yv, const Tensor<T>& pan, bool train) {
    Scalars sc = scalars(tp);
    InitResult init = initialize(tp, yv, pan, train);
    PdVars<T> st = init.state;
    StageTrace<T> trace;
    for (auto& nets : stages_) {
      StageOperators<T> ops;
      ops.down = [&nets](Tape<T>& t, Var<T> x) { return nets.down.forward(t, x); };
      ops.up = [&nets, &init, train](Tape<T>& t, Var<T> x) {
        return nets.up.forward(t, x, init.pyramid, train);
      };
      ops.prox = [&nets, &pan](Tape<T>& t, Var<T> x) { return nets.prox.forward(t, x, pan); };
      st = stage_update(tp, st, ops, sc.lambda, sc.beta, sc.tau_p, sc.tau_d, init.data);
      trace.stage_u.push_back(st.u);
    }
    trace.u_out = post_->forward(tp, st.u, pan);
    return trace;
  }

  StageTrace<T> forward(Tape<T>& tp, const Tensor<T>& y, const Tensor<T>& pan, bool train) {
    return forward(tp, tp.constant(y), pan, train);
  }

  // Inference helper: fused image only, batch-norm in eval mode.
  Tensor<T> fuse(const Tensor<T>& y, const Tensor<T>& pan) {
    Tape<T> tp(/*recording=*/false);
    StageTrace<T> tr = forward(tp, y, pan, /*train=*/false);
    return tr.u_out.value();
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    down0_->collect(out);
    up0_->collect(out);
    for (auto& s : stages_) {
      s.down.collect(out);
      s.up.collect(out);
      s.prox.collect(out);
    }
    post_->collect(out);
    out.push_back(&lambda_raw_);
    out.push_back(&beta_raw_);
    out.push_back(&taup_raw_);
    out.push_back(&taud_raw_);
    return out;
  }

  std::vector<Param<T>*> post_params() {
    std::vector<Param<T>*> out;
    post_->collect(out);
    return out;
  }

  BufferList<T> buffers() {
    BufferList<T> out;
    up0_->collect_buffers(out);
    for (auto& s : stages_) s.up.collect_buffers(out);
    return out;
  }

  // Freeze everything except the post-processing MARNet.
  void freeze_all_but_post() {
    for (Param<T>* p : params()) p->trainable = false;
    for (Param<T>* p : post_params()) p->trainable = true;
  }
  void unfreeze_all() {
    for (Param<T>* p : params()) p->trainable = true;
  }

  Marnet<T>& post() { return *post_; }
  StageNets<T>& stage(int n) { return stages_[static_cast<std::size_t>(n)]; }
  DownNet<T>& down0() { return *down0_; }
  UpNet<T>& up0() { return *up0_; }

 private:
  std::optional<DownNet<T>> down0_;
  std::optional<UpNet<T>> up0_;
  std::vector<StageNets<T>> stages_;
  std::optional<Marnet<T>> post_;
  Param<T> lambda_raw_, beta_raw_, taup_raw_, taud_raw_;
};

// Loss of the unfolded network: L1 on the final output plus stage-averaged
// MSE, weighted by alpha.
template <typename T>
Var<T> loss_unfolded(Tape<T>& tp, const StageTrace<T>& trace, const Tensor<T>& gt, T alpha) {
  require_same_shape(trace.u_out.value(), gt, "loss_unfolded");
  Var<T> gtv = tp.constant(gt);
  Var<T> loss = l1_loss(trace.u_out, gtv);
  if (alpha > T(0) && !trace.stage_u.empty()) {
    Var<T> acc = mse(trace.stage_u[0], gtv);
    for (std::size_t i = 1; i < trace.stage_u.size(); ++i)
      acc = add(acc, mse(trace.stage_u[i], gtv));
    loss = add(loss, scale(acc, alpha / static_cast<T>(trace.stage_u.size())));
  }
  return loss;
}

}  // namespace pansharp
