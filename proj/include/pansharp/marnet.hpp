#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pansharp/layers.hpp"

namespace pansharp {

// ---------------------------------------------------------------------------
// Windowed nonlocal attention. Weights over the (2r+1)^2 offsets around each
// pixel: w_k(i) = exp(<q(i), k(i+d_k)> - m_i) / Gamma_i, with m_i the max
// over the offsets that fall inside the image and Gamma_i normalizing over
// those same offsets. Entries outside the image are exactly zero; windows
// are cropped at edges, never padded.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> attention_weights_fwd(const Tensor<T>& qe, const Tensor<T>& ke, int r) {
  require_rank(qe, 3, "attention_weights");
  require_same_shape(qe, ke, "attention_weights");
  if (r < 0) throw ContractViolation("attention_weights: radius must be >= 0");
  int d = qe.extent(0), h = qe.extent(1), w = qe.extent(2);
  int win = 2 * r + 1, k = win * win;
  long hw = static_cast<long>(h) * w;
  Tensor<T> out({k, h, w});
  std::vector<double> score(static_cast<std::size_t>(k));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = -1e300;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          int yy = y + dy, xx = x + dx;
          int kk = (dy + r) * win + (dx + r);
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) {
            score[static_cast<std::size_t>(kk)] = -1e300;
            continue;
          }
          double s = 0;
          const T* qp = qe.data() + static_cast<long>(y) * w + x;
          const T* kp = ke.data() + static_cast<long>(yy) * w + xx;
          for (int c = 0; c < d; ++c) s += static_cast<double>(qp[c * hw]) * kp[c * hw];
          score[static_cast<std::size_t>(kk)] = s;
          m = std::max(m, s);
        }
      double z = 0;
      for (int kk = 0; kk < k; ++kk)
        if (score[static_cast<std::size_t>(kk)] > -1e299)
          z += std::exp(score[static_cast<std::size_t>(kk)] - m);
      for (int kk = 0; kk < k; ++kk) {
        double s = score[static_cast<std::size_t>(kk)];
        out[static_cast<long>(kk) * hw + y * w + x] =
            s > -1e299 ? static_cast<T>(std::exp(s - m) / z) : T(0);
      }
    }
  return out;
}

// Gradients through the normalized weights; gq/gk must be zero-initialized
// with the embedding shape.
template <typename T>
void attention_weights_bwd(const Tensor<T>& g, const Tensor<T>& w_saved, const Tensor<T>& qe,
                           const Tensor<T>& ke, int r, Tensor<T>& gq, Tensor<T>& gk) {
  int d = qe.extent(0), h = qe.extent(1), wd = qe.extent(2);
  int win = 2 * r + 1, k = win * win;
  long hw = static_cast<long>(h) * wd;
  std::vector<double> ds(static_cast<std::size_t>(k));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wd; ++x) {
      // softmax backward per pixel over the valid window
      double dotgw = 0;
      for (int kk = 0; kk < k; ++kk) {
        double wv = w_saved[static_cast<long>(kk) * hw + y * wd + x];
        dotgw += static_cast<double>(g[static_cast<long>(kk) * hw + y * wd + x]) * wv;
      }
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          int kk = (dy + r) * win + (dx + r);
          int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= wd) {
            ds[static_cast<std::size_t>(kk)] = 0;
            continue;
          }
          double wv = w_saved[static_cast<long>(kk) * hw + y * wd + x];
          ds[static_cast<std::size_t>(kk)] =
              wv * (static_cast<double>(g[static_cast<long>(kk) * hw + y * wd + x]) - dotgw);
        }
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          int kk = (dy + r) * win + (dx + r);
          double dsk = ds[static_cast<std::size_t>(kk)];
          if (dsk == 0) continue;
          int yy = y + dy, xx = x + dx;
          T* gqp = gq.data() + static_cast<long>(y) * wd + x;
          T* gkp = gk.data() + static_cast<long>(yy) * wd + xx;
          const T* qp = qe.data() + static_cast<long>(y) * wd + x;
          const T* kp = ke.data() + static_cast<long>(yy) * wd + xx;
          for (int c = 0; c < d; ++c) {
            gqp[c * hw] += static_cast<T>(dsk * kp[c * hw]);
            gkp[c * hw] += static_cast<T>(dsk * qp[c * hw]);
          }
        }
    }
}

// out(i) = sum_k w_k(i) * v(i + d_k); the nonlocal means filter.
template <typename T>
Tensor<T> window_apply_fwd(const Tensor<T>& w, const Tensor<T>& v, int r) {
  require_rank(w, 3, "head_attention");
  require_rank(v, 3, "head_attention");
  int win = 2 * r + 1, k = win * win;
  if (w.extent(0) != k)
    throw ContractViolation("head_attention: weight maps have " + std::to_string(w.extent(0)) +
                            " offsets, expected " + std::to_string(k));
  int h = v.extent(1), wd = v.extent(2);
  if (w.extent(1) != h || w.extent(2) != wd)
    throw ContractViolation("head_attention: spatial mismatch " + shape_str(w.shape()) + " vs " +
                            shape_str(v.shape()));
  int c = v.extent(0);
  long hw = static_cast<long>(h) * wd;
  Tensor<T> out(v.shape());
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      int kk = (dy + r) * win + (dx + r);
      const T* wp = w.data() + static_cast<long>(kk) * hw;
      for (int ci = 0; ci < c; ++ci)
        for (int y = std::max(0, -dy); y < h - std::max(0, dy); ++y) {
          int x0 = std::max(0, -dx), x1 = wd - std::max(0, dx);
          const T* vrow = v.data() + (static_cast<long>(ci) * h + y + dy) * wd;
          const T* wrow = wp + static_cast<long>(y) * wd;
          T* orow = &out.at(ci, y, 0);
          for (int x = x0; x < x1; ++x) orow[x] += wrow[x] * vrow[x + dx];
        }
    }
  return out;
}

template <typename T>
void window_apply_bwd(const Tensor<T>& g, const Tensor<T>& w, const Tensor<T>& v, int r,
                      Tensor<T>& gw, Tensor<T>& gv) {
  int win = 2 * r + 1;
  int c = v.extent(0), h = v.extent(1), wd = v.extent(2);
  long hw = static_cast<long>(h) * wd;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      int kk = (dy + r) * win + (dx + r);
      const T* wp = w.data() + static_cast<long>(kk) * hw;
      T* gwp = gw.data() + static_cast<long>(kk) * hw;
      for (int ci = 0; ci < c; ++ci)
        for (int y = std::max(0, -dy); y < h - std::max(0, dy); ++y) {
          int x0 = std::max(0, -dx), x1 = wd - std::max(0, dx);
          const T* vrow = v.data() + (static_cast<long>(ci) * h + y + dy) * wd;
          T* gvrow = gv.data() + (static_cast<long>(ci) * h + y + dy) * wd;
          const T* grow = &g.at(ci, y, 0);
          const T* wrow = wp + static_cast<long>(y) * wd;
          T* gwrow = gwp + static_cast<long>(y) * wd;
          for (int x = x0; x < x1; ++x) {
            gwrow[x] += grow[x] * vrow[x + dx];
            gvrow[x + dx] += wrow[x] * grow[x];
          }
        }
    }
}

template <typename T>
Var<T> attention_weights(Var<T> qe, Var<T> ke, int r) {
  Tape<T>& t = detail::same_tape(qe, ke, "attention_weights");
  Tensor<T> out = attention_weights_fwd(qe.value(), ke.value(), r);
  bool req = t.requires_grad(qe.id) || t.requires_grad(ke.id);
  Tensor<T> saved = out;
  return t.make(std::move(out), req, [qe, ke, r, saved](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    Tensor<T> gq(tp.value(qe.id).shape()), gk(tp.value(ke.id).shape());
    attention_weights_bwd(g, saved, tp.value(qe.id), tp.value(ke.id), r, gq, gk);
    tp.add_grad(qe.id, gq);
    tp.add_grad(ke.id, gk);
  });
}

template <typename T>
Var<T> window_apply(Var<T> w, Var<T> v, int r) {
  Tape<T>& t = detail::same_tape(w, v, "head_attention");
  Tensor<T> out = window_apply_fwd(w.value(), v.value(), r);
  bool req = t.requires_grad(w.id) || t.requires_grad(v.id);
  return t.make(std::move(out), req, [w, v, r](Tape<T>& tp, int self) {
    const Tensor<T>& g = tp.grad(Var<T>{&tp, self});
    Tensor<T> gw(tp.value(w.id).shape()), gv(tp.value(v.id).shape());
    window_apply_bwd(g, tp.value(w.id), tp.value(v.id), r, gw, gv);
    tp.add_grad(w.id, gw);
    tp.add_grad(v.id, gv);
  });
}

// ---------------------------------------------------------------------------
// MARNet: multi-head windowed attention + residual blocks, a residual map
// around the input. Variants 1-6 select which sources get feature extraction
// (input / PAN / both) and whether the ResBlocks see the attention-input
// concatenation (4-6).
// ---------------------------------------------------------------------------

struct AttentionConfig {
  int radius = 5;        // window radius r
  int embed = 16;        // theta/phi embedding dim d
  int patch_kernel = 3;  // theta/phi conv kernel k_p, odd
  int feat = 32;         // feature width F

  void validate() const {
    if (radius < 0 || embed < 1 || feat < 1 || patch_kernel < 1 || patch_kernel % 2 == 0)
      throw ConfigError("attention config: need r >= 0, d/F >= 1, odd k_p");
  }
};

inline bool variant_feats_input(int v) { return v == 1 || v == 3 || v == 4 || v == 6; }
inline bool variant_feats_pan(int v) { return v == 2 || v == 3 || v == 5 || v == 6; }
inline bool variant_concat_skip(int v) { return v >= 4; }

template <typename T>
struct AttentionHead {
  Conv2dLayer<T> theta, phi;
  int radius = 0;

  AttentionHead() = default;
  AttentionHead(const std::string& name, int cin, const AttentionConfig& cfg, CounterRng& rng)
      : theta(name + ".theta", cfg.embed, cin, cfg.patch_kernel, cfg.patch_kernel / 2, rng),
        phi(name + ".phi", cfg.embed, cin, cfg.patch_kernel, cfg.patch_kernel / 2, rng),
        radius(cfg.radius) {}

  Var<T> weights(Tape<T>& t, Var<T> aux) {
    return attention_weights(theta.forward(t, aux), phi.forward(t, aux), radius);
  }

  void collect(std::vector<Param<T>*>& out) {
    theta.collect(out);
    phi.collect(out);
  }
};

template <typename T>
struct Marnet {
  int variant = 6;
  int channels = 0;
  AttentionConfig cfg;
  std::optional<Conv2dLayer<T>> feat_x, feat_p;
  AttentionHead<T> head_x, head_p, head_xp;
  Conv2dLayer<T> mlp1, mlp2;
  std::vector<ResBlock<T>> blocks;
  Conv2dLayer<T> out1, out2;

  Marnet() = default;
  Marnet(const std::string& name, int c, const AttentionConfig& acfg, int variant_,
         CounterRng& rng)
      : variant(variant_), channels(c), cfg(acfg) {
    cfg.validate();
    if (variant < 1 || variant > 6)
      throw ConfigError("marnet: variant must be in 1..6, got " + std::to_string(variant));
    int f = cfg.feat;
    int cx = c, cp = 1;
    if (variant_feats_input(variant)) {
      feat_x.emplace(name + ".feat_x", f, c, 3, 1, rng);
      cx = f;
    }
    if (variant_feats_pan(variant)) {
      feat_p.emplace(name + ".feat_p", f, 1, 3, 1, rng);
      cp = f;
    }
    head_x = AttentionHead<T>(name + ".head_x", cx, cfg, rng);
    head_p = AttentionHead<T>(name + ".head_p", cp, cfg, rng);
    head_xp = AttentionHead<T>(name + ".head_xp", cx + cp, cfg, rng);
    mlp1 = Conv2dLayer<T>(name + ".mlp1", f, 3 * cx, 1, 0, rng);
    mlp2 = Conv2dLayer<T>(name + ".mlp2", f, f, 1, 0, rng);
    int wres = variant_concat_skip(variant) ? f + cx : f;
    for (int i = 0; i < 3; ++i)
      blocks.emplace_back(name + ".res" + std::to_string(i), wres, rng);
    out1 = Conv2dLayer<T>(name + ".out1", f, f + wres, 3, 1, rng);
    // small-gain residual output: a fresh net starts close to the identity
    out2 = Conv2dLayer<T>(name + ".out2", c, f, 3, 1, rng, 1, true, 0.02);
  }

  // x: (C,H,W) current estimate, pan: (1,H,W) geometry source.
  Var<T> forward(Tape<T>& t, Var<T> x, const Tensor<T>& pan) {
    if (x.value().extent(0) != channels)
      throw ContractViolation("marnet: input has " + std::to_string(x.value().extent(0)) +
                              " channels, built for " + std::to_string(channels));
    if (pan.extent(1) != x.value().extent(1) || pan.extent(2) != x.value().extent(2))
      throw ContractViolation("marnet: PAN shape " + shape_str(pan.shape()) +
                              " does not match input " + shape_str(x.value().shape()));
    Var<T> pv = t.constant(pan);
    Var<T> fx = feat_x ? relu(feat_x->forward(t, x)) : x;
    Var<T> fp = feat_p ? relu(feat_p->forward(t, pv)) : pv;
    Var<T> fcat = concat_channels<T>({fx, fp});

    Var<T> h1 = window_apply(head_x.weights(t, fx), fx, cfg.radius);
    Var<T> h2 = window_apply(head_p.weights(t, fp), fx, cfg.radius);
    Var<T> h3 = window_apply(head_xp.weights(t, fcat), fx, cfg.radius);
    Var<T> mha = mlp2.forward(t, relu(mlp1.forward(t, concat_channels<T>({h1, h2, h3}))));

    Var<T> rb = variant_concat_skip(variant) ? concat_channels<T>({mha, fx}) : mha;
    for (auto& blk : blocks) rb = blk.forward(t, rb);

    Var<T> o = relu(out1.forward(t, concat_channels<T>({mha, rb})));
    o = out2.forward(t, o);
    return add(x, o);
  }

  void collect(std::vector<Param<T>*>& out) {
    if (feat_x) feat_x->collect(out);
    if (feat_p) feat_p->collect(out);
    head_x.collect(out);
    head_p.collect(out);
    head_xp.collect(out);
    mlp1.collect(out);
    mlp2.collect(out);
    for (auto& b : blocks) b.collect(out);
    out1.collect(out);
    out2.collect(out);
  }
};

// Attention-free baseline used by the MARNet ablation: feature conv, three
// ResBlocks, two output convs, residual around the input.
template <typename T>
struct PlainResNet {
  int channels = 0;
  Conv2dLayer<T> feat;
  std::vector<ResBlock<T>> blocks;
  Conv2dLayer<T> out1, out2;

  PlainResNet() = default;
  PlainResNet(const std::string& name, int c, int f, CounterRng& rng)
      : channels(c), feat(name + ".feat", f, c, 3, 1, rng) {
    for (int i = 0; i < 3; ++i)
      blocks.emplace_back(name + ".res" + std::to_string(i), f, rng);
    out1 = Conv2dLayer<T>(name + ".out1", f, f, 3, 1, rng);
    out2 = Conv2dLayer<T>(name + ".out2", c, f, 3, 1, rng, 1, true, 0.02);
  }

  Var<T> forward(Tape<T>& t, Var<T> x, const Tensor<T>& /*pan*/) {
    Var<T> h = relu(feat.forward(t, x));
    for (auto& blk : blocks) h = blk.forward(t, h);
    h = relu(out1.forward(t, h));
    return add(x, out2.forward(t, h));
  }

  void collect(std::vector<Param<T>*>& out) {
    feat.collect(out);
    for (auto& b : blocks) b.collect(out);
    out1.collect(out);
    out2.collect(out);
  }
};

}  // namespace pansharp
