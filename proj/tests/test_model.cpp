#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "pansharp/checkpoint.hpp"
#include "pansharp/model.hpp"
#include "pansharp/solver.hpp"
#include "param_check.hpp"

using namespace pansharp;

namespace {

Tensor<double> rnd(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  CounterRng rng(seed);
  return Tensor<double>::random_uniform(std::move(s), rng, lo, hi);
}

ModelConfig tiny_config(int c = 2, int s = 2, int stages = 2) {
  ModelConfig cfg;
  cfg.channels = c;
  cfg.s = s;
  cfg.stages = stages;
  cfg.variant = 6;
  cfg.attention.feat = 6;
  cfg.attention.radius = 1;
  cfg.attention.embed = 4;
  return cfg;
}

}  // namespace

TEST_CASE("param init is deterministic in the seed and positive after mapping") {
  ModelConfig cfg = tiny_config();
  UnfoldedModel<float> a(cfg, 42), b(cfg, 42), c(cfg, 43);
  auto pa = a.params(), pb = b.params(), pc = c.params();
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true, any_differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_equal = all_equal && std::equal(pa[i]->value.data(),
                                        pa[i]->value.data() + pa[i]->value.numel(),
                                        pb[i]->value.data());
    any_differs = any_differs ||
                  !std::equal(pa[i]->value.data(), pa[i]->value.data() + pa[i]->value.numel(),
                              pc[i]->value.data());
  }
  CHECK(all_equal);
  CHECK(any_differs);

  auto sv = a.scalar_values();
  CHECK(sv[0] == doctest::Approx(1.0).epsilon(1e-5));   // lambda
  CHECK(sv[1] == doctest::Approx(0.1).epsilon(1e-5));   // beta
  CHECK(sv[2] == doctest::Approx(0.5).epsilon(1e-5));   // tau_p
  CHECK(sv[3] == doctest::Approx(0.5).epsilon(1e-5));   // tau_d
  for (double v : sv) CHECK(v > 0);
}

TEST_CASE("initialize computes the five init formulas") {
  ModelConfig cfg = tiny_config(2, 2, 1);
  UnfoldedModel<double> model(cfg, 7);
  Tensor<double> y = rnd({2, 4, 4}, 1, 0, 1);
  Tensor<double> pan = rnd({1, 8, 8}, 2, 0, 1);
  Tape<double> tp;
  auto init = model.initialize(tp, y, pan, false);

  CHECK(init.state.t.value().shape() == Shape{2, 4, 4});
  CHECK(init.state.v.value().shape() == Shape{2, 8, 8});
  CHECK(init.data.phat.value().shape() == Shape{2, 8, 8});
  CHECK(init.data.hhat.value().shape() == Shape{2, 8, 8});

  // u0 = bicubic(Y); constant Y gives a constant u0 regardless of the nets
  Tensor<double> u0 = init.state.u.value();
  Tensor<double> want = bicubic_up(y, 2);
  for (long i = 0; i < u0.numel(); ++i) CHECK(u0[i] == doctest::Approx(want[i]));

  Tape<double> tpc;
  auto initc = model.initialize(tpc, Tensor<double>::full({2, 4, 4}, 0.25), pan, false);
  Tensor<double> uc = initc.state.u.value();
  for (long i = 0; i < uc.numel(); ++i) CHECK(uc[i] == doctest::Approx(0.25).epsilon(1e-12));

  // v0 = u0 . Phat, elementwise
  Tensor<double> v0 = init.state.v.value();
  Tensor<double> phat = init.data.phat.value();
  for (long i = 0; i < v0.numel(); ++i)
    CHECK(v0[i] == doctest::Approx(u0[i] * phat[i]).epsilon(1e-12));

  // shape contracts
  CHECK_THROWS_AS(model.initialize(tp, y, rnd({1, 7, 8}, 3), false), ContractViolation);
  CHECK_THROWS_AS(model.initialize(tp, rnd({3, 4, 4}, 4), pan, false), ContractViolation);
}

TEST_CASE("pinned analytic operators reproduce the classical iterate") {
  EnergyParams p;
  p.lambda = 1.2;
  p.beta = 0.07;
  p.mu = 0.15;
  p.s = 2;
  p.sigma_b = 1.0;
  double tau_p = 0.21, tau_d = 0.17;

  Tensor<double> y = rnd({2, 4, 4}, 10, 0, 1);
  Tensor<double> pan1 = rnd({1, 8, 8}, 11, 0.2, 1.0);
  Tensor<double> pan_c = replicate_channels(pan1, 2);
  Tensor<double> phat = rnd({2, 8, 8}, 12, 0.2, 1.0);
  Tensor<double> hhat = rnd({2, 8, 8}, 13, 0.2, 1.0);

  PdStateT<double> st;
  st.u = rnd({2, 8, 8}, 14, 0, 1);
  st.ubar = rnd({2, 8, 8}, 15, 0, 1);
  st.t = rnd({2, 4, 4}, 16);
  st.v = rnd({2, 8, 8}, 17, -0.05, 0.05);
  PdStateT<double> classical = pd_iterate(st, y, pan_c, phat, hhat, p, tau_p, tau_d);

  Tape<double> tp;
  StageOperators<double> ops;
  ops.down = [&](Tape<double>& t, Var<double> x) { return t.constant(apply_DB(x.value(), p)); };
  ops.up = [&](Tape<double>& t, Var<double> x) { return t.constant(apply_BtDt(x.value(), p)); };
  ops.prox = [&](Tape<double>& t, Var<double> x) {
    return t.constant(prox_quadratic_prior(x.value(), tau_p, p.mu));
  };
  StageData<double> data;
  data.y = tp.constant(y);
  data.pan = tp.constant(pan1);
  data.phat = tp.constant(phat);
  data.hhat = tp.constant(hhat);
  PdVars<double> sv{tp.constant(st.u), tp.constant(st.ubar), tp.constant(st.t),
                    tp.constant(st.v)};
  PdVars<double> out = stage_update(tp, sv, ops, tp.constant(Tensor<double>::scalar(p.lambda)),
                                    tp.constant(Tensor<double>::scalar(p.beta)),
                                    tp.constant(Tensor<double>::scalar(tau_p)),
                                    tp.constant(Tensor<double>::scalar(tau_d)), data);

  CHECK(norm2(sub(out.t.value(), classical.t)) / norm2(classical.t) < 1e-6);
  CHECK(norm2(sub(out.v.value(), classical.v)) < 1e-6 * (1 + norm2(classical.v)));
  CHECK(norm2(sub(out.u.value(), classical.u)) / norm2(classical.u) < 1e-6);
  CHECK(norm2(sub(out.ubar.value(), classical.ubar)) / norm2(classical.ubar) < 1e-6);
}

TEST_CASE("stage update trivial cases") {
  // zero data and state through linear zero-preserving operators stays zero
  Tape<double> tp;
  StageOperators<double> ops;
  ops.down = [](Tape<double>& t, Var<double> x) { return decimate(x, 2); };
  ops.up = [](Tape<double>& t, Var<double> x) { return zero_insert(x, 2); };
  ops.prox = [](Tape<double>&, Var<double> x) { return x; };
  StageData<double> data;
  data.y = tp.constant(Tensor<double>({1, 4, 4}));
  data.pan = tp.constant(Tensor<double>({1, 8, 8}));
  data.phat = tp.constant(Tensor<double>({1, 8, 8}));
  data.hhat = tp.constant(Tensor<double>({1, 8, 8}));
  PdVars<double> sv{tp.constant(Tensor<double>({1, 8, 8})), tp.constant(Tensor<double>({1, 8, 8})),
                    tp.constant(Tensor<double>({1, 4, 4})),
                    tp.constant(Tensor<double>({1, 8, 8}))};
  auto c = [&](double v) { return tp.constant(Tensor<double>::scalar(v)); };
  PdVars<double> out = stage_update(tp, sv, ops, c(1.0), c(0.1), c(0.5), c(0.5), data);
  CHECK(norm2(out.u.value()) == 0.0);
  CHECK(norm2(out.ubar.value()) == 0.0);
  CHECK(norm2(out.t.value()) == 0.0);
  CHECK(norm2(out.v.value()) == 0.0);

  // over-relaxation fixed point: u' == u gives ubar == u
  Tensor<double> u = rnd({1, 8, 8}, 20);
  Tape<double> tp2;
  Var<double> uv = tp2.constant(u);
  Var<double> ubar = sub(scale(uv, 2.0), uv);
  for (long i = 0; i < u.numel(); ++i)
    CHECK(ubar.value()[i] == doctest::Approx(u[i]).epsilon(1e-12));
}

TEST_CASE("model forward: shapes, defaults, post residual identity") {
  ModelConfig cfg;  // stages default 4
  CHECK(cfg.stages == 4);

  ModelConfig small = tiny_config(2, 2, 2);
  UnfoldedModel<double> model(small, 5);
  Tensor<double> y = rnd({2, 4, 4}, 21, 0, 1);
  Tensor<double> pan = rnd({1, 8, 8}, 22, 0, 1);
  Tape<double> tp;
  StageTrace<double> tr = model.forward(tp, y, pan, false);
  REQUIRE(static_cast<int>(tr.stage_u.size()) == small.stages);
  CHECK(tr.u_out.value().shape() == Shape{2, 8, 8});
  CHECK(tr.u_out.value().all_finite());

  // zeroing the post-processing final conv makes U_out == U^N
  model.post().out2.w.value.array().setZero();
  model.post().out2.b.value.array().setZero();
  Tape<double> tp2;
  StageTrace<double> tr2 = model.forward(tp2, y, pan, false);
  const Tensor<double>& un = tr2.stage_u.back().value();
  const Tensor<double>& uout = tr2.u_out.value();
  for (long i = 0; i < un.numel(); ++i) CHECK(uout[i] == doctest::Approx(un[i]).epsilon(1e-12));
}

TEST_CASE("stage weights are independent across stages") {
  ModelConfig cfg = tiny_config(2, 2, 2);
  UnfoldedModel<double> model(cfg, 6);
  Tensor<double> y = rnd({2, 4, 4}, 23, 0, 1);
  Tensor<double> pan = rnd({1, 8, 8}, 24, 0, 1);

  Tape<double> tp;
  Tensor<double> u1_before = model.forward(tp, y, pan, false).stage_u[0].value();
  // perturb stage-2 MARNet weights
  model.stage(1).prox.out2.w.value.array() += 0.37;
  Tape<double> tp2;
  Tensor<double> u1_after = model.forward(tp2, y, pan, false).stage_u[0].value();
  CHECK(std::equal(u1_before.data(), u1_before.data() + u1_before.numel(), u1_after.data()));
}

TEST_CASE("scalars are shared: exactly one parameter per scalar") {
  ModelConfig cfg = tiny_config(2, 2, 3);
  UnfoldedModel<double> model(cfg, 8);
  int scalar_params = 0;
  for (Param<double>* p : model.params())
    if (p->name.rfind("scalars.", 0) == 0) ++scalar_params;
  CHECK(scalar_params == 4);

  // the same softplus node feeds every stage: perturbing lambda_raw changes
  // the effective lambda everywhere at once
  auto before = model.scalar_values();
  for (Param<double>* p : model.params())
    if (p->name == "scalars.lambda_raw") p->value[0] += 1.0;
  auto after = model.scalar_values();
  CHECK(after[0] > before[0]);
  CHECK(after[1] == doctest::Approx(before[1]));
}

TEST_CASE("model forward is deterministic and differentiable") {
  ModelConfig cfg = tiny_config(2, 2, 2);
  UnfoldedModel<double> model(cfg, 9);
  Tensor<double> y = rnd({2, 4, 4}, 25, 0, 1);
  Tensor<double> pan = rnd({1, 8, 8}, 26, 0, 1);
  Tensor<double> gt = rnd({2, 8, 8}, 27, 0, 1);

  Tensor<double> a = model.fuse(y, pan);
  Tensor<double> b = model.fuse(y, pan);
  CHECK(std::equal(a.data(), a.data() + a.numel(), b.data()));

  auto params = model.params();
  auto fwd = [&](Tape<double>& t) {
    StageTrace<double> tr = model.forward(t, y, pan, false);
    return loss_unfolded(t, tr, gt, 0.1);
  };
  // representative parameters along the whole chain
  Param<double>* lambda_raw = nullptr;
  for (Param<double>* p : params)
    if (p->name == "scalars.lambda_raw") lambda_raw = p;
  REQUIRE(lambda_raw);
  CHECK(testutil::param_grad_check(*lambda_raw, params, fwd) < 1e-4);
  CHECK(testutil::param_grad_check(model.stage(0).down.convs[0].w, params, fwd, 1e-5, 5) < 1e-4);
  CHECK(testutil::param_grad_check(model.stage(1).prox.out2.w, params, fwd, 1e-5, 7) < 1e-4);
  CHECK(testutil::param_grad_check(model.post().mlp2.w, params, fwd, 1e-5, 5) < 1e-4);
}

TEST_CASE("loss_unfolded matches its formula and trivial cases") {
  ModelConfig cfg = tiny_config(2, 2, 2);
  Tensor<double> gt = rnd({2, 4, 4}, 30, 0, 1);
  Tape<double> tp;
  StageTrace<double> tr;
  tr.stage_u = {tp.constant(rnd({2, 4, 4}, 31)), tp.constant(rnd({2, 4, 4}, 32))};
  tr.u_out = tp.constant(rnd({2, 4, 4}, 33));
  double alpha = 0.1;
  Var<double> loss = loss_unfolded(tp, tr, gt, alpha);

  double l1 = 0;
  for (long i = 0; i < gt.numel(); ++i) l1 += std::abs(tr.u_out.value()[i] - gt[i]);
  l1 /= static_cast<double>(gt.numel());
  double msum = 0;
  for (const auto& u : tr.stage_u) {
    double m = 0;
    for (long i = 0; i < gt.numel(); ++i) {
      double d = u.value()[i] - gt[i];
      m += d * d;
    }
    msum += m / static_cast<double>(gt.numel());
  }
  CHECK(loss.value()[0] == doctest::Approx(l1 + alpha / 2.0 * msum).epsilon(1e-9));

  // all-GT trace gives exactly zero
  Tape<double> tp2;
  StageTrace<double> perfect;
  perfect.stage_u = {tp2.constant(gt), tp2.constant(gt)};
  perfect.u_out = tp2.constant(gt);
  CHECK(loss_unfolded(tp2, perfect, gt, alpha).value()[0] == 0.0);

  // alpha = 0 leaves the pure L1 term
  Tape<double> tp3;
  StageTrace<double> tr3;
  tr3.stage_u = {tp3.constant(rnd({2, 4, 4}, 34))};
  tr3.u_out = tp3.constant(tr.u_out.value());
  CHECK(loss_unfolded(tp3, tr3, gt, 0.0).value()[0] == doctest::Approx(l1).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip is bit exact and hash guarded") {
  auto dir = std::filesystem::temp_directory_path() / "pansharp_ckpt_test";
  std::filesystem::remove_all(dir);
  ModelConfig cfg = tiny_config(2, 2, 2);
  UnfoldedModel<float> a(cfg, 77);
  save_checkpoint(a, dir, CheckpointInfo{3, 31.25});

  UnfoldedModel<float> b(cfg, 78);  // different init
  CheckpointInfo info = load_checkpoint(b, dir);
  CHECK(info.epoch == 3);
  CHECK(info.best_val_psnr == doctest::Approx(31.25));
  auto pa = a.params(), pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(std::equal(pa[i]->value.data(), pa[i]->value.data() + pa[i]->value.numel(),
                     pb[i]->value.data()));

  ModelConfig other = cfg;
  other.attention.feat = 12;
  UnfoldedModel<float> c(other, 79);
  CHECK_THROWS_AS(load_checkpoint(c, dir), VersionError);
  CHECK(model_config_hash(cfg) != model_config_hash(other));
  CHECK(model_config_hash(cfg) == model_config_hash(tiny_config(2, 2, 2)));
}
