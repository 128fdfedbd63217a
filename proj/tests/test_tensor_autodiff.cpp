#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "pansharp/adam.hpp"
#include "pansharp/gradcheck.hpp"
#include "pansharp/tensor_io.hpp"

using namespace pansharp;

namespace {

Tensor<double> rnd(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  CounterRng rng(seed);
  return Tensor<double>::random_uniform(std::move(s), rng, lo, hi);
}

}  // namespace

TEST_CASE("tensor basics and contracts") {
  Tensor<double> a = Tensor<double>::of({2, 2}, {1, 2, 3, 4});
  CHECK(a.numel() == 4);
  CHECK(a.rank() == 2);
  CHECK_THROWS_AS(a.reshaped({3, 2}), ContractViolation);
  CHECK_THROWS_AS(Tensor<double>({0, 2}), ContractViolation);
  CHECK_THROWS_AS((void)add(a, Tensor<double>({3, 3})), ContractViolation);
}

TEST_CASE("ten file round trip is bit exact") {
  auto dir = std::filesystem::temp_directory_path() / "pansharp_ten_test";
  std::filesystem::create_directories(dir);
  CounterRng rng(11);
  Tensor<float> xf = Tensor<float>::random_normal({3, 5, 7}, rng);
  save_tensor(xf, dir / "x.ten");
  Tensor<float> xf2 = load_tensor<float>(dir / "x.ten");
  CHECK(std::equal(xf.data(), xf.data() + xf.numel(), xf2.data()));

  Tensor<double> xd = Tensor<double>::random_normal({4}, rng);
  save_tensor(xd, dir / "d.ten");
  Tensor<double> xd2 = load_tensor<double>(dir / "d.ten");
  CHECK(std::equal(xd.data(), xd.data() + xd.numel(), xd2.data()));
  // cross-dtype load converts
  Tensor<float> as_f = load_tensor<float>(dir / "d.ten");
  CHECK(as_f[0] == doctest::Approx(static_cast<float>(xd[0])));
  CHECK_THROWS_AS(load_tensor<float>(dir / "missing.ten"), IoError);
}

TEST_CASE("forward identities") {
  Tensor<double> a = rnd({2, 4, 4}, 1);
  // add with zero tensor
  Tensor<double> z({2, 4, 4});
  Tensor<double> sum = add(a, z);
  for (long i = 0; i < a.numel(); ++i) CHECK(sum[i] == a[i]);

  // identity conv kernel
  Tensor<double> w({2, 2, 3, 3});
  w.at4(0, 0, 1, 1) = 1;
  w.at4(1, 1, 1, 1) = 1;
  Tensor<double> c = conv2d(a, w, nullptr, 1, 1);
  for (long i = 0; i < a.numel(); ++i) CHECK(c[i] == doctest::Approx(a[i]).epsilon(1e-12));

  // softmax over a row of equal values
  Tensor<double> row = Tensor<double>::full({5}, 3.25);
  Tensor<double> sm = softmax(row, 0);
  for (long i = 0; i < 5; ++i) CHECK(sm[i] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax rows are nonnegative and normalized") {
  Tensor<double> x = rnd({3, 6, 5}, 2, -4, 4);
  for (int axis = 0; axis < 3; ++axis) {
    Tensor<double> y = softmax(x, axis);
    for (long i = 0; i < y.numel(); ++i) CHECK(y[i] >= 0);
    // sum along the reduced axis
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.extent(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);
    long n = x.extent(axis);
    for (long o = 0; o < outer; ++o)
      for (long i = 0; i < inner; ++i) {
        double s = 0;
        for (long k = 0; k < n; ++k) s += y[(o * n + k) * inner + i];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
      }
  }
}

TEST_CASE("div guards small divisors") {
  Tensor<double> a = rnd({4}, 3);
  Tensor<double> b = Tensor<double>::of({4}, {1.0, 2.0, 1e-13, 1.0});
  CHECK_THROWS_AS((void)div(a, b), DegenerateInput);
}

TEST_CASE("backward closed forms") {
  Tensor<double> x = rnd({3, 4}, 5);
  Tensor<double> w0 = rnd({3, 4}, 6);
  // loss = sum(W . X) => dW = X
  {
    Tape<double> tp;
    Var<double> wv = tp.input(w0);
    Var<double> loss = sum(mul(wv, tp.constant(x)));
    tp.backward(loss);
    const Tensor<double>& g = tp.grad(wv);
    for (long i = 0; i < x.numel(); ++i) CHECK(g[i] == doctest::Approx(x[i]).epsilon(1e-12));
  }
  // loss = mse(X, X0) => dX = 2(X - X0)/n
  {
    Tape<double> tp;
    Var<double> xv = tp.input(w0);
    Var<double> loss = mse(xv, tp.constant(x));
    tp.backward(loss);
    const Tensor<double>& g = tp.grad(xv);
    for (long i = 0; i < x.numel(); ++i)
      CHECK(g[i] == doctest::Approx(2 * (w0[i] - x[i]) / x.numel()).epsilon(1e-10));
  }
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> tp;
  Var<double> x = tp.input(rnd({2, 2}, 7));
  Var<double> y = relu(x);
  CHECK_THROWS_AS(tp.backward(y), ContractViolation);
}

TEST_CASE("grad_check on the identity map is zero") {
  double err = grad_check([](Tape<double>&, Var<double> v) { return sum(v); }, rnd({3, 3}, 8));
  CHECK(err < 1e-10);
}

TEST_CASE("grad_check relu away from the kink") {
  CounterRng rng(9);
  Tensor<double> x({4, 4});
  for (long i = 0; i < x.numel(); ++i) {
    double v = rng.uniform(0.1, 1.0);
    x[i] = rng.uniform() < 0.5 ? -v : v;
  }
  double err = grad_check(
      [](Tape<double>& t, Var<double> v) {
        return sum(mul(relu(v), t.constant(rnd({4, 4}, 10))));
      },
      x);
  CHECK(err < 1e-6);
}

TEST_CASE("finite differences validate every primitive backward rule") {
  Tensor<double> probe = rnd({2, 6, 6}, 20, 0.2, 1.0);
  Tensor<double> other = rnd({2, 6, 6}, 21, 0.3, 1.1);
  Tensor<double> weight = rnd({2, 6, 6}, 22);

  auto weighted = [&](Var<double> v, Tape<double>& t) { return sum(mul(v, t.constant(weight))); };
  auto check = [&](const char* name, const GradFn& fn, const Tensor<double>& at, double tol = 1e-4) {
    double err = grad_check(fn, at);
    INFO(name << " grad error " << err);
    CHECK(err < tol);
  };

  check("add", [&](Tape<double>& t, Var<double> v) {
    return weighted(add(v, t.constant(other)), t);
  }, probe);
  check("sub", [&](Tape<double>& t, Var<double> v) {
    return weighted(sub(t.constant(other), v), t);
  }, probe);
  check("mul", [&](Tape<double>& t, Var<double> v) {
    return weighted(mul(v, t.constant(other)), t);
  }, probe);
  check("div_left", [&](Tape<double>& t, Var<double> v) {
    return weighted(div(v, t.constant(other)), t);
  }, probe);
  check("div_right", [&](Tape<double>& t, Var<double> v) {
    return weighted(div(t.constant(other), v), t);
  }, probe);
  check("max_scalar", [&](Tape<double>& t, Var<double> v) {
    return weighted(max_scalar(v, 0.55), t);
  }, probe);
  check("exp", [&](Tape<double>& t, Var<double> v) { return weighted(exp(v), t); }, probe);
  check("softplus", [&](Tape<double>& t, Var<double> v) { return weighted(softplus(v), t); },
        probe);
  check("pad", [&](Tape<double>& t, Var<double> v) {
    Var<double> p = pad_spatial(v, 1, 2, 0, 1);
    return sum(mul(p, t.constant(rnd(p.value().shape(), 23))));
  }, probe);
  check("concat", [&](Tape<double>& t, Var<double> v) {
    Var<double> c = concat_channels<double>({v, t.constant(other), v});
    return sum(mul(c, t.constant(rnd(c.value().shape(), 24))));
  }, probe);
  check("softmax", [&](Tape<double>& t, Var<double> v) {
    return weighted(softmax(v, 0), t);
  }, probe);
  check("mean", [&](Tape<double>&, Var<double> v) { return mean(v); }, probe);
  check("l1_norm", [&](Tape<double>&, Var<double> v) { return l1_norm(v); }, probe);
  check("mse", [&](Tape<double>& t, Var<double> v) { return mse(v, t.constant(other)); }, probe);
  check("l1_loss", [&](Tape<double>& t, Var<double> v) {
    return l1_loss(v, t.constant(other));
  }, probe);
  check("decimate", [&](Tape<double>& t, Var<double> v) {
    Var<double> d = decimate(v, 2);
    return sum(mul(d, t.constant(rnd(d.value().shape(), 25))));
  }, probe);
  check("zero_insert", [&](Tape<double>& t, Var<double> v) {
    Var<double> z = zero_insert(v, 2);
    return sum(mul(z, t.constant(rnd(z.value().shape(), 26))));
  }, probe);

  // broadcasting variants
  Tensor<double> chan = rnd({1, 6, 6}, 27, 0.3, 1.0);
  check("mul_channel_broadcast", [&](Tape<double>& t, Var<double> v) {
    return weighted(mul(v, t.constant(chan)), t);
  }, probe);
  check("mul_channel_broadcast_grad_to_pan", [&](Tape<double>& t, Var<double> v) {
    Var<double> big = mul(t.constant(probe), v);
    return sum(mul(big, t.constant(weight)));
  }, chan);
  Tensor<double> scalar = Tensor<double>::scalar(0.7);
  check("scalar_broadcast", [&](Tape<double>& t, Var<double> v) {
    Var<double> y = mul(t.constant(probe), v);
    return sum(mul(y, t.constant(weight)));
  }, scalar);
  check("clip_linf_x", [&](Tape<double>& t, Var<double> v) {
    return weighted(clip_linf(v, t.constant(Tensor<double>::scalar(0.6))), t);
  }, probe);
  check("clip_linf_radius", [&](Tape<double>& t, Var<double> v) {
    Var<double> y = clip_linf(t.constant(weight), v);
    return sum(mul(y, t.constant(other)));
  }, Tensor<double>::scalar(0.4));

  // matmul
  check("matmul", [&](Tape<double>& t, Var<double> v) {
    Var<double> m = matmul(v, t.constant(rnd({5, 3}, 28)));
    return sum(mul(m, t.constant(rnd({4, 3}, 29))));
  }, rnd({4, 5}, 30));
}

TEST_CASE("conv gradients match central finite differences") {
  Tensor<double> x = rnd({1, 8, 8}, 40);
  Tensor<double> w = rnd({2, 1, 3, 3}, 41);
  Tensor<double> b = rnd({2}, 42);
  Tensor<double> target = rnd({2, 8, 8}, 43);

  // kernel gradient on a 1x8x8 input
  double err_w = grad_check(
      [&](Tape<double>& t, Var<double> wv) {
        return mse(conv2d(t.constant(x), wv, t.constant(b), 1, 1), t.constant(target));
      },
      w);
  CHECK(err_w < 1e-4);

  double err_x = grad_check(
      [&](Tape<double>& t, Var<double> xv) {
        return mse(conv2d(xv, t.constant(w), t.constant(b), 1, 1), t.constant(target));
      },
      x);
  CHECK(err_x < 1e-4);

  // strided conv and bias
  double err_s = grad_check(
      [&](Tape<double>& t, Var<double> wv) {
        Var<double> y = conv2d(t.constant(x), wv, t.constant(b), 2, 1);
        return sum(mul(y, t.constant(rnd(y.value().shape(), 44))));
      },
      w);
  CHECK(err_s < 1e-4);

  // transposed conv, stride 2, kernel 4, pad 1: exact doubling
  Tensor<double> xt = rnd({2, 4, 4}, 45);
  Tensor<double> wt = rnd({2, 2, 4, 4}, 46);
  Tensor<double> outw = rnd({2, 8, 8}, 47);
  CHECK(conv2d_transposed(xt, wt, nullptr, 2, 1).shape() == Shape{2, 8, 8});
  double err_t = grad_check(
      [&](Tape<double>& t, Var<double> wv) {
        Var<double> y = conv2d_transposed(t.constant(xt), wv, Var<double>{}, 2, 1);
        return sum(mul(y, t.constant(outw)));
      },
      wt);
  CHECK(err_t < 1e-4);
  double err_tx = grad_check(
      [&](Tape<double>& t, Var<double> xv) {
        Var<double> y = conv2d_transposed(xv, t.constant(wt), Var<double>{}, 2, 1);
        return sum(mul(y, t.constant(outw)));
      },
      xt);
  CHECK(err_tx < 1e-4);
}

TEST_CASE("batch norm gradients and eval-mode affine contract") {
  Tensor<double> x = rnd({3, 5, 5}, 50);
  Tensor<double> gamma = rnd({3}, 51, 0.5, 1.5);
  Tensor<double> beta = rnd({3}, 52);
  Tensor<double> rm = rnd({3}, 53, -0.2, 0.2);
  Tensor<double> rv = rnd({3}, 54, 0.5, 1.5);
  Tensor<double> wgt = rnd({3, 5, 5}, 55);

  auto run_train = [&](Var<double> xv, Tape<double>& t) {
    Tensor<double> m = rm, v = rv;  // local copies; running stats mutate
    return batch_norm_train(xv, t.constant(gamma), t.constant(beta), m, v, 0.1, 1e-5);
  };
  double err = grad_check(
      [&](Tape<double>& t, Var<double> xv) { return sum(mul(run_train(xv, t), t.constant(wgt))); },
      x);
  CHECK(err < 1e-4);

  double err_gamma = grad_check(
      [&](Tape<double>& t, Var<double> gv) {
        Tensor<double> m = rm, v = rv;
        Var<double> y =
            batch_norm_train(t.constant(x), gv, t.constant(beta), m, v, 0.1, 1e-5);
        return sum(mul(y, t.constant(wgt)));
      },
      gamma);
  CHECK(err_gamma < 1e-4);

  // eval mode: out = a*x + b per channel with a, b from stored statistics
  Tensor<double> out = bn_eval(x, gamma, beta, rm, rv, 1e-5);
  for (int c = 0; c < 3; ++c) {
    double a = gamma[c] / std::sqrt(rv[c] + 1e-5);
    double b = beta[c] - a * rm[c];
    for (int p = 0; p < 25; ++p)
      CHECK(out[c * 25 + p] == doctest::Approx(a * x[c * 25 + p] + b).epsilon(1e-10));
  }
  double err_eval = grad_check(
      [&](Tape<double>& t, Var<double> xv) {
        Var<double> y = batch_norm_eval(xv, t.constant(gamma), t.constant(beta), rm, rv, 1e-5);
        return sum(mul(y, t.constant(wgt)));
      },
      x);
  CHECK(err_eval < 1e-4);
}

TEST_CASE("forward results are reproducible for a fixed seed") {
  auto run = [] {
    CounterRng rng(123);
    Tensor<float> x = Tensor<float>::random_normal({2, 6, 6}, rng);
    Tensor<float> w = Tensor<float>::random_normal({3, 2, 3, 3}, rng, 0.2f);
    return conv2d(relu(x), w, nullptr, 1, 1);
  };
  Tensor<float> a = run(), b = run();
  CHECK(std::equal(a.data(), a.data() + a.numel(), b.data()));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, moments decay") {
  Param<double> p("w", Tensor<double>::of({2}, {1.0, -2.0}));
  std::vector<Param<double>*> params{&p};
  AdamState<double> st = AdamState<double>::init(params, 0.1);
  p.zero_grad();
  adam_step(params, st);
  CHECK(p.value[0] == 1.0);  // fresh moments stay zero, so no movement
  CHECK(p.value[1] == -2.0);
  // preloaded moments decay under a zero gradient
  st.slots[0].m = Tensor<double>::of({2}, {0.5, 0.5});
  st.slots[0].v = Tensor<double>::of({2}, {0.25, 0.25});
  adam_step(params, st);
  CHECK(st.slots[0].m[0] == doctest::Approx(0.45));
  CHECK(st.slots[0].v[0] == doctest::Approx(0.25 * 0.999));

  // one step on f(w) = w^2 from w = 1 decreases w
  Param<double> q("q", Tensor<double>::scalar(1.0));
  std::vector<Param<double>*> qs{&q};
  AdamState<double> st2 = AdamState<double>::init(qs, 0.1);
  q.grad = Tensor<double>::scalar(2.0);  // d(w^2)/dw at 1
  adam_step(qs, st2);
  CHECK(q.value[0] < 1.0);

  // default learning rate
  AdamState<double> st3 = AdamState<double>::init(qs);
  CHECK(st3.lr == doctest::Approx(5e-4));

  // NaN gradient names the parameter
  q.grad = Tensor<double>::scalar(std::nan(""));
  CHECK_THROWS_WITH_AS(adam_step(qs, st2), doctest::Contains("'q'"), TrainingDivergence);
}

TEST_CASE("frozen parameters are skipped by adam") {
  Param<double> p("w", Tensor<double>::scalar(1.0));
  p.trainable = false;
  p.grad = Tensor<double>::scalar(5.0);
  std::vector<Param<double>*> params{&p};
  AdamState<double> st = AdamState<double>::init(params, 0.1);
  adam_step(params, st);
  CHECK(p.value[0] == 1.0);
}
