#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pansharp/baselines.hpp"
#include "pansharp/datasynth.hpp"

using namespace pansharp;

namespace {

struct Fixture {
  Tensor<double> gt, pan, y;
  int s = 2;
};

Fixture make_fixture(std::uint64_t seed) {
  Fixture f;
  f.gt = synth_scene<double>(seed, 3, 16, 16);
  f.pan = pan_from_spectral(f.gt, default_spectral_response(3));
  f.y = wald_degrade(f.gt, f.s, 0.0, 0);
  return f;
}

}  // namespace

TEST_CASE("bicubic baseline is plain upsampling") {
  Fixture f = make_fixture(1);
  Tensor<double> fused = fuse_baseline(BaselineKind::Bicubic, f.y, f.pan, f.s);
  Tensor<double> want = bicubic_up(f.y, f.s);
  CHECK(std::equal(fused.data(), fused.data() + fused.numel(), want.data()));

  Tensor<double> cy = Tensor<double>::full({3, 8, 8}, 0.6);
  Tensor<double> cf = fuse_baseline(BaselineKind::Bicubic, cy, Tensor<double>::full({1, 16, 16}, 0.6), 2);
  for (long i = 0; i < cf.numel(); ++i) CHECK(cf[i] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("ihs returns up(Y) when the PAN carries no extra detail") {
  Fixture f = make_fixture(2);
  Tensor<double> up = bicubic_up(f.y, f.s);
  Tensor<double> intensity = band_mean(up);
  Tensor<double> fused = fuse_baseline(BaselineKind::Ihs, f.y, intensity, f.s);
  for (long i = 0; i < up.numel(); ++i) CHECK(fused[i] == doctest::Approx(up[i]).epsilon(1e-12));
}

TEST_CASE("ihs detail injection is identical across bands") {
  Fixture f = make_fixture(3);
  Tensor<double> fused = fuse_baseline(BaselineKind::Ihs, f.y, f.pan, f.s);
  Tensor<double> up = bicubic_up(f.y, f.s);
  long hw = 16 * 16;
  for (long p = 0; p < hw; ++p) {
    double d0 = fused[p] - up[p];
    for (int c = 1; c < 3; ++c)
      CHECK(fused[c * hw + p] - up[c * hw + p] == doctest::Approx(d0).epsilon(1e-12));
  }
}

TEST_CASE("brovey preserves band ratios") {
  Fixture f = make_fixture(4);
  Tensor<double> fused = fuse_baseline(BaselineKind::Brovey, f.y, f.pan, f.s);
  Tensor<double> up = bicubic_up(f.y, f.s);
  long hw = 16 * 16;
  for (long p = 0; p < hw; p += 7) {
    if (std::abs(up[hw + p]) < 1e-6 || std::abs(fused[hw + p]) < 1e-9) continue;
    CHECK(fused[p] / fused[hw + p] == doctest::Approx(up[p] / up[hw + p]).epsilon(1e-9));
  }
}

TEST_CASE("brovey is scale equivariant") {
  Fixture f = make_fixture(5);
  double c = 2.75;
  Tensor<double> a = fuse_baseline(BaselineKind::Brovey, scale(f.y, c), scale(f.pan, c), f.s);
  Tensor<double> b = scale(fuse_baseline(BaselineKind::Brovey, f.y, f.pan, f.s), c);
  for (long i = 0; i < a.numel(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
}

TEST_CASE("degenerate intensity raises an error") {
  Tensor<double> y({2, 4, 4});  // all zero
  Tensor<double> pan = Tensor<double>::full({1, 8, 8}, 0.5);
  CHECK_THROWS_AS((void)fuse_baseline(BaselineKind::Brovey, y, pan, 2), DegenerateInput);
}

TEST_CASE("baseline names round trip") {
  CHECK(baseline_from_name("brovey") == BaselineKind::Brovey);
  CHECK(baseline_name(BaselineKind::Ihs) == std::string("ihs"));
  CHECK_THROWS_AS(baseline_from_name("pca"), ConfigError);
  CHECK_THROWS_AS((void)fuse_baseline(BaselineKind::Ihs, Tensor<double>({2, 4, 4}),
                                      Tensor<double>({1, 9, 8}), 2),
                  ContractViolation);
}
