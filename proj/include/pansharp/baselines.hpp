#pragma once

#include <string>

#include "pansharp/imaging.hpp"

namespace pansharp {

enum class BaselineKind { Bicubic, Brovey, Ihs };

inline BaselineKind baseline_from_name(const std::string& name) {
  if (name == "bicubic") return BaselineKind::Bicubic;
  if (name == "brovey") return BaselineKind::Brovey;
  if (name == "ihs") return BaselineKind::Ihs;
  throw ConfigError("unknown baseline '" + name + "' (bicubic|brovey|ihs)");
}

inline const char* baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::Bicubic: return "bicubic";
    case BaselineKind::Brovey: return "brovey";
    case BaselineKind::Ihs: return "ihs";
  }
  return "?";
}

// Intensity component: unweighted band mean.
template <typename T>
Tensor<T> band_mean(const Tensor<T>& x) {
  require_rank(x, 3, "intensity");
  Tensor<T> out({1, x.extent(1), x.extent(2)});
  long hw = static_cast<long>(x.extent(1)) * x.extent(2);
  int c = x.extent(0);
  for (long p = 0; p < hw; ++p) {
    double acc = 0;
    for (int ci = 0; ci < c; ++ci) acc += x[ci * hw + p];
    out[p] = static_cast<T>(acc / c);
  }
  return out;
}

// Classical component-substitution baselines. Y is (C,h,w), pan (1,H,W).
//   bicubic: bicubic upsampling of Y
//   brovey:  up(Y) . P / intensity(up(Y)), the division eps-guarded
//   ihs:     up(Y) + (P - intensity(up(Y))) added to every band
template <typename T>
Tensor<T> fuse_baseline(BaselineKind kind, const Tensor<T>& y, const Tensor<T>& pan, int s) {
  require_rank(y, 3, "baseline");
  require_rank(pan, 3, "baseline");
  if (pan.extent(0) != 1) throw ContractViolation("baseline: PAN must be single-channel");
  if (pan.extent(1) != s * y.extent(1) || pan.extent(2) != s * y.extent(2))
    throw ContractViolation("baseline: PAN " + shape_str(pan.shape()) + " is not " +
                            std::to_string(s) + "x the MS extents " + shape_str(y.shape()));
  Tensor<T> up = bicubic_up(y, s);
  if (kind == BaselineKind::Bicubic) return up;

  Tensor<T> intensity = band_mean(up);
  constexpr double kEps = 1e-8;
  if (kind == BaselineKind::Brovey) {
    double imax = 0;
    for (long i = 0; i < intensity.numel(); ++i)
      imax = std::max(imax, std::abs(static_cast<double>(intensity[i])));
    if (imax < kEps)
      throw DegenerateInput("brovey: intensity is near zero everywhere");
    Tensor<T> ratio(intensity.shape());
    for (long i = 0; i < intensity.numel(); ++i) {
      double d = intensity[i];
      double guarded = std::abs(d) < kEps ? (d < 0 ? -kEps : kEps) : d;
      ratio[i] = static_cast<T>(pan[i] / guarded);
    }
    return mul(up, ratio);
  }
  // IHS: rank-one detail injection, identical across bands
  Tensor<T> detail = sub(pan, intensity);
  return add(up, detail);
}

}  // namespace pansharp
