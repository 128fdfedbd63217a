#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "pansharp/imaging.hpp"
#include "pansharp/ops.hpp"

namespace pansharp {

// All metrics accumulate in double regardless of the input scalar type.
// Q2^n is out of scope; mean per-band UIQI is reported in its place and
// labeled uiqi_q2n_substitute everywhere.

constexpr double kPsnrCap = 100.0;  // sentinel for (near-)identical inputs

template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& ref, double peak = 1.0) {
  require_same_shape(x, ref, "psnr");
  if (peak <= 0) throw ContractViolation("psnr: peak must be positive");
  double m = mse(x, ref);
  if (m <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

// Mean spectral angle in degrees; pixels where either vector is zero are
// skipped.
template <typename T>
double sam(const Tensor<T>& x, const Tensor<T>& ref) {
  require_same_shape(x, ref, "sam");
  require_rank(x, 3, "sam");
  int c = x.extent(0);
  if (c < 2) throw ContractViolation("sam: needs at least 2 bands");
  long hw = static_cast<long>(x.extent(1)) * x.extent(2);
  double acc = 0;
  long count = 0;
  for (long p = 0; p < hw; ++p) {
    double d = 0, nx = 0, nr = 0;
    for (int ci = 0; ci < c; ++ci) {
      double a = x[ci * hw + p], b = ref[ci * hw + p];
      d += a * b;
      nx += a * a;
      nr += b * b;
    }
    if (nx == 0 || nr == 0) continue;
    double cosv = std::clamp(d / std::sqrt(nx * nr), -1.0, 1.0);
    acc += std::acos(cosv);
    ++count;
  }
  if (count == 0) throw DegenerateInput("sam: every pixel has a zero spectral vector");
  return acc / static_cast<double>(count) * (180.0 / 3.14159265358979323846);
}

template <typename T>
double ergas(const Tensor<T>& x, const Tensor<T>& ref, int s) {
  require_same_shape(x, ref, "ergas");
  require_rank(x, 3, "ergas");
  if (s <= 0) throw ContractViolation("ergas: sampling factor must be positive");
  int c = x.extent(0);
  long hw = static_cast<long>(x.extent(1)) * x.extent(2);
  double acc = 0;
  for (int ci = 0; ci < c; ++ci) {
    double se = 0, mu = 0;
    for (long p = 0; p < hw; ++p) {
      double d = static_cast<double>(x[ci * hw + p]) - ref[ci * hw + p];
      se += d * d;
      mu += ref[ci * hw + p];
    }
    mu /= static_cast<double>(hw);
    if (std::abs(mu) < 1e-12)
      throw DegenerateInput("ergas: reference band " + std::to_string(ci) + " has zero mean");
    acc += (se / static_cast<double>(hw)) / (mu * mu);
  }
  return 100.0 / static_cast<double>(s) * std::sqrt(acc / static_cast<double>(c));
}

namespace detail {

// Gaussian-weighted local stats over fully interior 11x11 windows.
template <typename T>
double ssim_band(const T* x, const T* ref, int h, int w, double peak) {
  constexpr int kWin = 11, kRad = 5;
  std::vector<double> k1d(kWin);
  {
    double s2 = 2.0 * 1.5 * 1.5, tot = 0;
    for (int i = 0; i < kWin; ++i) {
      k1d[static_cast<std::size_t>(i)] = std::exp(-(i - kRad) * (i - kRad) / s2);
      tot += k1d[static_cast<std::size_t>(i)];
    }
    for (double& v : k1d) v /= tot;
  }
  double c1 = (0.01 * peak) * (0.01 * peak);
  double c2 = (0.03 * peak) * (0.03 * peak);
  double acc = 0;
  long count = 0;
  for (int cy = kRad; cy < h - kRad; ++cy)
    for (int cx = kRad; cx < w - kRad; ++cx) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = -kRad; dy <= kRad; ++dy)
        for (int dx = -kRad; dx <= kRad; ++dx) {
          double wgt = k1d[static_cast<std::size_t>(dy + kRad)] *
                       k1d[static_cast<std::size_t>(dx + kRad)];
          double a = x[(cy + dy) * w + cx + dx];
          double b = ref[(cy + dy) * w + cx + dx];
          mx += wgt * a;
          my += wgt * b;
          sxx += wgt * a * a;
          syy += wgt * b * b;
          sxy += wgt * a * b;
        }
      double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      double v = ((2 * mx * my + c1) * (2 * cxy + c2)) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
      acc += v;
      ++count;
    }
  return acc / static_cast<double>(count);
}

}  // namespace detail

// Standard per-band SSIM (11x11 Gaussian window sigma 1.5, k1 = 0.01,
// k2 = 0.03) averaged over bands; windows are fully interior.
template <typename T>
double ssim(const Tensor<T>& x, const Tensor<T>& ref, double peak = 1.0) {
  require_same_shape(x, ref, "ssim");
  require_rank(x, 3, "ssim");
  if (x.extent(1) < 11 || x.extent(2) < 11)
    throw ContractViolation("ssim: image smaller than the 11x11 window, shape " +
                            shape_str(x.shape()));
  int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  long hw = static_cast<long>(h) * w;
  double acc = 0;
  for (int ci = 0; ci < c; ++ci)
    acc += detail::ssim_band(x.data() + ci * hw, ref.data() + ci * hw, h, w, peak);
  return acc / static_cast<double>(c);
}

// Universal image quality index over sliding 8x8 windows (unbiased sample
// statistics), mean over windows and bands. Windows with zero denominator
// are excluded.
template <typename T>
double uiqi_mean(const Tensor<T>& x, const Tensor<T>& ref) {
  require_same_shape(x, ref, "uiqi");
  require_rank(x, 3, "uiqi");
  constexpr int kWin = 8;
  if (x.extent(1) < kWin || x.extent(2) < kWin)
    throw ContractViolation("uiqi: image smaller than the 8x8 window, shape " +
                            shape_str(x.shape()));
  int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  long hw = static_cast<long>(h) * w;
  constexpr double n = kWin * kWin;
  double acc = 0;
  long count = 0;
  for (int ci = 0; ci < c; ++ci) {
    const T* xp = x.data() + ci * hw;
    const T* rp = ref.data() + ci * hw;
    for (int y = 0; y + kWin <= h; ++y)
      for (int xx = 0; xx + kWin <= w; ++xx) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dy = 0; dy < kWin; ++dy)
          for (int dx = 0; dx < kWin; ++dx) {
            double a = xp[(y + dy) * w + xx + dx];
            double b = rp[(y + dy) * w + xx + dx];
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
          }
        double mx = sx / n, my = sy / n;
        double vx = (sxx - n * mx * mx) / (n - 1);
        double vy = (syy - n * my * my) / (n - 1);
        double cxy = (sxy - n * mx * my) / (n - 1);
        double denom = (vx + vy) * (mx * mx + my * my);
        if (denom == 0) continue;
        acc += 4.0 * cxy * mx * my / denom;
        ++count;
      }
  }
  if (count == 0) throw DegenerateInput("uiqi: no window with a nonzero denominator");
  return acc / static_cast<double>(count);
}

// Mean absolute band error per pixel, clipped at the 99th percentile
// (nearest rank) when positive, rescaled to [0,1].
template <typename T>
Tensor<T> error_map(const Tensor<T>& x, const Tensor<T>& ref) {
  require_same_shape(x, ref, "error_map");
  require_rank(x, 3, "error_map");
  int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  long hw = static_cast<long>(h) * w;
  Tensor<T> map({1, h, w});
  for (long p = 0; p < hw; ++p) {
    double acc = 0;
    for (int ci = 0; ci < c; ++ci)
      acc += std::abs(static_cast<double>(x[ci * hw + p]) - ref[ci * hw + p]);
    map[p] = static_cast<T>(acc / c);
  }
  std::vector<double> sorted(map.data(), map.data() + hw);
  std::sort(sorted.begin(), sorted.end());
  double clip = sorted[static_cast<std::size_t>(
      std::lround(0.99 * static_cast<double>(hw - 1)))];
  if (clip <= 0) clip = sorted.back();
  if (clip <= 0) return map;  // x == ref everywhere
  for (long p = 0; p < hw; ++p)
    map[p] = static_cast<T>(std::min(static_cast<double>(map[p]), clip) / clip);
  return map;
}

// ---------------------------------------------------------------------------
// Dataset-level aggregation
// ---------------------------------------------------------------------------

struct MetricRow {
  std::string sample_id;
  double ergas = 0, psnr = 0, ssim = 0, sam = 0, uiqi = 0;
};

template <typename T>
MetricRow evaluate_pair(const std::string& id, const Tensor<T>& x, const Tensor<T>& ref, int s,
                        double peak = 1.0) {
  MetricRow r;
  r.sample_id = id;
  r.ergas = ergas(x, ref, s);
  r.psnr = psnr(x, ref, peak);
  r.ssim = ssim(x, ref, peak);
  r.sam = sam(x, ref);
  r.uiqi = uiqi_mean(x, ref);
  return r;
}

struct MetricReport {
  std::string split;
  std::vector<MetricRow> rows;

  MetricRow means() const {
    if (rows.empty()) throw ContractViolation("metric report: no rows");
    MetricRow m;
    m.sample_id = "mean";
    for (const auto& r : rows) {
      m.ergas += r.ergas;
      m.psnr += r.psnr;
      m.ssim += r.ssim;
      m.sam += r.sam;
      m.uiqi += r.uiqi;
    }
    double n = static_cast<double>(rows.size());
    m.ergas /= n;
    m.psnr /= n;
    m.ssim /= n;
    m.sam /= n;
    m.uiqi /= n;
    return m;
  }

  static const char* csv_header() {
    return "sample_id,ergas,psnr,ssim,sam,uiqi_q2n_substitute";
  }

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write metric report: " + path.string());
    f << csv_header() << "\n";
    auto emit = [&](const MetricRow& r) {
      f << r.sample_id << ',' << std::setprecision(17) << r.ergas << ',' << r.psnr << ','
        << r.ssim << ',' << r.sam << ',' << r.uiqi << "\n";
    };
    for (const auto& r : rows) emit(r);
    emit(means());
  }

  static MetricReport read_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read metric report: " + path.string());
    std::string line;
    if (!std::getline(f, line) || line != csv_header())
      throw IoError("unexpected metric CSV header in " + path.string());
    MetricReport rep;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      MetricRow r;
      std::string field;
      std::getline(ss, r.sample_id, ',');
      std::getline(ss, field, ',');
      r.ergas = std::stod(field);
      std::getline(ss, field, ',');
      r.psnr = std::stod(field);
      std::getline(ss, field, ',');
      r.ssim = std::stod(field);
      std::getline(ss, field, ',');
      r.sam = std::stod(field);
      std::getline(ss, field, ',');
      r.uiqi = std::stod(field);
      if (r.sample_id != "mean") rep.rows.push_back(std::move(r));
    }
    return rep;
  }
};

}  // namespace pansharp
