#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pansharp/imaging.hpp"
#include "pansharp/tensor_io.hpp"

namespace pansharp {

inline constexpr const char* kSceneGeneratorVersion = "scene-gen-v1";

// PAN spectral mixing weights; the default is a smooth bump over the first
// ceil(2C/3) bands normalized to sum 1, a stand-in for a VNIR-covering
// sensor response.
inline std::vector<double> default_spectral_response(int c) {
  int m = (2 * c + 2) / 3;
  std::vector<double> a(static_cast<std::size_t>(c), 0.0);
  double tot = 0;
  for (int i = 0; i < m; ++i) {
    double v = std::sin(3.14159265358979323846 * (i + 0.5) / m);
    a[static_cast<std::size_t>(i)] = v * v;
    tot += v * v;
  }
  for (double& v : a) v /= tot;
  return a;
}

inline void validate_spectral_response(const std::vector<double>& alpha) {
  bool any = false;
  for (double v : alpha) {
    if (v < 0) throw ContractViolation("spectral response: negative weight");
    if (v > 0) any = true;
  }
  if (!any) throw ContractViolation("spectral response: all weights are zero");
}

// ---------------------------------------------------------------------------
// Scene synthesis: R = min(C,4) abundance maps carrying the spatial content
// (smooth bumps, piecewise-constant rectangles, an oriented edge), each
// normalized to [0,1], mixed by a nonnegative C x R matrix with unit row
// sums. The cube is therefore in [0,1] and has spectral rank <= R by
// construction, with no clamping.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> synth_scene(std::uint64_t seed, int c, int h, int w) {
  if (c < 1) throw ContractViolation("synth_scene: need at least one band");
  if (h < 16 || w < 16) throw ContractViolation("synth_scene: extents must be >= 16");
  CounterRng rng(seed);
  int r = std::min(c, 4);
  std::vector<Tensor<double>> abund;
  for (int k = 0; k < r; ++k) {
    CounterRng ar = rng.fork(static_cast<std::uint64_t>(k) + 1);
    Tensor<double> m({1, h, w});
    // smooth bumps
    int bumps = 3 + ar.uniform_int(3);
    for (int b = 0; b < bumps; ++b) {
      double cy = ar.uniform(0, h), cx = ar.uniform(0, w);
      double sg = ar.uniform(h / 8.0, h / 3.0);
      double amp = ar.uniform(-1.0, 1.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          m.at(0, y, x) += amp * std::exp(-d2 / (2 * sg * sg));
        }
    }
    // piecewise-constant rectangles
    int rects = 2 + ar.uniform_int(3);
    for (int b = 0; b < rects; ++b) {
      int y0 = ar.uniform_int(h), x0 = ar.uniform_int(w);
      int hh = 2 + ar.uniform_int(h / 2), ww = 2 + ar.uniform_int(w / 2);
      double amp = ar.uniform(-0.8, 0.8);
      for (int y = y0; y < std::min(h, y0 + hh); ++y)
        for (int x = x0; x < std::min(w, x0 + ww); ++x) m.at(0, y, x) += amp;
    }
    // one oriented edge (half-plane step)
    {
      double ang = ar.uniform(0, 3.14159265358979323846);
      double ny = std::sin(ang), nx = std::cos(ang);
      double py = ar.uniform(0.25 * h, 0.75 * h), px = ar.uniform(0.25 * w, 0.75 * w);
      double amp = ar.uniform(-0.6, 0.6);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if ((y - py) * ny + (x - px) * nx > 0) m.at(0, y, x) += amp;
    }
    // normalize to [0,1]
    double lo = m[0], hi = m[0];
    for (long i = 0; i < m.numel(); ++i) {
      lo = std::min(lo, m[i]);
      hi = std::max(hi, m[i]);
    }
    double span = hi - lo;
    if (span < 1e-12) span = 1;
    for (long i = 0; i < m.numel(); ++i) m[i] = (m[i] - lo) / span;
    abund.push_back(std::move(m));
  }
  // nonnegative mixing with unit row sums
  CounterRng mr = rng.fork(0);
  Tensor<T> cube({c, h, w});
  long hw = static_cast<long>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    std::vector<double> row(static_cast<std::size_t>(r));
    double tot = 0;
    for (int k = 0; k < r; ++k) {
      row[static_cast<std::size_t>(k)] = mr.uniform(0.1, 1.0);
      tot += row[static_cast<std::size_t>(k)];
    }
    for (double& v : row) v /= tot;
    for (long p = 0; p < hw; ++p) {
      double acc = 0;
      for (int k = 0; k < r; ++k)
        acc += row[static_cast<std::size_t>(k)] * abund[static_cast<std::size_t>(k)][p];
      cube[ci * hw + p] = static_cast<T>(acc);
    }
  }
  return cube;
}

template <typename T>
Tensor<T> pan_from_spectral(const Tensor<T>& gt, const std::vector<double>& alpha) {
  require_rank(gt, 3, "pan_from_spectral");
  if (static_cast<int>(alpha.size()) != gt.extent(0))
    throw ContractViolation("pan_from_spectral: " + std::to_string(alpha.size()) +
                            " weights for " + std::to_string(gt.extent(0)) + " bands");
  validate_spectral_response(alpha);
  long hw = static_cast<long>(gt.extent(1)) * gt.extent(2);
  Tensor<T> pan({1, gt.extent(1), gt.extent(2)});
  for (long p = 0; p < hw; ++p) {
    double acc = 0;
    for (int ci = 0; ci < gt.extent(0); ++ci)
      acc += alpha[static_cast<std::size_t>(ci)] * gt[ci * hw + p];
    pan[p] = static_cast<T>(acc);
  }
  return pan;
}

// Y = D(B(gt)) + eta with sigma_b = s/2 by default (overridable) and eta
// zero-mean Gaussian with std sigma/255 (sigma quoted on the 8-bit scale),
// drawn from the given seed. The noise is reproducible from (seed, shape).
template <typename T>
Tensor<T> wald_degrade(const Tensor<T>& gt, int s, double sigma, std::uint64_t noise_seed,
                       double sigma_b = -1.0) {
  require_rank(gt, 3, "wald_degrade");
  if (s < 1) throw ContractViolation("wald_degrade: s must be >= 1");
  if (gt.extent(1) % s != 0 || gt.extent(2) % s != 0)
    throw ContractViolation("wald_degrade: extents " + shape_str(gt.shape()) +
                            " not divisible by s = " + std::to_string(s));
  if (sigma_b < 0) sigma_b = static_cast<double>(s) / 2.0;
  Tensor<T> low = decimate(gaussian_blur(gt, sigma_b), s);
  if (sigma > 0) {
    CounterRng rng(noise_seed);
    double std01 = sigma / 255.0;
    for (long i = 0; i < low.numel(); ++i)
      low[i] += static_cast<T>(std01 * rng.normal());
  }
  return low;
}

// ---------------------------------------------------------------------------
// Dataset on disk: root/{train,val,test}/sample_XXXX/{gt,pan,lowres}.ten
// plus manifest.json. Noise is recorded via per-sample seeds, not stored.
// ---------------------------------------------------------------------------

struct DatasetConfig {
  int n_train = 14, n_val = 3, n_test = 3;
  int channels = 4;
  int patch = 32;
  int s = 4;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> alpha;  // empty selects the default response

  void validate() const {
    if (n_train < 4 || n_val < 1 || n_test < 1)
      throw ConfigError("dataset config: need at least 4/1/1 train/val/test samples");
    if (patch < 16) throw ConfigError("dataset config: patch must be >= 16");
    if (patch % s != 0) throw ConfigError("dataset config: patch not divisible by s");
    if (sigma < 0) throw ConfigError("dataset config: sigma must be >= 0");
  }
};

// 70/15/15 split of a total count (+-1 sample from rounding), each >= 1.
inline void split_counts(int total, int& train, int& val, int& test) {
  train = std::max(1, static_cast<int>(std::lround(0.70 * total)));
  val = std::max(1, static_cast<int>(std::lround(0.15 * total)));
  test = std::max(1, total - train - val);
  train = total - val - test;
}

struct DatasetManifest {
  std::string version = kSceneGeneratorVersion;
  std::uint64_t seed = 0;
  int channels = 0, patch = 0, s = 0;
  double sigma = 0;
  std::vector<double> alpha;
  std::map<std::string, std::vector<std::string>> splits;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = version;
    j["seed"] = seed;
    j["channels"] = channels;
    j["patch"] = patch;
    j["s"] = s;
    j["sigma"] = sigma;
    j["alpha"] = alpha;
    j["splits"] = splits;
    return j;
  }
  static DatasetManifest from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.channels = j.at("channels").get<int>();
    m.patch = j.at("patch").get<int>();
    m.s = j.at("s").get<int>();
    m.sigma = j.at("sigma").get<double>();
    m.alpha = j.at("alpha").get<std::vector<double>>();
    m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
    return m;
  }
  bool operator==(const DatasetManifest& o) const = default;

  void save(const std::filesystem::path& root) const {
    std::ofstream f(root / "manifest.json");
    if (!f) throw IoError("cannot write manifest: " + (root / "manifest.json").string());
    f << to_json().dump(2) << "\n";
  }
  static DatasetManifest load(const std::filesystem::path& root) {
    std::ifstream f(root / "manifest.json");
    if (!f) throw IoError("cannot read manifest: " + (root / "manifest.json").string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw IoError("malformed manifest in " + root.string());
    return from_json(j);
  }
};

template <typename T>
struct FusionSample {
  std::string id;
  Tensor<T> gt;      // (C, H, W)
  Tensor<T> pan;     // (1, H, W)
  Tensor<T> lowres;  // (C, H/s, W/s)
};

// Per-sample generation, reused verbatim by the bit-exact regeneration test.
template <typename T>
FusionSample<T> generate_sample(const DatasetConfig& cfg, const std::vector<double>& alpha,
                                int index) {
  CounterRng base(cfg.seed);
  std::uint64_t scene_seed = base.fork(2 * static_cast<std::uint64_t>(index)).seed();
  std::uint64_t noise_seed = base.fork(2 * static_cast<std::uint64_t>(index) + 1).seed();
  FusionSample<T> smp;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "sample_%04d", index);
  smp.id = buf;
  smp.gt = synth_scene<T>(scene_seed, cfg.channels, cfg.patch, cfg.patch);
  smp.pan = pan_from_spectral(smp.gt, alpha);
  smp.lowres = wald_degrade(smp.gt, cfg.s, cfg.sigma, noise_seed);
  return smp;
}

template <typename T>
DatasetManifest make_dataset(const DatasetConfig& cfg, const std::filesystem::path& root) {
  cfg.validate();
  std::vector<double> alpha = cfg.alpha.empty() ? default_spectral_response(cfg.channels)
                                                : cfg.alpha;
  validate_spectral_response(alpha);
  DatasetManifest m;
  m.seed = cfg.seed;
  m.channels = cfg.channels;
  m.patch = cfg.patch;
  m.s = cfg.s;
  m.sigma = cfg.sigma;
  m.alpha = alpha;

  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create dataset root: " + root.string());

  int index = 0;
  auto emit_split = [&](const std::string& split, int count) {
    for (int i = 0; i < count; ++i, ++index) {
      FusionSample<T> smp = generate_sample<T>(cfg, alpha, index);
      std::filesystem::path dir = root / split / smp.id;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw IoError("cannot create sample dir: " + dir.string());
      save_tensor(smp.gt, dir / "gt.ten");
      save_tensor(smp.pan, dir / "pan.ten");
      save_tensor(smp.lowres, dir / "lowres.ten");
      m.splits[split].push_back(smp.id);
    }
  };
  emit_split("train", cfg.n_train);
  emit_split("val", cfg.n_val);
  emit_split("test", cfg.n_test);
  m.save(root);
  return m;
}

template <typename T>
FusionSample<T> load_sample(const std::filesystem::path& root, const std::string& split,
                            const std::string& id) {
  std::filesystem::path dir = root / split / id;
  FusionSample<T> smp;
  smp.id = id;
  smp.gt = load_tensor<T>(dir / "gt.ten");
  smp.pan = load_tensor<T>(dir / "pan.ten");
  smp.lowres = load_tensor<T>(dir / "lowres.ten");
  return smp;
}

template <typename T>
std::vector<FusionSample<T>> load_split(const std::filesystem::path& root,
                                        const DatasetManifest& m, const std::string& split) {
  std::vector<FusionSample<T>> out;
  auto it = m.splits.find(split);
  if (it == m.splits.end()) throw IoError("manifest has no split '" + split + "'");
  for (const std::string& id : it->second) out.push_back(load_sample<T>(root, split, id));
  return out;
}

}  // namespace pansharp
