// unfold-pansharp command line: data generation, training, fusion, the
// classical solver, evaluation and rank reports.

#include <CLI11.hpp>

#include <array>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pansharp/baselines.hpp"
#include "pansharp/checkpoint.hpp"
#include "pansharp/metrics.hpp"
#include "pansharp/png_io.hpp"
#include "pansharp/rank.hpp"
#include "pansharp/runconfig.hpp"

namespace fs = std::filesystem;
using namespace pansharp;

namespace {

int exit_code_for(const std::string& tag) {
  if (tag == "config") return 2;
  if (tag == "io") return 3;
  return 1;
}

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

// flag > UNFOLD_PANSHARP_SEED > config file > defaults
RunConfig resolve_config(const CommonFlags& cf) {
  RunConfig rc;
  std::string sources = "defaults";
  if (!cf.config_path.empty()) {
    apply_config_file(rc, cf.config_path);
    sources += " < " + cf.config_path;
  }
  if (apply_env_seed(rc)) sources += " < env UNFOLD_PANSHARP_SEED";
  if (cf.seed) {
    rc.seed = *cf.seed;
    sources += " < --seed";
  }
  std::cout << "config precedence: " << sources << " (seed=" << rc.seed << ")\n";
  return rc;
}

std::array<int, 3> parse_bands(const std::string& arg) {
  std::array<int, 3> bands{0, 1, 2};
  if (arg.empty()) return bands;
  std::istringstream ss(arg);
  std::string tok;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(ss, tok, ','))
      throw ConfigError("--bands expects three comma-separated indices");
    bands[static_cast<std::size_t>(i)] = std::stoi(tok);
  }
  return bands;
}

ModelConfig model_config_for(const RunConfig& rc, const DatasetManifest& m) {
  ModelConfig mc = rc.model;
  mc.channels = m.channels;
  mc.s = m.s;
  return mc;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& rc0, const std::string& out) {
  RunConfig rc = rc0;
  split_counts(rc.total_samples, rc.dataset.n_train, rc.dataset.n_val, rc.dataset.n_test);
  rc.dataset.seed = rc.seed;
  rc.dataset.validate();
  DatasetManifest m = make_dataset<float>(rc.dataset, out);
  std::cout << "dataset written to " << out << ": " << m.splits["train"].size() << "/"
            << m.splits["val"].size() << "/" << m.splits["test"].size()
            << " train/val/test, s=" << m.s << ", sigma=" << m.sigma << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& data, const std::string& out) {
  DatasetManifest m = DatasetManifest::load(data);
  auto train_set = load_split<float>(data, m, "train");
  auto val_set = load_split<float>(data, m, "val");
  UnfoldedModel<float> model(model_config_for(rc, m), rc.seed);
  TrainConfig tc = rc.train;
  tc.seed = rc.seed;
  fs::create_directories(fs::path(out));
  TrainResult res = train(model, train_set, val_set, tc, fs::path(out) / "checkpoint");
  write_epoch_log(res.log, fs::path(out) / "train_log.csv");
  std::cout << "best val PSNR " << res.best_val_psnr << " dB at epoch " << res.best_epoch
            << "; checkpoint in " << out << "/checkpoint\n";
  return 0;
}

int cmd_finetune(const RunConfig& rc, const std::string& ckpt, const std::string& data,
                 const std::string& out) {
  DatasetManifest m = DatasetManifest::load(data);
  auto train_set = load_split<float>(data, m, "train");
  auto val_set = load_split<float>(data, m, "val");
  CheckpointInfo info;
  UnfoldedModel<float> model = model_from_checkpoint<float>(ckpt, &info);
  TrainConfig tc = rc.train;
  tc.seed = rc.seed;
  fs::create_directories(fs::path(out));
  TrainResult res = finetune_post(model, train_set, val_set, tc, fs::path(out) / "checkpoint");
  write_epoch_log(res.log, fs::path(out) / "finetune_log.csv");
  std::cout << "post-processing fine-tune: best val PSNR " << res.best_val_psnr
            << " dB; checkpoint in " << out << "/checkpoint\n";
  return 0;
}

int cmd_fuse(const std::string& ckpt, const std::string& sample, const std::string& out,
             const std::string& png, const std::string& bands) {
  UnfoldedModel<float> model = model_from_checkpoint<float>(ckpt);
  Tensor<float> y = load_tensor<float>(fs::path(sample) / "lowres.ten");
  Tensor<float> pan = load_tensor<float>(fs::path(sample) / "pan.ten");
  Tensor<float> fused = model.fuse(y, pan);
  save_tensor(fused, out);
  if (!png.empty()) export_png(fused, parse_bands(bands), png);
  std::cout << "fused " << shape_str(fused.shape()) << " written to " << out << "\n";
  return 0;
}

int cmd_solve(const RunConfig& rc, const std::string& sample, const std::string& out,
              const std::string& trace_path) {
  Tensor<double> y = load_tensor<double>(fs::path(sample) / "lowres.ten");
  Tensor<double> pan = load_tensor<double>(fs::path(sample) / "pan.ten");
  int s = pan.extent(1) / y.extent(1);
  if (pan.extent(1) != s * y.extent(1) || pan.extent(2) != s * y.extent(2))
    throw ContractViolation("solve: PAN extents are not an integer multiple of the low-res");
  EnergyParams ep = rc.energy;
  ep.s = s;
  ep.sigma_b = rc.energy.sigma_b >= 0 ? rc.energy.sigma_b : static_cast<double>(s) / 2.0;
  int c = y.extent(0);
  // classical low-frequency references: Hhat from Y, Phat from the degraded PAN
  Tensor<double> hhat = bicubic_up(y, s);
  Tensor<double> phat1 = bicubic_up(decimate(gaussian_blur(pan, ep.sigma_b), s), s);
  Tensor<double> phat = replicate_channels(phat1, c);
  Tensor<double> pan_c = replicate_channels(pan, c);
  SolveOptions<double> so;
  so.max_iter = rc.solve_iters;
  so.tol = rc.solve_tol;
  SolveResult<double> res = primal_dual_solve(y, pan_c, phat, hhat, ep, so);
  save_tensor(res.u, out);
  if (!trace_path.empty()) {
    std::ofstream f(trace_path);
    if (!f) throw IoError("cannot write trace: " + trace_path);
    f << "iteration,energy,fixed_point_residual\n";
    for (std::size_t i = 0; i < res.energy.size(); ++i)
      f << (i + 1) << ',' << std::setprecision(17) << res.energy[i] << ',' << res.residual[i]
        << "\n";
  }
  std::cout << "solve: " << res.iterations << " iterations, final residual "
            << res.residual.back() << ", fused written to " << out << "\n";
  return 0;
}

int cmd_baseline(const std::string& kind_name, const std::string& data, const std::string& split,
                 const std::string& sample, const std::string& out) {
  BaselineKind kind = baseline_from_name(kind_name);
  if (!sample.empty()) {
    Tensor<float> y = load_tensor<float>(fs::path(sample) / "lowres.ten");
    Tensor<float> pan = load_tensor<float>(fs::path(sample) / "pan.ten");
    int s = pan.extent(1) / y.extent(1);
    save_tensor(fuse_baseline(kind, y, pan, s), out);
    std::cout << kind_name << " fusion written to " << out << "\n";
    return 0;
  }
  DatasetManifest m = DatasetManifest::load(data);
  fs::create_directories(fs::path(out));
  for (const std::string& id : m.splits.at(split)) {
    FusionSample<float> smp = load_sample<float>(data, split, id);
    save_tensor(fuse_baseline(kind, smp.lowres, smp.pan, m.s),
                fs::path(out) / (id + ".ten"));
  }
  std::cout << kind_name << " fusions for split '" << split << "' written to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& data, const std::string& split, const std::string& ckpt,
             const std::string& baseline_name_arg, const std::string& pred_dir,
             const std::string& out) {
  DatasetManifest m = DatasetManifest::load(data);
  int sources = (!ckpt.empty()) + (!baseline_name_arg.empty()) + (!pred_dir.empty());
  if (sources != 1)
    throw ConfigError("eval: give exactly one of --ckpt, --baseline, --pred");
  std::optional<UnfoldedModel<float>> model;
  if (!ckpt.empty()) model.emplace(model_from_checkpoint<float>(ckpt));

  MetricReport rep;
  rep.split = split;
  for (const std::string& id : m.splits.at(split)) {
    FusionSample<float> smp = load_sample<float>(data, split, id);
    Tensor<float> pred;
    if (model)
      pred = model->fuse(smp.lowres, smp.pan);
    else if (!baseline_name_arg.empty())
      pred = fuse_baseline(baseline_from_name(baseline_name_arg), smp.lowres, smp.pan, m.s);
    else
      pred = load_tensor<float>(fs::path(pred_dir) / (id + ".ten"));
    rep.rows.push_back(evaluate_pair(id, pred, smp.gt, m.s));
  }
  rep.write_csv(out);
  MetricRow mu = rep.means();
  std::cout << "split " << split << " means: ergas " << mu.ergas << ", psnr " << mu.psnr
            << ", ssim " << mu.ssim << ", sam " << mu.sam << ", uiqi (Q2n substitute) "
            << mu.uiqi << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// rank-report
// ---------------------------------------------------------------------------

void rank_scatter_png(const std::vector<MethodRank>& methods, const fs::path& path) {
  const int kSize = 320, kMargin = 32;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(3) * kSize * kSize, 255);
  auto put = [&](int x, int y, std::uint8_t v) {
    if (x < 0 || x >= kSize || y < 0 || y >= kSize) return;
    std::size_t i = static_cast<std::size_t>(3) * (static_cast<std::size_t>(y) * kSize + x);
    rgb[i] = rgb[i + 1] = rgb[i + 2] = v;
  };
  for (int i = kMargin; i < kSize - kMargin; ++i) {
    put(i, kSize - kMargin, 0);
    put(kMargin, i, 0);
  }
  int n = static_cast<int>(methods.size());
  auto coord = [&](int rank) {
    double t = n > 1 ? static_cast<double>(rank - 1) / (n - 1) : 0.5;
    return kMargin + static_cast<int>(t * (kSize - 2 * kMargin));
  };
  for (const auto& m : methods) {
    int cx = coord(m.val_rank);
    int cy = kSize - coord(m.test_rank);
    for (int dy = -3; dy <= 3; ++dy)
      for (int dx = -3; dx <= 3; ++dx) put(cx + dx, cy + dy, 40);
  }
  write_png_rgb8(path, kSize, kSize, rgb);
}

int cmd_rank_report(const std::vector<std::string>& val_specs,
                    const std::vector<std::string>& test_specs, const std::string& out) {
  auto parse = [](const std::vector<std::string>& specs) {
    std::vector<std::pair<std::string, fs::path>> parsed;
    for (const std::string& s : specs) {
      auto pos = s.find('=');
      if (pos == std::string::npos)
        throw ConfigError("rank-report: expected name=path, got '" + s + "'");
      parsed.emplace_back(s.substr(0, pos), s.substr(pos + 1));
    }
    return parsed;
  };
  std::vector<MethodRank> methods = rank_methods(parse(val_specs), parse(test_specs));
  fs::create_directories(fs::path(out));
  write_rank_csv(methods, fs::path(out) / "rank_report.csv");
  rank_scatter_png(methods, fs::path(out) / "rank_scatter.png");
  for (const auto& m : methods)
    std::cout << m.name << ": val rank " << m.val_rank << ", test rank " << m.test_rank << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unfold-pansharp: variational and unfolded satellite image fusion"};
  app.require_subcommand(1);

  CommonFlags cf;
  std::uint64_t seed_flag = 0;

  std::string data, out, ckpt, sample, split = "val", kind = "bicubic", png, bands;
  std::string baseline_arg, pred_dir, trace_path;
  std::vector<std::string> val_specs, test_specs;
  int samples = 20;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", cf.config_path, "JSON config file");
    c->add_option("--seed", seed_flag, "RNG seed (overrides config and env)");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a Wald-protocol synthetic dataset");
  add_common(gen);
  gen->add_option("--samples", samples, "total sample count (70/15/15 split)");
  int gd_s = 0, gd_channels = 0, gd_patch = 0;
  double gd_sigma = -1;
  gen->add_option("--s", gd_s, "sampling factor");
  gen->add_option("--sigma", gd_sigma, "noise std on the 0-255 scale");
  gen->add_option("--channels", gd_channels, "spectral bands");
  gen->add_option("--patch", gd_patch, "patch size");
  gen->add_option("--out", out, "dataset root")->required();

  auto* tr = app.add_subcommand("train", "train the unfolded model");
  add_common(tr);
  tr->add_option("--data", data, "dataset root")->required();
  tr->add_option("--out", out, "run output directory")->required();
  int tr_epochs = -1, tr_stages = -1, tr_variant = -1, tr_feat = -1, tr_radius = -1;
  double tr_lr = -1;
  tr->add_option("--epochs", tr_epochs, "training epochs");
  tr->add_option("--lr", tr_lr, "Adam learning rate");
  tr->add_option("--stages", tr_stages, "primal-dual stages N");
  tr->add_option("--variant", tr_variant, "MARNet variant 1-6");
  tr->add_option("--feat", tr_feat, "feature width F");
  tr->add_option("--radius", tr_radius, "attention window radius r");

  auto* ft = app.add_subcommand("finetune", "fine-tune the post-processing MARNet");
  add_common(ft);
  ft->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  ft->add_option("--data", data, "dataset root")->required();
  ft->add_option("--out", out, "run output directory")->required();
  int ft_epochs = -1;
  ft->add_option("--epochs", ft_epochs, "fine-tune epochs");

  auto* fu = app.add_subcommand("fuse", "fuse one sample with a trained model");
  fu->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  fu->add_option("--sample", sample, "sample directory")->required();
  fu->add_option("--out", out, "output .ten path")->required();
  fu->add_option("--png", png, "optional PNG preview path");
  fu->add_option("--bands", bands, "PNG band triplet, e.g. 2,1,0");

  auto* so = app.add_subcommand("solve", "classical primal-dual fusion");
  add_common(so);
  so->add_option("--sample", sample, "sample directory")->required();
  so->add_option("--out", out, "output .ten path")->required();
  so->add_option("--trace", trace_path, "convergence CSV path");
  double so_lambda = -1, so_beta = -1, so_mu = -1, so_tol = -1;
  int so_iters = -1;
  so->add_option("--lambda", so_lambda, "fidelity weight");
  so->add_option("--beta", so_beta, "radiometric constraint weight");
  so->add_option("--mu", so_mu, "quadratic prior weight");
  so->add_option("--iters", so_iters, "max iterations");
  so->add_option("--tol", so_tol, "relative-change stopping tolerance");

  auto* ev = app.add_subcommand("eval", "compute quality metrics for a split");
  ev->add_option("--data", data, "dataset root")->required();
  ev->add_option("--split", split, "train|val|test");
  ev->add_option("--ckpt", ckpt, "checkpoint to evaluate");
  ev->add_option("--baseline", baseline_arg, "baseline method to evaluate");
  ev->add_option("--pred", pred_dir, "directory of precomputed <sample_id>.ten");
  ev->add_option("--out", out, "metric CSV path")->required();

  auto* ba = app.add_subcommand("baseline", "classical fusion baselines");
  ba->add_option("--kind", kind, "bicubic|brovey|ihs")->required();
  ba->add_option("--data", data, "dataset root (batch mode)");
  ba->add_option("--split", split, "split for batch mode");
  ba->add_option("--sample", sample, "single sample directory");
  ba->add_option("--out", out, "output file (single) or directory (batch)")->required();

  auto* rr = app.add_subcommand("rank-report", "PSNR rank comparison across methods");
  rr->add_option("--val", val_specs, "name=metrics.csv for the validation split");
  rr->add_option("--test", test_specs, "name=metrics.csv for the test split");
  rr->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (CLI::App* c : {gen, tr, ft, so})
      if (c->parsed() && c->count("--seed")) cf.seed = seed_flag;
    RunConfig rc = resolve_config(cf);
    if (gen->parsed()) {
      if (gd_s > 0) rc.dataset.s = gd_s;
      if (gd_sigma >= 0) rc.dataset.sigma = gd_sigma;
      if (gd_channels > 0) rc.dataset.channels = gd_channels;
      if (gd_patch > 0) rc.dataset.patch = gd_patch;
      if (gen->count("--samples")) rc.total_samples = samples;
      return cmd_gen_data(rc, out);
    }
    if (tr->parsed()) {
      if (tr_epochs >= 0) rc.train.epochs = tr_epochs;
      if (tr_lr > 0) rc.train.lr = tr_lr;
      if (tr_stages > 0) rc.model.stages = tr_stages;
      if (tr_variant > 0) rc.model.variant = tr_variant;
      if (tr_feat > 0) rc.model.attention.feat = tr_feat;
      if (tr_radius >= 0) rc.model.attention.radius = tr_radius;
      return cmd_train(rc, data, out);
    }
    if (ft->parsed()) {
      if (ft_epochs >= 0) rc.train.finetune_epochs = ft_epochs;
      return cmd_finetune(rc, ckpt, data, out);
    }
    if (fu->parsed()) return cmd_fuse(ckpt, sample, out, png, bands);
    if (so->parsed()) {
      if (so_lambda > 0) rc.energy.lambda = so_lambda;
      if (so_beta >= 0) rc.energy.beta = so_beta;
      if (so_mu >= 0) rc.energy.mu = so_mu;
      if (so_iters > 0) rc.solve_iters = so_iters;
      if (so_tol >= 0) rc.solve_tol = so_tol;
      return cmd_solve(rc, sample, out, trace_path);
    }
    if (ev->parsed()) return cmd_eval(data, split, ckpt, baseline_arg, pred_dir, out);
    if (ba->parsed()) return cmd_baseline(kind, data, split, sample, out);
    if (rr->parsed()) return cmd_rank_report(val_specs, test_specs, out);
    std::cerr << "ERROR[config]: no subcommand\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "ERROR[" << e.tag() << "]: " << e.what() << "\n";
    return exit_code_for(e.tag());
  } catch (const std::exception& e) {
    std::cerr << "ERROR[internal]: " << e.what() << "\n";
    return 1;
  }
}
