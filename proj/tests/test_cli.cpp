#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "pansharp/datasynth.hpp"
#include "pansharp/metrics.hpp"
#include "pansharp/solver.hpp"
#include "pansharp/tensor_io.hpp"

using namespace pansharp;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "pansharp_cli_test";

int run(const std::string& args, const fs::path& log = {}) {
  std::string cmd = std::string(PANSHARP_BIN) + " " + args;
  if (!log.empty()) cmd += " > " + log.string() + " 2>&1";
  else cmd += " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("gen-data: split ratio, determinism, sampling factor") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  fs::path d1 = kWork / "d1", d2 = kWork / "d2";
  REQUIRE(run("gen-data --samples 20 --s 4 --sigma 0 --seed 7 --channels 3 --patch 16 --out " +
              d1.string()) == 0);
  DatasetManifest m = DatasetManifest::load(d1);
  CHECK(m.splits["train"].size() == 14);
  CHECK(m.splits["val"].size() == 3);
  CHECK(m.splits["test"].size() == 3);

  REQUIRE(run("gen-data --samples 20 --s 4 --sigma 0 --seed 7 --channels 3 --patch 16 --out " +
              d2.string()) == 0);
  for (const auto& [split, ids] : m.splits)
    for (const auto& id : ids)
      for (const char* f : {"gt.ten", "pan.ten", "lowres.ten"})
        CHECK(slurp(d1 / split / id / f) == slurp(d2 / split / id / f));

  fs::path d12 = kWork / "d12";
  REQUIRE(run("gen-data --samples 6 --s 12 --sigma 0 --seed 3 --channels 2 --patch 24 --out " +
              d12.string()) == 0);
  DatasetManifest m12 = DatasetManifest::load(d12);
  auto smp = load_sample<float>(d12, "train", m12.splits["train"][0]);
  CHECK(smp.gt.extent(1) == 24);
  CHECK(smp.lowres.extent(1) == 2);
}

TEST_CASE("solve matches the normal-equations CG oracle through the CLI") {
  fs::path data = kWork / "dsolve";
  REQUIRE(run("gen-data --samples 6 --s 2 --sigma 0 --seed 21 --channels 3 --patch 16 --out " +
              data.string()) == 0);
  fs::path sample = data / "train" / "sample_0000";
  fs::path fused = kWork / "solve.ten";
  fs::path trace = kWork / "trace.csv";
  REQUIRE(run("solve --sample " + sample.string() + " --lambda 1 --beta 0 --mu 0.1 --iters 4000" +
              " --tol 0 --out " + fused.string() + " --trace " + trace.string()) == 0);
  Tensor<double> u = load_tensor<double>(fused);

  Tensor<double> y = load_tensor<double>(sample / "lowres.ten");
  EnergyParams p;
  p.lambda = 1;
  p.beta = 0;
  p.mu = 0.1;
  p.s = 2;
  p.sigma_b = 1.0;
  auto normal_op = [&](const Tensor<double>& v) {
    return add(scale(apply_BtDt(apply_DB(v, p), p), p.lambda),
               scale(laplacian_neumann(v), p.mu));
  };
  Tensor<double> b = scale(apply_BtDt(y, p), p.lambda);
  Tensor<double> want = conjugate_gradient<double>(normal_op, b, 1e-12, 3000, "oracle");
  CHECK(norm2(sub(u, want)) / norm2(want) < 1e-6);

  // trace has the declared header and rows
  std::ifstream tf(trace);
  std::string header;
  std::getline(tf, header);
  CHECK(header == "iteration,energy,fixed_point_residual");
  int rows = 0;
  for (std::string line; std::getline(tf, line);)
    if (!line.empty()) ++rows;
  CHECK(rows >= 100);
}

TEST_CASE("eval on ground-truth predictions yields perfect scores") {
  fs::path data = kWork / "d1";
  DatasetManifest m = DatasetManifest::load(data);
  fs::path preds = kWork / "gt_preds";
  fs::create_directories(preds);
  for (const auto& id : m.splits["val"])
    fs::copy_file(data / "val" / id / "gt.ten", preds / (id + ".ten"),
                  fs::copy_options::overwrite_existing);
  fs::path csv = kWork / "gt_eval.csv";
  REQUIRE(run("eval --data " + data.string() + " --split val --pred " + preds.string() +
              " --out " + csv.string()) == 0);
  MetricReport rep = MetricReport::read_csv(csv);
  for (const auto& r : rep.rows) {
    CHECK(r.psnr == 100.0);
    CHECK(r.ergas == 0.0);
    CHECK(r.ssim == doctest::Approx(1.0));
    CHECK(r.sam == doctest::Approx(0.0));
    CHECK(r.uiqi == doctest::Approx(1.0));
  }
}

TEST_CASE("baseline command fuses a split") {
  fs::path data = kWork / "d1";
  fs::path outdir = kWork / "brovey";
  REQUIRE(run("baseline --kind brovey --data " + data.string() + " --split val --out " +
              outdir.string()) == 0);
  DatasetManifest m = DatasetManifest::load(data);
  Tensor<float> fused = load_tensor<float>(outdir / (m.splits["val"][0] + ".ten"));
  CHECK(fused.shape() == Shape{3, 16, 16});
  CHECK(run("baseline --kind pca --data " + data.string() + " --split val --out " +
            outdir.string()) == 2);
}

TEST_CASE("train, fuse and eval round trip with config hash guard") {
  fs::path data = kWork / "dtrain";
  REQUIRE(run("gen-data --samples 7 --s 2 --sigma 0 --seed 5 --channels 2 --patch 16 --out " +
              data.string()) == 0);
  fs::path rundir = kWork / "run";
  REQUIRE(run("train --data " + data.string() + " --out " + rundir.string() +
              " --epochs 2 --stages 1 --feat 6 --radius 1 --seed 5") == 0);
  CHECK(fs::exists(rundir / "train_log.csv"));
  CHECK(fs::exists(rundir / "checkpoint" / "manifest.json"));

  DatasetManifest m = DatasetManifest::load(data);
  fs::path sample = data / "val" / m.splits["val"][0];
  fs::path fused1 = kWork / "fused1.ten", fused2 = kWork / "fused2.ten";
  fs::path png = kWork / "fused.png";
  REQUIRE(run("fuse --ckpt " + (rundir / "checkpoint").string() + " --sample " + sample.string() +
              " --out " + fused1.string() + " --png " + png.string() + " --bands 1,0,0") == 0);
  REQUIRE(run("fuse --ckpt " + (rundir / "checkpoint").string() + " --sample " + sample.string() +
              " --out " + fused2.string()) == 0);
  CHECK(slurp(fused1) == slurp(fused2));  // fused outputs reproducible
  CHECK(fs::exists(png));
  Tensor<float> fused = load_tensor<float>(fused1);
  CHECK(fused.shape() == Shape{2, 16, 16});

  fs::path csv = kWork / "model_eval.csv";
  REQUIRE(run("eval --data " + data.string() + " --split val --ckpt " +
              (rundir / "checkpoint").string() + " --out " + csv.string()) == 0);
  MetricReport rep = MetricReport::read_csv(csv);
  CHECK(rep.rows.size() == m.splits["val"].size());

  // finetune runs and keeps non-post weights
  fs::path ftdir = kWork / "ft";
  REQUIRE(run("finetune --ckpt " + (rundir / "checkpoint").string() + " --data " + data.string() +
              " --out " + ftdir.string() + " --epochs 1 --seed 5") == 0);
  CHECK(fs::exists(ftdir / "finetune_log.csv"));

  // checkpoint trained on a different config is rejected by fuse on this one
  fs::path rundir2 = kWork / "run2";
  REQUIRE(run("train --data " + data.string() + " --out " + rundir2.string() +
              " --epochs 1 --stages 2 --feat 6 --radius 1 --seed 5") == 0);
  // evaluating a checkpoint against data of another geometry must fail with
  // a nonzero machine-parsable error
  fs::path baddata = kWork / "dbad";
  REQUIRE(run("gen-data --samples 6 --s 4 --sigma 0 --seed 5 --channels 2 --patch 16 --out " +
              baddata.string()) == 0);
  fs::path log = kWork / "err.log";
  int rc = run("eval --data " + baddata.string() + " --split val --ckpt " +
               (rundir / "checkpoint").string() + " --out " + (kWork / "x.csv").string(), log);
  CHECK(rc != 0);
}

TEST_CASE("rank-report reproduces hand-enumerated ranks on fixture CSVs") {
  fs::path dir = kWork / "rank_fixture";
  fs::create_directories(dir);
  auto write_csv = [&](const std::string& name, const std::string& split, double psnr_base) {
    MetricReport rep;
    for (int i = 0; i < 3; ++i) {
      MetricRow r;
      r.sample_id = "sample_" + std::to_string(i);
      r.psnr = psnr_base + i;
      r.ergas = 1;
      r.ssim = 1;
      r.sam = 1;
      r.uiqi = 1;
      rep.rows.push_back(r);
    }
    rep.write_csv(dir / (name + "_" + split + ".csv"));
  };
  // val: alpha 30, tie between beta and gamma at 28 -> beta before gamma
  write_csv("alpha", "val", 30);
  write_csv("beta", "val", 28);
  write_csv("gamma", "val", 28);
  // test: gamma wins, then alpha, then beta
  write_csv("alpha", "test", 25);
  write_csv("beta", "test", 24);
  write_csv("gamma", "test", 31);
  fs::path out = kWork / "rank_out";
  REQUIRE(run("rank-report --val alpha=" + (dir / "alpha_val.csv").string() +
              " --val beta=" + (dir / "beta_val.csv").string() +
              " --val gamma=" + (dir / "gamma_val.csv").string() +
              " --test alpha=" + (dir / "alpha_test.csv").string() +
              " --test beta=" + (dir / "beta_test.csv").string() +
              " --test gamma=" + (dir / "gamma_test.csv").string() + " --out " + out.string()) ==
          0);
  std::string csv = slurp(out / "rank_report.csv");
  CHECK(csv.find("alpha") != std::string::npos);
  // hand enumeration: val ranks alpha=1, beta=2 (tie, lexicographic), gamma=3
  //                   test ranks gamma=1, alpha=2, beta=3
  std::istringstream ss(csv);
  std::string line;
  std::getline(ss, line);  // header
  std::map<std::string, std::pair<int, int>> got;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, vp, vr, tp, trk;
    std::getline(ls, name, ',');
    std::getline(ls, vp, ',');
    std::getline(ls, vr, ',');
    std::getline(ls, tp, ',');
    std::getline(ls, trk, ',');
    got[name] = {std::stoi(vr), std::stoi(trk)};
  }
  CHECK(got["alpha"] == std::make_pair(1, 2));
  CHECK(got["beta"] == std::make_pair(2, 3));
  CHECK(got["gamma"] == std::make_pair(3, 1));
  CHECK(fs::exists(out / "rank_scatter.png"));

  // two methods, one strictly better on both splits
  fs::path out2 = kWork / "rank_out2";
  REQUIRE(run("rank-report --val alpha=" + (dir / "alpha_val.csv").string() +
              " --val beta=" + (dir / "beta_val.csv").string() +
              " --test alpha=" + (dir / "alpha_test.csv").string() +
              " --test beta=" + (dir / "beta_test.csv").string() + " --out " + out2.string()) ==
          0);
  std::string csv2 = slurp(out2 / "rank_report.csv");
  CHECK(csv2.find("alpha,31") != std::string::npos);
}

TEST_CASE("errors are single-line machine-parsable with documented exit codes") {
  fs::path log = kWork / "err1.log";
  // missing dataset -> io error, exit 3
  int rc = run("train --data " + (kWork / "nope").string() + " --out " + (kWork / "o").string(),
               log);
  CHECK(rc == 3);
  std::string msg = slurp(log);
  CHECK(msg.find("ERROR[io]:") != std::string::npos);

  // malformed config -> exit 2
  fs::path badcfg = kWork / "bad.json";
  std::ofstream(badcfg) << "{\"unknown_key\": 1}\n";
  rc = run("gen-data --samples 8 --config " + badcfg.string() + " --out " +
           (kWork / "x").string(), log);
  CHECK(rc == 2);
  msg = slurp(log);
  CHECK(msg.find("ERROR[config]:") != std::string::npos);

  // env seed is honored
  fs::path denv = kWork / "denv";
  fs::path dflag = kWork / "dflag";
  REQUIRE(std::system(("UNFOLD_PANSHARP_SEED=7 " + std::string(PANSHARP_BIN) +
                       " gen-data --samples 6 --s 2 --channels 2 --patch 16 --out " +
                       denv.string() + " > /dev/null 2>&1")
                          .c_str()) == 0);
  REQUIRE(run("gen-data --samples 6 --s 2 --channels 2 --patch 16 --seed 7 --out " +
              dflag.string()) == 0);
  DatasetManifest a = DatasetManifest::load(denv), b = DatasetManifest::load(dflag);
  CHECK(a.seed == 7);
  CHECK(b.seed == 7);
  CHECK(slurp(denv / "train" / "sample_0000" / "gt.ten") ==
        slurp(dflag / "train" / "sample_0000" / "gt.ten"));
}
