#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <vector>

#include "pansharp/adam.hpp"
#include "pansharp/checkpoint.hpp"
#include "pansharp/datasynth.hpp"
#include "pansharp/metrics.hpp"
#include "pansharp/model.hpp"

namespace pansharp {

struct TrainConfig {
  int epochs = 50;           // desk-scale default; full-scale runs use 1000
  int finetune_epochs = 10;  // full-scale 100
  double lr = 5e-4;
  double alpha = 0.1;  // stage-MSE weight in the unfolded loss
  int batch = 4;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0 || finetune_epochs < 0) throw ConfigError("train config: negative epochs");
    if (lr <= 0) throw ConfigError("train config: lr must be positive");
    if (alpha < 0) throw ConfigError("train config: alpha must be >= 0");
    if (batch < 1) throw ConfigError("train config: batch must be >= 1");
  }
};

struct EpochLogRow {
  int epoch = 0;
  double train_loss = 0;
  double val_psnr = 0;
  bool is_best = false;
};

struct TrainResult {
  std::vector<EpochLogRow> log;
  double best_val_psnr = -1e300;
  int best_epoch = 0;
};

inline void write_epoch_log(const std::vector<EpochLogRow>& log,
                            const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write epoch log: " + path.string());
  f << "epoch,train_loss,val_psnr,is_best\n";
  for (const auto& r : log)
    f << r.epoch << ',' << std::setprecision(17) << r.train_loss << ',' << r.val_psnr << ','
      << (r.is_best ? 1 : 0) << "\n";
}

// Mean PSNR of the fused outputs over the validation set, eval-mode forward.
template <typename T>
double validation_psnr(UnfoldedModel<T>& model, const std::vector<FusionSample<T>>& val) {
  if (val.empty()) throw ContractViolation("validation: empty split");
  double acc = 0;
  for (const auto& smp : val) acc += psnr(model.fuse(smp.lowres, smp.pan), smp.gt);
  return acc / static_cast<double>(val.size());
}

namespace detail {

inline void shuffle_indices(std::vector<int>& idx, CounterRng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
}

// Shared epoch loop for the main phase and the post-processing fine-tune.
template <typename T>
TrainResult run_epochs(UnfoldedModel<T>& model, const std::vector<FusionSample<T>>& train_set,
                       const std::vector<FusionSample<T>>& val_set, const TrainConfig& cfg,
                       int epochs, bool post_only, const std::filesystem::path& ckpt_dir,
                       double initial_best) {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw ContractViolation("train: empty train or validation split");
  std::vector<Param<T>*> params = model.params();
  AdamState<T> adam = AdamState<T>::init(params, static_cast<T>(cfg.lr));
  CounterRng rng(cfg.seed ^ 0x7261696eull);

  TrainResult res;
  res.best_val_psnr = initial_best;
  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    shuffle_indices(order, rng);
    double loss_sum = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
      std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch));
      for (Param<T>* p : params) p->zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const auto& smp = train_set[static_cast<std::size_t>(order[k])];
        Tape<T> tp;
        double lv;
        try {
          StageTrace<T> tr = model.forward(tp, smp.lowres, smp.pan, /*train=*/true);
          Var<T> loss = post_only ? l1_loss(tr.u_out, tp.constant(smp.gt))
                                  : loss_unfolded(tp, tr, smp.gt, static_cast<T>(cfg.alpha));
          lv = static_cast<double>(loss.value()[0]);
          if (std::isfinite(lv)) tp.backward(loss);
        } catch (const NumericalError& e) {
          lv = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(lv))
          throw TrainingDivergence(
              "train: non-finite loss at epoch " + std::to_string(epoch) +
              "; best checkpoint retained at " + ckpt_dir.string());
        loss_sum += lv;
      }
      T inv = static_cast<T>(1.0 / static_cast<double>(b1 - b0));
      for (Param<T>* p : params)
        if (p->trainable) p->grad.array() *= inv;
      adam_step(params, adam);
    }
    EpochLogRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(train_set.size());
    row.val_psnr = validation_psnr(model, val_set);
    row.is_best = row.val_psnr > res.best_val_psnr;
    if (row.is_best) {
      res.best_val_psnr = row.val_psnr;
      res.best_epoch = epoch;
      save_checkpoint(model, ckpt_dir, CheckpointInfo{epoch, res.best_val_psnr});
    }
    res.log.push_back(row);
  }
  return res;
}

}  // namespace detail

// Main training phase: Adam on the unfolded loss, checkpoint kept at the
// best validation PSNR; the model is left holding the best weights.
template <typename T>
TrainResult train(UnfoldedModel<T>& model, const std::vector<FusionSample<T>>& train_set,
                  const std::vector<FusionSample<T>>& val_set, const TrainConfig& cfg,
                  const std::filesystem::path& ckpt_dir) {
  model.unfreeze_all();
  TrainResult res = detail::run_epochs(model, train_set, val_set, cfg, cfg.epochs,
                                       /*post_only=*/false, ckpt_dir, -1e300);
  if (res.best_epoch > 0) load_checkpoint(model, ckpt_dir);
  return res;
}

// Post-processing fine-tune: only the post MARNet trains, L1 objective. The
// starting weights are saved as the epoch-0 baseline, so selection can never
// end below the pre-finetune validation PSNR.
template <typename T>
TrainResult finetune_post(UnfoldedModel<T>& model, const std::vector<FusionSample<T>>& train_set,
                          const std::vector<FusionSample<T>>& val_set, const TrainConfig& cfg,
                          const std::filesystem::path& ckpt_dir) {
  model.freeze_all_but_post();
  double baseline = validation_psnr(model, val_set);
  save_checkpoint(model, ckpt_dir, CheckpointInfo{0, baseline});
  TrainResult res = detail::run_epochs(model, train_set, val_set, cfg, cfg.finetune_epochs,
                                       /*post_only=*/true, ckpt_dir, baseline);
  res.best_val_psnr = std::max(res.best_val_psnr, baseline);
  load_checkpoint(model, ckpt_dir);
  model.unfreeze_all();
  return res;
}

}  // namespace pansharp
