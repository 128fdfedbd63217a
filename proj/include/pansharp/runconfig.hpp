#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "pansharp/datasynth.hpp"
#include "pansharp/model.hpp"
#include "pansharp/solver.hpp"
#include "pansharp/training.hpp"

namespace pansharp {

// JSON-backed run configuration. Precedence, applied by the CLI:
// flag > UNFOLD_PANSHARP_SEED (seed only) > config file > defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  EnergyParams energy;
  int solve_iters = 2000;
  double solve_tol = 1e-9;
  int total_samples = 20;  // gen-data --samples

  void validate() const {
    dataset.validate();
    model.validate();
    train.validate();
    energy.validate();
    if (solve_iters < 1) throw ConfigError("config: solve.iters must be >= 1");
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + where + it.key() + "'");
}

template <typename V>
void read_key(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: bad value type for '" + where + key + "'");
  }
}

}  // namespace detail

inline void apply_config_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  detail::reject_unknown(j, {"seed", "dataset", "model", "train", "energy", "solve"}, "");
  detail::read_key(j, "seed", c.seed, "");

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::reject_unknown(d, {"samples", "channels", "patch", "s", "sigma", "alpha"},
                           "dataset.");
    detail::read_key(d, "samples", c.total_samples, "dataset.");
    detail::read_key(d, "channels", c.dataset.channels, "dataset.");
    detail::read_key(d, "patch", c.dataset.patch, "dataset.");
    detail::read_key(d, "s", c.dataset.s, "dataset.");
    detail::read_key(d, "sigma", c.dataset.sigma, "dataset.");
    detail::read_key(d, "alpha", c.dataset.alpha, "dataset.");
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::reject_unknown(m,
                           {"stages", "variant", "feat", "radius", "embed", "patch_kernel",
                            "lambda0", "beta0", "tau0"},
                           "model.");
    detail::read_key(m, "stages", c.model.stages, "model.");
    detail::read_key(m, "variant", c.model.variant, "model.");
    detail::read_key(m, "feat", c.model.attention.feat, "model.");
    detail::read_key(m, "radius", c.model.attention.radius, "model.");
    detail::read_key(m, "embed", c.model.attention.embed, "model.");
    detail::read_key(m, "patch_kernel", c.model.attention.patch_kernel, "model.");
    detail::read_key(m, "lambda0", c.model.lambda0, "model.");
    detail::read_key(m, "beta0", c.model.beta0, "model.");
    detail::read_key(m, "tau0", c.model.tau0, "model.");
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown(t, {"epochs", "finetune_epochs", "lr", "alpha", "batch"}, "train.");
    detail::read_key(t, "epochs", c.train.epochs, "train.");
    detail::read_key(t, "finetune_epochs", c.train.finetune_epochs, "train.");
    detail::read_key(t, "lr", c.train.lr, "train.");
    detail::read_key(t, "alpha", c.train.alpha, "train.");
    detail::read_key(t, "batch", c.train.batch, "train.");
  }
  if (j.contains("energy")) {
    const auto& e = j.at("energy");
    detail::reject_unknown(e, {"lambda", "beta", "mu", "sigma_b"}, "energy.");
    detail::read_key(e, "lambda", c.energy.lambda, "energy.");
    detail::read_key(e, "beta", c.energy.beta, "energy.");
    detail::read_key(e, "mu", c.energy.mu, "energy.");
    detail::read_key(e, "sigma_b", c.energy.sigma_b, "energy.");
  }
  if (j.contains("solve")) {
    const auto& s = j.at("solve");
    detail::reject_unknown(s, {"iters", "tol"}, "solve.");
    detail::read_key(s, "iters", c.solve_iters, "solve.");
    detail::read_key(s, "tol", c.solve_tol, "solve.");
  }
}

inline void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config file: " + path.string());
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: malformed JSON in " + path.string());
  apply_config_json(c, j);
}

// UNFOLD_PANSHARP_SEED overrides the config-file seed (CLI flags still win).
inline bool apply_env_seed(RunConfig& c) {
  const char* env = std::getenv("UNFOLD_PANSHARP_SEED");
  if (!env || !*env) return false;
  char* end = nullptr;
  unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0')
    throw ConfigError("UNFOLD_PANSHARP_SEED is not an unsigned integer");
  c.seed = static_cast<std::uint64_t>(v);
  return true;
}

}  // namespace pansharp
