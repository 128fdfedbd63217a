#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "pansharp/model.hpp"
#include "pansharp/tensor_io.hpp"

namespace pansharp {

inline constexpr const char* kCheckpointFormat = "ckpt-v1";

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["channels"] = c.channels;
  j["s"] = c.s;
  j["stages"] = c.stages;
  j["variant"] = c.variant;
  j["radius"] = c.attention.radius;
  j["embed"] = c.attention.embed;
  j["patch_kernel"] = c.attention.patch_kernel;
  j["feat"] = c.attention.feat;
  j["lambda0"] = c.lambda0;
  j["beta0"] = c.beta0;
  j["tau0"] = c.tau0;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.channels = j.at("channels").get<int>();
  c.s = j.at("s").get<int>();
  c.stages = j.at("stages").get<int>();
  c.variant = j.at("variant").get<int>();
  c.attention.radius = j.at("radius").get<int>();
  c.attention.embed = j.at("embed").get<int>();
  c.attention.patch_kernel = j.at("patch_kernel").get<int>();
  c.attention.feat = j.at("feat").get<int>();
  c.lambda0 = j.at("lambda0").get<double>();
  c.beta0 = j.at("beta0").get<double>();
  c.tau0 = j.at("tau0").get<double>();
  return c;
}

// FNV-1a over the canonical (key-sorted) config dump.
inline std::string model_config_hash(const ModelConfig& c) {
  std::string s = model_config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct CheckpointInfo {
  int epoch = 0;
  double best_val_psnr = 0;
};

template <typename T>
void save_checkpoint(UnfoldedModel<T>& model, const std::filesystem::path& dir,
                     const CheckpointInfo& info) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "params", ec);
  if (ec) throw IoError("cannot create checkpoint dir: " + dir.string());
  for (Param<T>* p : model.params()) save_tensor(p->value, dir / "params" / (p->name + ".ten"));
  for (auto& [name, buf] : model.buffers()) save_tensor(*buf, dir / "params" / (name + ".ten"));

  auto sv = model.scalar_values();
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["config"] = model_config_to_json(model.cfg);
  j["config_hash"] = model_config_hash(model.cfg);
  j["stages"] = model.cfg.stages;
  j["variant"] = model.cfg.variant;
  j["epoch"] = info.epoch;
  j["best_val_psnr"] = info.best_val_psnr;
  j["scalars"] = {{"lambda", sv[0]}, {"beta", sv[1]}, {"tau_p", sv[2]}, {"tau_d", sv[3]}};
  std::ofstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot write checkpoint manifest: " + dir.string());
  f << j.dump(2) << "\n";
}

inline nlohmann::json load_checkpoint_manifest(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot read checkpoint manifest: " + (dir / "manifest.json").string());
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw IoError("malformed checkpoint manifest in " + dir.string());
  return j;
}

// Loads weights into a model of matching config; rejects hash mismatches.
template <typename T>
CheckpointInfo load_checkpoint(UnfoldedModel<T>& model, const std::filesystem::path& dir) {
  nlohmann::json j = load_checkpoint_manifest(dir);
  if (j.value("format", "") != kCheckpointFormat)
    throw VersionError("unsupported checkpoint format in " + dir.string());
  std::string want = model_config_hash(model.cfg);
  std::string got = j.value("config_hash", "");
  if (got != want)
    throw VersionError("checkpoint config hash " + got + " does not match model config hash " +
                       want);
  for (Param<T>* p : model.params()) {
    Tensor<T> v = load_tensor<T>(dir / "params" / (p->name + ".ten"));
    if (!v.shape_equals(p->value.shape()))
      throw VersionError("checkpoint tensor '" + p->name + "' has shape " +
                         shape_str(v.shape()) + ", model expects " +
                         shape_str(p->value.shape()));
    p->value = std::move(v);
    p->zero_grad();
  }
  for (auto& [name, buf] : model.buffers()) {
    Tensor<T> v = load_tensor<T>(dir / "params" / (name + ".ten"));
    if (!v.shape_equals(buf->shape()))
      throw VersionError("checkpoint buffer '" + name + "' shape mismatch");
    *buf = std::move(v);
  }
  CheckpointInfo info;
  info.epoch = j.value("epoch", 0);
  info.best_val_psnr = j.value("best_val_psnr", 0.0);
  return info;
}

// Builds the model described by a checkpoint's own manifest.
template <typename T>
UnfoldedModel<T> model_from_checkpoint(const std::filesystem::path& dir,
                                       CheckpointInfo* info = nullptr) {
  nlohmann::json j = load_checkpoint_manifest(dir);
  ModelConfig cfg = model_config_from_json(j.at("config"));
  UnfoldedModel<T> model(cfg, /*seed=*/0);
  CheckpointInfo ci = load_checkpoint(model, dir);
  if (info) *info = ci;
  return model;
}

}  // namespace pansharp
