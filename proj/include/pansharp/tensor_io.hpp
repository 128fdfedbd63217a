#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "pansharp/tensor.hpp"

namespace pansharp {

// ".ten" file: one JSON header line {"shape":[...],"dtype":"f32"|"f64",
// "layout":"row-major"} followed by raw little-endian values. Assumes a
// little-endian host.
template <typename T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() { return "f32"; }
template <>
inline const char* dtype_name<double>() { return "f64"; }

template <typename T>
void save_tensor(const Tensor<T>& t, const std::filesystem::path& path) {
  nlohmann::json hdr;
  hdr["shape"] = t.shape();
  hdr["dtype"] = dtype_name<T>();
  hdr["layout"] = "row-major";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f << hdr.dump() << "\n";
  f.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(T)));
  if (!f) throw IoError("write failed: " + path.string());
}

// Loads any dtype and converts to T; same-dtype round-trips are bit-exact.
template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for read: " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw IoError("missing header line: " + path.string());
  nlohmann::json hdr = nlohmann::json::parse(line, nullptr, false);
  if (hdr.is_discarded() || !hdr.contains("shape") || !hdr.contains("dtype"))
    throw IoError("malformed tensor header: " + path.string());
  Shape shape = hdr["shape"].get<Shape>();
  std::string dtype = hdr["dtype"].get<std::string>();
  long n = shape_numel(shape);

  auto read_raw = [&](auto* dst, long count) {
    using U = std::remove_pointer_t<decltype(dst)>;
    f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * sizeof(U)));
    if (f.gcount() != static_cast<std::streamsize>(count * sizeof(U)))
      throw IoError("truncated tensor data: " + path.string());
  };

  if (dtype == dtype_name<T>()) {
    Tensor<T> t(shape);
    read_raw(t.data(), n);
    return t;
  }
  if (dtype == "f32") {
    Tensor<float> tmp(shape);
    read_raw(tmp.data(), n);
    return tmp.template cast<T>();
  }
  if (dtype == "f64") {
    Tensor<double> tmp(shape);
    read_raw(tmp.data(), n);
    return tmp.template cast<T>();
  }
  throw IoError("unsupported dtype '" + dtype + "' in " + path.string());
}

}  // namespace pansharp
