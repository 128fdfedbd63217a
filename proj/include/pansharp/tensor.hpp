#pragma once

#include <Eigen/Core>
#include <cmath>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "pansharp/errors.hpp"
#include "pansharp/rng.hpp"

namespace pansharp {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline long shape_numel(const Shape& s) {
  long n = 1;
  for (int e : s) {
    if (e <= 0) throw ContractViolation("tensor: non-positive extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

// Dense N-d array, contiguous with the last axis fastest. Images are
// (C, H, W); conv kernels are (Cout, Cin, kh, kw).
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using Array = Eigen::Array<T, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(Array::Zero(shape_numel(shape_))) {}
  Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
      throw ContractViolation("tensor: data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    t.data_.setConstant(v);
    return t;
  }
  static Tensor scalar(T v) { return full({1}, v); }
  static Tensor of(Shape s, std::initializer_list<T> vals) {
    Tensor t(std::move(s));
    if (static_cast<long>(vals.size()) != t.numel())
      throw ContractViolation("tensor: initializer length mismatch");
    long i = 0;
    for (T v : vals) t.data_[i++] = v;
    return t;
  }
  static Tensor random_normal(Shape s, CounterRng& rng, T stddev = T(1), T mean = T(0)) {
    Tensor t(std::move(s));
    for (long i = 0; i < t.numel(); ++i)
      t.data_[i] = mean + stddev * static_cast<T>(rng.normal());
    return t;
  }
  static Tensor random_uniform(Shape s, CounterRng& rng, T lo = T(0), T hi = T(1)) {
    Tensor t(std::move(s));
    for (long i = 0; i < t.numel(); ++i)
      t.data_[i] = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  long numel() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }
  bool shape_equals(const Shape& s) const { return shape_ == s; }
  bool shape_equals(const Tensor& o) const { return shape_ == o.shape_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  Array& array() { return data_; }
  const Array& array() const { return data_; }

  T& operator[](long i) { return data_[i]; }
  T operator[](long i) const { return data_[i]; }

  // (C, H, W) accessors
  T& at(int c, int y, int x) {
    return data_[(static_cast<long>(c) * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<long>(c) * shape_[1] + y) * shape_[2] + x];
  }
  // (Cout, Cin, kh, kw) accessors
  T& at4(int o, int c, int y, int x) {
    return data_[((static_cast<long>(o) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  const T& at4(int o, int c, int y, int x) const {
    return data_[((static_cast<long>(o) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (long i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != numel())
      throw ContractViolation("reshape: numel mismatch " + shape_str(shape_) + " -> " + shape_str(s));
    return Tensor(std::move(s), data_);
  }

  bool all_finite() const {
    for (long i = 0; i < numel(); ++i)
      if (!std::isfinite(static_cast<double>(data_[i]))) return false;
    return true;
  }

 private:
  Shape shape_;
  Array data_;
};

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& want, const char* op) {
  if (!t.shape_equals(want))
    throw ContractViolation(std::string(op) + ": expected shape " + shape_str(want) +
                            ", got " + shape_str(t.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.shape_equals(b))
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                            " vs " + shape_str(b.shape()));
}

template <typename T>
void require_rank(const Tensor<T>& t, int r, const char* op) {
  if (t.rank() != r)
    throw ContractViolation(std::string(op) + ": expected rank " + std::to_string(r) +
                            " tensor, got shape " + shape_str(t.shape()));
}

}  // namespace pansharp
