#pragma once

#include <cmath>
#include <vector>

#include "pansharp/autodiff.hpp"

namespace pansharp {

// Adam with bias correction. Moment slots are parallel to the parameter list
// the state was initialized with; the step counter covers all of them.
template <typename T>
struct AdamState {
  struct Slot {
    Tensor<T> m, v;
  };
  std::vector<Slot> slots;
  long step = 0;
  T lr = static_cast<T>(5e-4);
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);

  static AdamState init(const std::vector<Param<T>*>& params, T lr = static_cast<T>(5e-4)) {
    if (lr <= T(0)) throw ContractViolation("adam: learning rate must be positive");
    AdamState st;
    st.lr = lr;
    for (const Param<T>* p : params)
      st.slots.push_back({Tensor<T>(p->value.shape()), Tensor<T>(p->value.shape())});
    return st;
  }
};

// One update from the gradients currently held in Param::grad. Frozen
// parameters are skipped entirely.
template <typename T>
void adam_step(const std::vector<Param<T>*>& params, AdamState<T>& st) {
  if (params.size() != st.slots.size())
    throw ContractViolation("adam: state initialized for a different parameter list");
  ++st.step;
  double bc1 = 1.0 - std::pow(static_cast<double>(st.beta1), static_cast<double>(st.step));
  double bc2 = 1.0 - std::pow(static_cast<double>(st.beta2), static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param<T>& p = *params[k];
    if (!p.trainable) continue;
    if (!p.grad.all_finite())
      throw TrainingDivergence("adam: non-finite gradient for parameter '" + p.name + "'");
    auto& slot = st.slots[k];
    for (long i = 0; i < p.value.numel(); ++i) {
      T g = p.grad[i];
      slot.m[i] = st.beta1 * slot.m[i] + (T(1) - st.beta1) * g;
      slot.v[i] = st.beta2 * slot.v[i] + (T(1) - st.beta2) * g * g;
      double mhat = slot.m[i] / bc1;
      double vhat = slot.v[i] / bc2;
      p.value[i] -= static_cast<T>(st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
}

}  // namespace pansharp
