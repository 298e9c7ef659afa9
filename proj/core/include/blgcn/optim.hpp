#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "blgcn/matrix.hpp"

namespace blgcn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled decay: w <- w - lr * weight_decay * w, applied only to slots
  // flagged `decay`.
  double weight_decay = 0.0;
};

/// One trainable tensor as seen by the optimizer. An empty `grad` counts as
/// zero (the parameter did not take part in the last backward pass).
struct ParamSlot {
  Matrix* value;
  const Matrix* grad;
  bool decay = true;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t t = 0;
};

/// Bias-corrected Adam step over all slots. The state is lazily shaped on
/// the first call and must be reused with the same slot order afterwards.
void adam_step(std::span<const ParamSlot> params, AdamState& state, const AdamConfig& config,
               double lr);

/// Multistep decay: lr = initial * gamma^(number of milestones <= epoch).
struct MultiStepLr {
  double initial = 1e-3;
  double gamma = 0.9;
  std::vector<int> milestones{1500, 2500, 3500};

  double at(int epoch) const;
};

}  // namespace blgcn
