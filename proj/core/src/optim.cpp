#include "blgcn/optim.hpp"

#include <cmath>

#include "blgcn/errors.hpp"

namespace blgcn {

void adam_step(std::span<const ParamSlot> params, AdamState& state, const AdamConfig& config,
               double lr) {
  if (!(lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& p : params) {
      state.m.emplace_back(p.value->rows(), p.value->cols());
      state.v.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: parameter count changed between steps");
  }

  ++state.t;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));

  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& w = *params[k].value;
    Matrix& m = state.m[k];
    Matrix& v = state.v[k];
    require_same_shape(w, m, "adam_step");
    const Matrix* g = params[k].grad;
    const bool has_grad = g != nullptr && !g->empty();
    if (has_grad) require_same_shape(w, *g, "adam_step");
    const double decay = params[k].decay ? config.weight_decay : 0.0;

    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has_grad ? (*g)[i] : 0.0;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + config.eps) + decay * w[i]);
    }
  }
}

double MultiStepLr::at(int epoch) const {
  if (epoch < 0) throw ContractError("MultiStepLr::at: negative epoch");
  double lr = initial;
  for (int m : milestones)
    if (m <= epoch) lr *= gamma;
  return lr;
}

}  // namespace blgcn
