#pragma once

#include <cstddef>

#include "blgcn/autograd.hpp"
#include "blgcn/matrix.hpp"
#include "blgcn/rng.hpp"

namespace blgcn {

struct GaussianPrior {
  double mean = 0.0;
  double std = 1.0;
};

/// One concrete draw of a Bayesian layer's weights. The unit noise is kept
/// so the draw stays a differentiable function of (mu, rho).
struct WeightSample {
  Var weight;  // in × out
  Var bias;    // 1 × out
  Matrix eps_weight;
  Matrix eps_bias;
};

/// Linear layer whose weights and biases are independent Gaussians
/// N(mu, sigma^2) with sigma = log(1 + e^rho), sampled by reparameterisation
/// w = mu + sigma ⊙ eps, eps ~ N(0, 1).
class BayesianLinear {
 public:
  BayesianLinear() = default;
  // mu_w ~ U(-l, l) with l = sqrt(6 / (in + out)); mu_b = 0; rho = rho_init.
  BayesianLinear(std::size_t in, std::size_t out, Rng& rng, double rho_init = -5.0,
                 GaussianPrior prior = {});

  std::size_t in_features() const { return mu_weight.rows(); }
  std::size_t out_features() const { return mu_weight.cols(); }

  WeightSample sample(Rng& rng) const;
  // Draw with caller-supplied noise; zero noise returns exactly mu.
  WeightSample sample_with(Matrix eps_weight, Matrix eps_bias) const;

  // x · W + b for one draw.
  static Var apply(const Var& x, const WeightSample& s);

  Var mu_weight;
  Var rho_weight;
  Var mu_bias;
  Var rho_bias;
  GaussianPrior prior;
};

/// Sum over every weight and bias of log N(w; mu, sigma^2).
Var log_q(const BayesianLinear& layer, const WeightSample& s);
/// Sum over every weight and bias of log N(w; prior.mean, prior.std^2).
Var log_p(const BayesianLinear& layer, const WeightSample& s);

/// kl_scale * (log_q - log_p) + nll.
Var bayes_loss(const Var& log_q_sum, const Var& log_p_sum, const Var& nll, double kl_scale);
double bayes_loss(double log_q_sum, double log_p_sum, double nll, double kl_scale);

double gaussian_log_density(double x, double mean, double std);

}  // namespace blgcn
