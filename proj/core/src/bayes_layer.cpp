#include "blgcn/bayes_layer.hpp"

#include <cmath>

#include "blgcn/errors.hpp"

namespace blgcn {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)

Matrix normal_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

Var draw(const Var& mu, const Var& rho, const Matrix& eps) {
  return add(mu, hadamard(softplus(rho), Var::constant(eps)));
}

// sum log N(w; mu, softplus(rho)^2)
Var posterior_log_density(const Var& w, const Var& mu, const Var& rho) {
  const Var sigma = softplus(rho);
  const Var z = div(sub(w, mu), sigma);
  const double count = static_cast<double>(w.value().size());
  return add_scalar(sub(scale(sum(square(z)), -0.5), sum(log(sigma))), -kHalfLog2Pi * count);
}

Var prior_log_density(const Var& w, const GaussianPrior& prior) {
  const double count = static_cast<double>(w.value().size());
  const Var z = scale(add_scalar(w, -prior.mean), 1.0 / prior.std);
  return add_scalar(scale(sum(square(z)), -0.5), -(kHalfLog2Pi + std::log(prior.std)) * count);
}

}  // namespace

BayesianLinear::BayesianLinear(std::size_t in, std::size_t out, Rng& rng, double rho_init,
                               GaussianPrior prior_)
    : prior(prior_) {
  if (in == 0 || out == 0) throw ContractError("BayesianLinear: zero-sized layer");
  if (!(prior.std > 0.0)) throw ContractError("BayesianLinear: prior std must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix mu(in, out);
  for (double& v : mu.data()) v = rng.uniform(-limit, limit);
  mu_weight = Var::parameter(std::move(mu));
  rho_weight = Var::parameter(Matrix(in, out, rho_init));
  mu_bias = Var::parameter(Matrix(1, out));
  rho_bias = Var::parameter(Matrix(1, out, rho_init));
}

WeightSample BayesianLinear::sample(Rng& rng) const {
  Matrix ew = normal_matrix(in_features(), out_features(), rng);
  Matrix eb = normal_matrix(1, out_features(), rng);
  return sample_with(std::move(ew), std::move(eb));
}

WeightSample BayesianLinear::sample_with(Matrix eps_weight, Matrix eps_bias) const {
  require_same_shape(eps_weight, mu_weight.value(), "BayesianLinear::sample_with");
  require_same_shape(eps_bias, mu_bias.value(), "BayesianLinear::sample_with");
  WeightSample s;
  s.weight = draw(mu_weight, rho_weight, eps_weight);
  s.bias = draw(mu_bias, rho_bias, eps_bias);
  s.eps_weight = std::move(eps_weight);
  s.eps_bias = std::move(eps_bias);
  return s;
}

Var BayesianLinear::apply(const Var& x, const WeightSample& s) {
  return add_row_broadcast(matmul(x, s.weight), s.bias);
}

Var log_q(const BayesianLinear& layer, const WeightSample& s) {
  return add(posterior_log_density(s.weight, layer.mu_weight, layer.rho_weight),
             posterior_log_density(s.bias, layer.mu_bias, layer.rho_bias));
}

Var log_p(const BayesianLinear& layer, const WeightSample& s) {
  return add(prior_log_density(s.weight, layer.prior), prior_log_density(s.bias, layer.prior));
}

Var bayes_loss(const Var& log_q_sum, const Var& log_p_sum, const Var& nll, double kl_scale) {
  return add(scale(sub(log_q_sum, log_p_sum), kl_scale), nll);
}

double bayes_loss(double log_q_sum, double log_p_sum, double nll, double kl_scale) {
  if (nll < 0.0) throw ContractError("bayes_loss: nll must be non-negative");
  return kl_scale * (log_q_sum - log_p_sum) + nll;
}

double gaussian_log_density(double x, double mean, double std) {
  const double z = (x - mean) / std;
  return -kHalfLog2Pi - std::log(std) - 0.5 * z * z;
}

}  // namespace blgcn
