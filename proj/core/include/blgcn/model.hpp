#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "blgcn/autograd.hpp"
#include "blgcn/bayes_layer.hpp"
#include "blgcn/checkpoint.hpp"
#include "blgcn/optim.hpp"
#include "blgcn/rng.hpp"

namespace blgcn {

struct ModelConfig {
  std::size_t in_dim = 0;    // feature width (bands + 1)
  std::size_t hidden = 128;  // feature-extraction width
  std::size_t hidden2 = 64;  // first Bayesian graph layer width
  int classes = 0;
  double dropout = 0.2;
  double rho_init = -5.0;
  GaussianPrior prior;
  // When false the adjacency operator is replaced by the identity.
  bool graph_conv = true;
  std::uint64_t seed = 0;  // initialisation
};

enum class Mode { Train, Eval };

struct DenseLayer {
  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Rng& rng);
  Var apply(const Var& x) const { return add_row_broadcast(matmul(x, weight), bias); }

  Var weight;
  Var bias;
};

struct ForwardPass {
  Var log_probs;  // n × classes
  Var log_q;      // 1×1, summed over both Bayesian layers
  Var log_p;      // 1×1
  // Smallest |pre-activation| fed to any ReLU. Finite-difference checks use
  // it to stay clear of kinks.
  double relu_margin = 0.0;
};

/// Two dense ReLU layers (feature extraction, dropout on their output),
/// then two Bayesian graph convolutions:
///   H1  = ReLU(Â · H0 · W1 + b1)
///   out = log_softmax(Â · H1 · W2 + b2)
/// with W1, b1, W2, b2 drawn afresh for every forward pass.
class BlgcnModel {
 public:
  BlgcnModel() = default;
  explicit BlgcnModel(const ModelConfig& config);

  // Caches Â (already renormalised). Ignored entries when graph_conv is off,
  // but the node count is still recorded for shape checks.
  void set_graph(Matrix normalized_adjacency);
  std::size_t graph_nodes() const noexcept { return nodes_; }

  ForwardPass forward(const Matrix& features, Rng& rng, Mode mode) const;

  const ModelConfig& config() const noexcept { return config_; }

  // Optimizer view; rho tensors are excluded from weight decay.
  std::vector<ParamSlot> parameters();
  std::vector<Var> parameter_vars() const;
  std::vector<std::pair<std::string, Var>> named_parameters() const;
  void zero_grad();

  Checkpoint to_checkpoint() const;
  static BlgcnModel from_checkpoint(const Checkpoint& ckpt);
  // Copies matching tensors into this model's parameters.
  void load_parameters(const Checkpoint& ckpt);

  // Sets every rho to `value` (e.g. -40 for a collapsed posterior).
  void set_rho(double value);

  const BayesianLinear& bayes1() const noexcept { return bgc1_; }
  const BayesianLinear& bayes2() const noexcept { return bgc2_; }

 private:
  ModelConfig config_;
  DenseLayer fc1_, fc2_;
  BayesianLinear bgc1_, bgc2_;
  Var adjacency_;
  std::size_t nodes_ = 0;
};

/// -sum over `nodes` of log_probs[j][labels[j] - 1]. Labels are class ids
/// 1..C indexed by node.
Var nll(const Var& log_probs, std::span<const int> labels, std::span<const std::size_t> nodes);

/// Class id (1-based) of the largest entry in each row.
std::vector<int> argmax_classes(const Matrix& scores);

double accuracy(std::span<const int> predicted, std::span<const int> labels,
                std::span<const std::size_t> nodes);

struct McPrediction {
  Matrix mean_probs;                 // n × classes
  std::vector<double> run_accuracy;  // one per pass, empty when no labels given
};

/// S stochastic eval-mode passes; pass s uses Rng::stream(root_seed, s).
/// Runs may execute on several threads; results are merged in run order so
/// the output does not depend on `workers` (0 = hardware concurrency).
McPrediction predict_mc(const BlgcnModel& model, const Matrix& features, int samples,
                        std::uint64_t root_seed, std::span<const int> labels = {},
                        std::span<const std::size_t> nodes = {}, unsigned workers = 0);

}  // namespace blgcn
