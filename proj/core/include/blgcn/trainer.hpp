#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blgcn/hsi_io.hpp"
#include "blgcn/model.hpp"
#include "blgcn/optim.hpp"
#include "blgcn/superpixel.hpp"

namespace blgcn {

struct ConfidenceInterval {
  double mean = 0.0;
  double standard_error = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double z = 1.96;
};

/// mean ± |z|·SE with SE = sample std (n-1) / sqrt(n). Needs >= 2 samples.
ConfidenceInterval confidence_interval(std::span<const double> samples, double z = 1.96);

struct PseudoLabel {
  std::size_t node;
  int label;  // 1-based class id
};

/// Unlabeled node j gets argmax_c p[j][c] when max_c p[j][c] >= threshold.
std::vector<PseudoLabel> pseudo_label(const Matrix& mean_probs,
                                      std::span<const std::size_t> unlabeled,
                                      double threshold = 0.9);

struct TrainConfig {
  int max_epochs = 4000;
  double weight_decay = 5e-4;
  MultiStepLr schedule{};
  AdamConfig adam{};
  double kl_scale = 1.0;
  int train_samples = 1;

  double pseudo_threshold = 0.9;
  int pseudo_start = 500;  // first refresh epoch
  int pseudo_every = 100;  // refresh cadence after that
  int pseudo_samples = 5;

  bool dynamic_control = true;
  double t1 = 0.90;  // single-pass validation gate
  double t2 = 0.95;  // CI upper-bound stop
  double z = 1.96;
  int eval_samples = 30;
  // 0: overall validation accuracy feeds the gates; c > 0: accuracy on
  // validation nodes of class c only.
  int gate_class = 0;

  std::uint64_t seed = 0;
  unsigned workers = 0;  // passes to predict_mc
};

enum class StopReason { Dynamic, Budget };
const char* stop_reason_name(StopReason r) noexcept;

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double val_accuracy = 0.0;
  bool passed_t1 = false;
  bool passed_t2 = false;
  std::optional<ConfidenceInterval> ci;
  std::size_t pseudo_labels = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int stop_epoch = -1;
  StopReason stop_reason = StopReason::Budget;
};

// CSV with header "epoch,lr,loss,val_acc,ci_a,ci_mu,ci_b"; the CI columns
// are left empty on epochs without a Monte-Carlo evaluation.
void write_history_csv(std::ostream& out, const TrainHistory& history);

/// Full-graph training with the two-threshold stopping rule. The model must
/// already have the graph's renormalised adjacency set. On a non-finite loss
/// the parameters are restored to the last finite epoch and NumericError is
/// thrown.
TrainHistory train(BlgcnModel& model, const SuperpixelGraph& graph,
                   const SplitAssignment& split, const TrainConfig& config);

struct Evaluation {
  std::vector<int> predictions;      // per node, 1-based
  std::vector<double> run_accuracy;  // on unlabeled nodes
  ConfidenceInterval ci;
  Matrix mean_probs;
};

Evaluation evaluate(const BlgcnModel& model, const SuperpixelGraph& graph,
                    const SplitAssignment& split, int samples, std::uint64_t seed,
                    double z = 1.96, unsigned workers = 0);

}  // namespace blgcn
