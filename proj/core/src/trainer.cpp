#include "blgcn/trainer.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "blgcn/errors.hpp"
#include "blgcn/log.hpp"

namespace blgcn {
namespace {

// Stream namespaces so the training, validation and Monte-Carlo draws of one
// run never share a random sequence.
constexpr std::uint64_t kTrainStream = 0x7472ULL;
constexpr std::uint64_t kValStream = 0x76616cULL;
constexpr std::uint64_t kMcStream = 0x6d63ULL;
constexpr std::uint64_t kPseudoStream = 0x70736cULL;

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ (tag << 40)) + index);
}

bool parameters_finite(const BlgcnModel& model) {
  for (const auto& v : model.parameter_vars())
    if (!v.value().all_finite()) return false;
  return true;
}

}  // namespace

ConfidenceInterval confidence_interval(std::span<const double> samples, double z) {
  if (samples.size() < 2) throw ContractError("confidence_interval: need at least 2 samples");
  const double n = static_cast<double>(samples.size());
  // Shifted by the first sample so identical samples give an exact mean and
  // a zero-width interval.
  const double shift = samples.front();
  double offset = 0.0;
  for (double s : samples) offset += s - shift;
  const double mean = shift + offset / n;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  ConfidenceInterval ci;
  ci.mean = mean;
  ci.standard_error = sd / std::sqrt(n);
  ci.z = z;
  ci.lower = mean - std::abs(z) * ci.standard_error;
  ci.upper = mean + std::abs(z) * ci.standard_error;
  return ci;
}

std::vector<PseudoLabel> pseudo_label(const Matrix& mean_probs,
                                      std::span<const std::size_t> unlabeled, double threshold) {
  if (!(threshold > 0.5 && threshold <= 1.0)) {
    throw ContractError("pseudo_label: threshold must lie in (0.5, 1]");
  }
  std::vector<PseudoLabel> out;
  for (std::size_t j : unlabeled) {
    const auto row = mean_probs.row(j);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    if (row[best] >= threshold) out.push_back({j, static_cast<int>(best) + 1});
  }
  return out;
}

const char* stop_reason_name(StopReason r) noexcept {
  return r == StopReason::Dynamic ? "dynamic" : "budget";
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  const auto old_precision = out.precision(10);
  out << "epoch,lr,loss,val_acc,ci_a,ci_mu,ci_b\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << e.lr << ',' << e.loss << ',' << e.val_accuracy;
    if (e.ci) out << ',' << e.ci->lower << ',' << e.ci->mean << ',' << e.ci->upper;
    out << '\n';
  }
  out.precision(old_precision);
}

TrainHistory train(BlgcnModel& model, const SuperpixelGraph& graph,
                   const SplitAssignment& split, const TrainConfig& config) {
  if (split.flags.size() != graph.nodes()) {
    throw ContractError("train: split covers " + std::to_string(split.flags.size()) +
                        " nodes, graph has " + std::to_string(graph.nodes()));
  }
  if (config.t1 > config.t2) throw ContractError("train: T1 must not exceed T2");
  if (!(config.z > 0.0)) throw ContractError("train: z must be positive");
  if (config.train_samples < 1) throw ContractError("train: train_samples must be >= 1");

  const Matrix& features = graph.features;
  const std::vector<std::size_t> labeled = split.labeled_nodes();
  const std::vector<std::size_t> unlabeled = split.unlabeled_nodes();
  std::vector<std::size_t> gate_nodes;
  for (std::size_t j : unlabeled)
    if (config.gate_class == 0 || graph.labels[j] == config.gate_class) gate_nodes.push_back(j);

  std::vector<int> targets = graph.labels;
  std::vector<std::size_t> train_nodes = labeled;

  AdamConfig adam = config.adam;
  adam.weight_decay = config.weight_decay;
  AdamState state;
  Checkpoint last_good = model.to_checkpoint();

  TrainHistory history;
  std::size_t pseudo_count = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = config.schedule.at(epoch);

    if (config.pseudo_every > 0 && epoch >= config.pseudo_start &&
        (epoch - config.pseudo_start) % config.pseudo_every == 0) {
      const McPrediction mc =
          predict_mc(model, features, config.pseudo_samples,
                     derive(config.seed, kPseudoStream, static_cast<std::uint64_t>(epoch)), {}, {},
                     config.workers);
      // Recomputed from scratch on every refresh. Only unlabeled nodes are
      // candidates, so ground-truth training labels are never overridden.
      targets = graph.labels;
      train_nodes = labeled;
      const auto pseudo = pseudo_label(mc.mean_probs, unlabeled, config.pseudo_threshold);
      for (const auto& p : pseudo) {
        targets[p.node] = p.label;
        train_nodes.push_back(p.node);
      }
      pseudo_count = pseudo.size();
    }
    rec.pseudo_labels = pseudo_count;

    model.zero_grad();
    double loss_value = 0.0;
    try {
      for (int s = 0; s < config.train_samples; ++s) {
        Rng rng = Rng::stream(
            derive(config.seed, kTrainStream, static_cast<std::uint64_t>(epoch)),
            static_cast<std::uint64_t>(s));
        const ForwardPass fp = model.forward(features, rng, Mode::Train);
        Var loss = bayes_loss(fp.log_q, fp.log_p, nll(fp.log_probs, targets, train_nodes),
                              config.kl_scale);
        if (config.train_samples > 1) loss = scale(loss, 1.0 / config.train_samples);
        loss_value += loss.item();
        backward(loss);
      }
      if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
      auto slots = model.parameters();
      adam_step(slots, state, adam, rec.lr);
      if (!parameters_finite(model)) throw NumericError("parameters became non-finite");
    } catch (const NumericError& e) {
      model.load_parameters(last_good);
      throw NumericError("training aborted at epoch " + std::to_string(epoch) + ": " + e.what() +
                         "; parameters restored to the last finite epoch");
    }
    last_good = model.to_checkpoint();
    rec.loss = loss_value;

    {
      NoGradGuard no_grad;
      Rng rng(derive(config.seed, kValStream, static_cast<std::uint64_t>(epoch)));
      const Matrix lp = model.forward(features, rng, Mode::Eval).log_probs.value();
      rec.val_accuracy = accuracy(argmax_classes(lp), graph.labels, gate_nodes);
    }

    rec.passed_t1 = rec.val_accuracy >= config.t1;
    bool stop = false;
    if (config.dynamic_control && rec.passed_t1) {
      const McPrediction mc =
          predict_mc(model, features, config.eval_samples,
                     derive(config.seed, kMcStream, static_cast<std::uint64_t>(epoch)),
                     graph.labels, gate_nodes, config.workers);
      rec.ci = confidence_interval(mc.run_accuracy, config.z);
      rec.passed_t2 = rec.ci->upper >= config.t2;
      stop = rec.passed_t2;
    }
    history.epochs.push_back(rec);
    if (stop) {
      history.stop_reason = StopReason::Dynamic;
      history.stop_epoch = epoch;
      logging::info("dynamic stop at epoch " + std::to_string(epoch));
      return history;
    }
  }
  history.stop_reason = StopReason::Budget;
  history.stop_epoch = history.epochs.empty() ? -1 : history.epochs.back().epoch;
  return history;
}

Evaluation evaluate(const BlgcnModel& model, const SuperpixelGraph& graph,
                    const SplitAssignment& split, int samples, std::uint64_t seed, double z,
                    unsigned workers) {
  const std::vector<std::size_t> unlabeled = split.unlabeled_nodes();
  McPrediction mc =
      predict_mc(model, graph.features, samples, seed, graph.labels, unlabeled, workers);
  Evaluation ev;
  ev.predictions = argmax_classes(mc.mean_probs);
  ev.run_accuracy = std::move(mc.run_accuracy);
  if (ev.run_accuracy.size() >= 2) {
    ev.ci = confidence_interval(ev.run_accuracy, z);
  } else {
    const double m = ev.run_accuracy.empty() ? 0.0 : ev.run_accuracy.front();
    ev.ci = {m, 0.0, m, m, z};
  }
  ev.mean_probs = std::move(mc.mean_probs);
  return ev;
}

}  // namespace blgcn
