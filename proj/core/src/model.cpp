#include "blgcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <thread>

#include "blgcn/errors.hpp"

namespace blgcn {
namespace {

double min_abs(const Matrix& m) {
  double best = std::numeric_limits<double>::infinity();
  for (double v : m.data()) best = std::min(best, std::abs(v));
  return best;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s) { return std::stod(s); }

}  // namespace

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(in, out);
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  weight = Var::parameter(std::move(w));
  bias = Var::parameter(Matrix(1, out));
}

BlgcnModel::BlgcnModel(const ModelConfig& config) : config_(config) {
  if (config.in_dim == 0 || config.hidden == 0 || config.hidden2 == 0 || config.classes < 1) {
    throw ContractError("BlgcnModel: layer widths and class count must be positive");
  }
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
    throw ContractError("BlgcnModel: dropout must lie in [0, 1)");
  }
  Rng rng(config.seed);
  fc1_ = DenseLayer(config.in_dim, config.hidden, rng);
  fc2_ = DenseLayer(config.hidden, config.hidden, rng);
  const auto classes = static_cast<std::size_t>(config.classes);
  bgc1_ = BayesianLinear(config.hidden, config.hidden2, rng, config.rho_init, config.prior);
  bgc2_ = BayesianLinear(config.hidden2, classes, rng, config.rho_init, config.prior);
}

void BlgcnModel::set_graph(Matrix normalized_adjacency) {
  if (normalized_adjacency.rows() != normalized_adjacency.cols()) {
    throw DimensionError("set_graph: adjacency must be square, got " +
                         normalized_adjacency.shape_string());
  }
  nodes_ = normalized_adjacency.rows();
  adjacency_ = config_.graph_conv ? Var::constant(std::move(normalized_adjacency)) : Var();
}

ForwardPass BlgcnModel::forward(const Matrix& features, Rng& rng, Mode mode) const {
  if (features.cols() != config_.in_dim) {
    throw DimensionError("forward: feature width " + std::to_string(features.cols()) +
                         " but model expects " + std::to_string(config_.in_dim));
  }
  if (features.rows() != nodes_) {
    throw ContractError("forward: " + std::to_string(features.rows()) +
                        " feature rows but cached graph has " + std::to_string(nodes_) +
                        " nodes");
  }
  ForwardPass out;
  const Var x = Var::constant(features);

  const Var z1 = fc1_.apply(x);
  const Var z2 = fc2_.apply(relu(z1));
  Var h0 = relu(z2);
  double margin = std::min(min_abs(z1.value()), min_abs(z2.value()));

  if (mode == Mode::Train && config_.dropout > 0.0) {
    const double keep = 1.0 - config_.dropout;
    Matrix mask(h0.rows(), h0.cols());
    for (double& m : mask.data()) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    h0 = hadamard(h0, Var::constant(std::move(mask)));
  }

  auto propagate = [&](const Var& h) { return adjacency_.defined() ? matmul(adjacency_, h) : h; };

  const WeightSample s1 = bgc1_.sample(rng);
  const Var a1 = add_row_broadcast(propagate(matmul(h0, s1.weight)), s1.bias);
  margin = std::min(margin, min_abs(a1.value()));
  const Var h1 = relu(a1);

  const WeightSample s2 = bgc2_.sample(rng);
  const Var a2 = add_row_broadcast(propagate(matmul(h1, s2.weight)), s2.bias);

  out.log_probs = log_softmax_rows(a2);
  out.log_q = add(log_q(bgc1_, s1), log_q(bgc2_, s2));
  out.log_p = add(log_p(bgc1_, s1), log_p(bgc2_, s2));
  out.relu_margin = margin;
  return out;
}

std::vector<std::pair<std::string, Var>> BlgcnModel::named_parameters() const {
  return {
      {"fc1.weight", fc1_.weight},          {"fc1.bias", fc1_.bias},
      {"fc2.weight", fc2_.weight},          {"fc2.bias", fc2_.bias},
      {"bgc1.mu_weight", bgc1_.mu_weight},  {"bgc1.rho_weight", bgc1_.rho_weight},
      {"bgc1.mu_bias", bgc1_.mu_bias},      {"bgc1.rho_bias", bgc1_.rho_bias},
      {"bgc2.mu_weight", bgc2_.mu_weight},  {"bgc2.rho_weight", bgc2_.rho_weight},
      {"bgc2.mu_bias", bgc2_.mu_bias},      {"bgc2.rho_bias", bgc2_.rho_bias},
  };
}

std::vector<Var> BlgcnModel::parameter_vars() const {
  std::vector<Var> vars;
  for (auto& [name, v] : named_parameters()) vars.push_back(v);
  return vars;
}

std::vector<ParamSlot> BlgcnModel::parameters() {
  std::vector<ParamSlot> slots;
  for (auto& [name, v] : named_parameters()) {
    Var handle = v;
    const bool is_rho = name.find(".rho_") != std::string::npos;
    slots.push_back({&handle.mutable_value(), &handle.grad(), !is_rho});
  }
  return slots;
}

void BlgcnModel::zero_grad() {
  for (auto& v : parameter_vars()) v.zero_grad();
}

Checkpoint BlgcnModel::to_checkpoint() const {
  Checkpoint c;
  c.header = {
      {"format", "blgcn-model"},
      {"in_dim", std::to_string(config_.in_dim)},
      {"hidden", std::to_string(config_.hidden)},
      {"hidden2", std::to_string(config_.hidden2)},
      {"classes", std::to_string(config_.classes)},
      {"dropout", fmt_double(config_.dropout)},
      {"rho_init", fmt_double(config_.rho_init)},
      {"prior_mean", fmt_double(config_.prior.mean)},
      {"prior_std", fmt_double(config_.prior.std)},
      {"graph_conv", config_.graph_conv ? "1" : "0"},
      {"seed", std::to_string(config_.seed)},
  };
  for (const auto& [name, v] : named_parameters()) c.tensors.emplace_back(name, v.value());
  return c;
}

BlgcnModel BlgcnModel::from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.has_header("format") || ckpt.header_value("format") != "blgcn-model") {
    throw DataError("checkpoint is not a blgcn model");
  }
  ModelConfig cfg;
  cfg.in_dim = std::stoul(ckpt.header_value("in_dim"));
  cfg.hidden = std::stoul(ckpt.header_value("hidden"));
  cfg.hidden2 = std::stoul(ckpt.header_value("hidden2"));
  cfg.classes = std::stoi(ckpt.header_value("classes"));
  cfg.dropout = parse_double(ckpt.header_value("dropout"));
  cfg.rho_init = parse_double(ckpt.header_value("rho_init"));
  cfg.prior.mean = parse_double(ckpt.header_value("prior_mean"));
  cfg.prior.std = parse_double(ckpt.header_value("prior_std"));
  cfg.graph_conv = ckpt.header_value("graph_conv") == "1";
  cfg.seed = std::stoull(ckpt.header_value("seed"));
  BlgcnModel model(cfg);
  model.load_parameters(ckpt);
  return model;
}

void BlgcnModel::load_parameters(const Checkpoint& ckpt) {
  for (auto& [name, v] : named_parameters()) {
    const Matrix& src = ckpt.tensor(name);
    Var handle = v;
    require_same_shape(handle.value(), src, name.c_str());
    handle.mutable_value() = src;
  }
}

void BlgcnModel::set_rho(double value) {
  for (Var v : {bgc1_.rho_weight, bgc1_.rho_bias, bgc2_.rho_weight, bgc2_.rho_bias}) {
    for (double& x : v.mutable_value().data()) x = value;
  }
}

Var nll(const Var& log_probs, std::span<const int> labels, std::span<const std::size_t> nodes) {
  std::vector<std::size_t> rows(nodes.begin(), nodes.end());
  std::vector<std::size_t> cols;
  cols.reserve(nodes.size());
  for (std::size_t j : nodes) {
    if (j >= labels.size() || j >= log_probs.rows()) {
      throw ContractError("nll: node index " + std::to_string(j) + " out of range");
    }
    const int label = labels[j];
    if (label < 1 || static_cast<std::size_t>(label) > log_probs.cols()) {
      throw ContractError("nll: label " + std::to_string(label) + " outside 1.." +
                              std::to_string(log_probs.cols()));
    }
    cols.push_back(static_cast<std::size_t>(label - 1));
  }
  return scale(gather_sum(log_probs, rows, cols), -1.0);
}

std::vector<int> argmax_classes(const Matrix& scores) {
  std::vector<int> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) + 1;
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels,
                std::span<const std::size_t> nodes) {
  if (nodes.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t j : nodes) hit += predicted[j] == labels[j] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

McPrediction predict_mc(const BlgcnModel& model, const Matrix& features, int samples,
                        std::uint64_t root_seed, std::span<const int> labels,
                        std::span<const std::size_t> nodes, unsigned workers) {
  if (samples < 1) throw ContractError("predict_mc: need at least one sample");
  const auto count = static_cast<std::size_t>(samples);
  std::vector<Matrix> probs(count);

  auto run = [&](std::size_t s) {
    NoGradGuard no_grad;
    Rng rng = Rng::stream(root_seed, s);
    Matrix p = model.forward(features, rng, Mode::Eval).log_probs.value();
    for (double& v : p.data()) v = std::exp(v);
    probs[s] = std::move(p);
  };

  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t s = 0; s < count; ++s) run(s);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t s = t; s < count; s += workers) run(s);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  McPrediction out;
  out.mean_probs = Matrix(probs[0].rows(), probs[0].cols());
  for (const auto& p : probs)
    for (std::size_t i = 0; i < p.size(); ++i) out.mean_probs[i] += p[i];
  const double inv = 1.0 / static_cast<double>(count);
  for (double& v : out.mean_probs.data()) v *= inv;

  if (!labels.empty()) {
    out.run_accuracy.reserve(count);
    for (const auto& p : probs) out.run_accuracy.push_back(accuracy(argmax_classes(p), labels, nodes));
  }
  return out;
}

}  // namespace blgcn
