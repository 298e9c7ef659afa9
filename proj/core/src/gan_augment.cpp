#include "blgcn/gan_augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "blgcn/errors.hpp"
#include "blgcn/log.hpp"
#include "blgcn/optim.hpp"

namespace blgcn {
namespace {

std::vector<std::size_t> identity_order(std::size_t b) {
  std::vector<std::size_t> o(b);
  std::iota(o.begin(), o.end(), std::size_t{0});
  return o;
}

std::vector<ParamSlot> slots_for(std::vector<Var>& vars) {
  std::vector<ParamSlot> slots;
  for (auto& v : vars) slots.push_back({&v.mutable_value(), &v.grad(), false});
  return slots;
}

Matrix gaussian(std::size_t r, std::size_t c, double std, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = std * rng.normal();
  return m;
}

}  // namespace

Discriminator::Discriminator(std::size_t in, std::size_t hidden, double init_std, Rng& rng)
    : w1_(Var::parameter(gaussian(in, hidden, init_std, rng))),
      b1_(Var::parameter(Matrix(1, hidden))),
      w2_(Var::parameter(gaussian(hidden, 1, init_std, rng))),
      b2_(Var::parameter(Matrix(1, 1))) {}

Var Discriminator::logits(const Var& x) const {
  const Var h = relu(add_row_broadcast(matmul(x, w1_), b1_));
  return add_row_broadcast(matmul(h, w2_), b2_);
}

Matrix Discriminator::probability(const Matrix& x) const {
  NoGradGuard no_grad;
  Matrix p = logits(Var::constant(x)).value();
  for (double& v : p.data()) v = sigmoid(v);
  return p;
}

std::vector<int> detect_minority(std::span<const std::size_t> class_counts, double threshold) {
  std::size_t largest = 0;
  for (std::size_t c = 1; c < class_counts.size(); ++c) largest = std::max(largest, class_counts[c]);
  const double limit = threshold * static_cast<double>(largest);
  std::vector<int> out;
  for (std::size_t c = 1; c < class_counts.size(); ++c) {
    if (class_counts[c] > 0 && static_cast<double>(class_counts[c]) < limit) {
      out.push_back(static_cast<int>(c));
    }
  }
  return out;
}

Matrix tile_rows(const Matrix& rows, std::span<const std::size_t> order) {
  if (rows.rows() == 0 || rows.cols() == 0) throw ContractError("tile_rows: empty feature matrix");
  const std::size_t b = rows.rows(), d = rows.cols();
  std::vector<std::size_t> ident;
  if (order.empty()) {
    ident = identity_order(b);
    order = ident;
  }
  if (order.size() != b) throw ContractError("tile_rows: order must list every sample once");
  Matrix out(d, d);
  for (std::size_t k = 0; k < d; ++k) {
    const auto src = rows.row(order[k % b]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

Matrix enhance(const Matrix& rows, std::span<const std::size_t> order) {
  return hadamard(tile_rows(rows, order), Matrix::identity(rows.cols()));
}

GanResult gan_train(const Matrix& real, const GanConfig& config) {
  if (real.rows() == 0 || real.cols() == 0) throw ContractError("gan_train: empty feature matrix");
  if (!(config.generator_init_std > 0.0 && config.discriminator_init_std > 0.0)) {
    throw ContractError("gan_train: init stds must be positive");
  }
  if (!(config.minority_threshold > 0.0 && config.minority_threshold <= config.fill_target &&
        config.fill_target < 1.0)) {
    throw ContractError("gan_train: need 0 < minority_threshold <= fill_target < 1");
  }
  const std::size_t d = real.cols();
  Rng rng(config.seed);

  // 1 + zero-mean noise, re-centred so the sample mean is exactly one.
  Matrix w = gaussian(d, d, config.generator_init_std, rng);
  const double noise_mean = w.sum() / static_cast<double>(w.size());
  for (double& v : w.data()) v = 1.0 + (v - noise_mean);

  GanResult result;
  result.discriminator = Discriminator(d, config.discriminator_hidden,
                                       config.discriminator_init_std, rng);
  Var generator = Var::parameter(std::move(w));
  const Var enhanced = Var::constant(enhance(real));
  const Var real_rows = Var::constant(real);
  const Matrix ones_real(real.rows(), 1, 1.0);
  const Matrix ones_fake(d, 1, 1.0);
  const Matrix zeros_fake(d, 1, 0.0);

  std::vector<Var> d_params = result.discriminator.parameters();
  std::vector<Var> g_params{generator};
  auto d_slots = slots_for(d_params);
  auto g_slots = slots_for(g_params);
  AdamState d_state, g_state;
  const AdamConfig adam{};

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double d_loss = 0.0, g_loss = 0.0;
    try {
      for (auto& p : d_params) p.zero_grad();
      {
        const Var fake = Var::constant(matmul(generator.value(), enhanced.value()));
        const Var loss =
            add(bce_with_logits(result.discriminator.logits(real_rows), ones_real),
                bce_with_logits(result.discriminator.logits(fake), zeros_fake));
        d_loss = loss.item();
        backward(loss);
        adam_step(d_slots, d_state, adam, config.learning_rate);
      }
      generator.zero_grad();
      {
        const Var fake = matmul(generator, enhanced);
        const Var loss = bce_with_logits(result.discriminator.logits(fake), ones_fake);
        g_loss = loss.item();
        backward(loss);
        adam_step(g_slots, g_state, adam, config.learning_rate);
      }
    } catch (const NumericError& e) {
      throw NumericError("GAN diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(d_loss) || !std::isfinite(g_loss)) {
      throw NumericError("GAN diverged at epoch " + std::to_string(epoch) +
                         ": non-finite loss (D=" + std::to_string(d_loss) +
                         ", G=" + std::to_string(g_loss) + ")");
    }
    result.history.discriminator_loss.push_back(d_loss);
    result.history.generator_loss.push_back(g_loss);
  }
  for (auto& p : d_params) p.zero_grad();
  result.generator.weight = generator.value();
  return result;
}

Matrix generate(const Generator& generator, const Matrix& real, std::size_t k, std::uint64_t seed,
                TileOrder order) {
  if (k == 0) throw ContractError("generate: k must be >= 1");
  const std::size_t b = real.rows(), d = real.cols();
  if (generator.weight.rows() != d || generator.weight.cols() != d) {
    throw DimensionError("generate: generator is " + generator.weight.shape_string() +
                         " but features have width " + std::to_string(d));
  }
  Rng rng(seed);
  Matrix out(k, d);
  std::vector<std::size_t> perm = identity_order(b);
  std::size_t emitted = 0;
  for (std::size_t cycle = 0; emitted < k; ++cycle) {
    if (order == TileOrder::Shuffled && cycle > 0) {
      for (std::size_t i = b; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    }
    const Matrix y = matmul(generator.weight, enhance(real, perm));
    for (std::size_t r = 0; r < d && emitted < k; ++r, ++emitted) {
      const auto src = y.row(r);
      std::copy(src.begin(), src.end(), out.row(emitted).begin());
    }
  }
  if (!out.all_finite()) throw NumericError("generate: non-finite generated values");
  return out;
}

std::size_t fill_deficit(std::span<const std::size_t> class_counts, int cls, double fill_target) {
  std::size_t largest = 0;
  for (std::size_t c = 1; c < class_counts.size(); ++c) largest = std::max(largest, class_counts[c]);
  const auto target = static_cast<std::size_t>(std::ceil(fill_target * static_cast<double>(largest)));
  const std::size_t have = class_counts[static_cast<std::size_t>(cls)];
  return target > have ? target - have : 0;
}

void expand_graph(SuperpixelGraph& graph, SplitAssignment& split, int cls, const Matrix& rows,
                  std::uint64_t seed) {
  const std::size_t n = graph.nodes();
  const std::size_t bands = graph.bands();
  if (split.flags.size() != n) throw ContractError("expand_graph: split does not match graph");
  if (rows.cols() != bands && rows.cols() != bands + 1) {
    throw DimensionError("expand_graph: generated rows have width " + std::to_string(rows.cols()) +
                         ", expected " + std::to_string(bands) + " or " +
                         std::to_string(bands + 1));
  }
  std::vector<std::size_t> anchors, any;
  for (std::size_t i = 0; i < n; ++i) {
    if (graph.labels[i] != cls) continue;
    any.push_back(i);
    if (split.labeled(i)) anchors.push_back(i);
  }
  if (any.empty()) {
    throw ContractError("expand_graph: class " + std::to_string(cls) +
                        " has no nodes to match generated samples against");
  }
  if (anchors.empty()) anchors = any;

  const std::size_t k = rows.rows();
  const std::size_t total = n + k;
  Matrix features(total, bands + 1);
  Matrix adjacency(total, total);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(graph.features.row(i).begin(), graph.features.row(i).end(), features.row(i).begin());
    std::copy(graph.adjacency.row(i).begin(), graph.adjacency.row(i).end(),
              adjacency.row(i).begin());
  }

  Rng rng(seed);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t v = n + r;
    double energy = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
      const double t = rows(r, b);
      features(v, b) = t;
      energy += t * t;
    }
    features(v, bands) = energy;

    const std::size_t j = anchors[rng.below(anchors.size())];
    for (std::size_t u = 0; u < v; ++u) {
      const double a = adjacency(j, u);
      adjacency(v, u) = a;
      adjacency(u, v) = a;
    }
    graph.labels.push_back(cls);
    graph.members.emplace_back();
    split.flags.push_back(SplitFlag::Labeled);
  }
  graph.features = std::move(features);
  graph.adjacency = std::move(adjacency);
}

AugmentSummary augment_minority(SuperpixelGraph& graph, SplitAssignment& split,
                                const GanConfig& config) {
  AugmentSummary summary;
  const std::vector<std::size_t> counts = graph.class_counts();
  summary.classes = detect_minority(counts, config.minority_threshold);
  const std::size_t bands = graph.bands();
  for (int cls : summary.classes) {
    std::vector<std::size_t> sources;
    for (std::size_t i = 0; i < graph.nodes(); ++i)
      if (graph.labels[i] == cls && split.labeled(i)) sources.push_back(i);
    const std::size_t deficit = fill_deficit(counts, cls, config.fill_target);
    if (sources.empty() || deficit == 0) {
      logging::warn("minority class " + std::to_string(cls) + " not augmented (" +
                (sources.empty() ? "no labeled nodes" : "already at fill target") + ")");
      summary.generated.push_back(0);
      continue;
    }
    Matrix real(sources.size(), bands);
    for (std::size_t r = 0; r < sources.size(); ++r)
      for (std::size_t b = 0; b < bands; ++b) real(r, b) = graph.features(sources[r], b);

    GanConfig cfg = config;
    cfg.seed = splitmix64(config.seed + static_cast<std::uint64_t>(cls));
    const GanResult gan = gan_train(real, cfg);
    const Matrix rows = generate(gan.generator, real, deficit, cfg.seed + 1, config.order);
    expand_graph(graph, split, cls, rows, cfg.seed + 2);
    summary.generated.push_back(deficit);
    logging::info("augmented class " + std::to_string(cls) + " with " + std::to_string(deficit) +
              " generated nodes");
  }
  return summary;
}

}  // namespace blgcn
