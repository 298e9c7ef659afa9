#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "blgcn/autograd.hpp"
#include "blgcn/hsi_io.hpp"
#include "blgcn/matrix.hpp"
#include "blgcn/rng.hpp"
#include "blgcn/superpixel.hpp"

namespace blgcn {

// How the b minority rows are replicated down to d rows before the diagonal
// is taken. Sequential: row k is sample k mod b. Shuffled: every block of d
// generated rows uses a fresh seeded permutation of the samples.
enum class TileOrder { Sequential, Shuffled };

struct GanConfig {
  double generator_init_std = 1e-5;
  double discriminator_init_std = 0.01;
  double learning_rate = 1e-7;
  int epochs = 2000;
  std::size_t discriminator_hidden = 32;
  double minority_threshold = 0.02;  // alpha_min
  double fill_target = 0.05;         // alpha_fill
  TileOrder order = TileOrder::Sequential;
  std::uint64_t seed = 0;
};

/// Linear generator G(M) = W · M with W initialised to 1 + small noise.
struct Generator {
  Matrix weight;  // d × d
};

/// d → hidden → 1 with ReLU; outputs a logit per row.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(std::size_t in, std::size_t hidden, double init_std, Rng& rng);

  Var logits(const Var& x) const;
  Matrix probability(const Matrix& x) const;
  std::vector<Var> parameters() const { return {w1_, b1_, w2_, b2_}; }

 private:
  Var w1_, b1_, w2_, b2_;
};

struct GanHistory {
  std::vector<double> discriminator_loss;
  std::vector<double> generator_loss;
};

struct GanResult {
  Generator generator;
  Discriminator discriminator;
  GanHistory history;
};

/// Classes c >= 1 with 0 < count[c] < threshold · max(count). `class_counts`
/// is indexed by class id (entry 0 ignored).
std::vector<int> detect_minority(std::span<const std::size_t> class_counts, double threshold);

/// d×d matrix whose row k is rows[order[k mod b]] (order defaults to 0..b-1).
Matrix tile_rows(const Matrix& rows, std::span<const std::size_t> order = {});
/// tile_rows(rows) ⊙ I_d: diagonal entry k is rows[order[k mod b]][k].
Matrix enhance(const Matrix& rows, std::span<const std::size_t> order = {});

/// Alternating D/G training. D minimises BCE(D(real), 1) + BCE(D(G(E)), 0)
/// with G frozen; G minimises BCE(D(G(E)), 1) with D frozen; E = enhance(real).
/// Throws NumericError if either loss becomes non-finite.
GanResult gan_train(const Matrix& real, const GanConfig& config);

/// k rows of W · enhance(real), consumed cyclically through the d rows.
Matrix generate(const Generator& generator, const Matrix& real, std::size_t k, std::uint64_t seed,
                TileOrder order = TileOrder::Sequential);

/// Nodes class c still needs to reach ceil(fill_target · max class count).
std::size_t fill_deficit(std::span<const std::size_t> class_counts, int cls, double fill_target);

/// Appends one labeled node of class `cls` per row of `rows` (spectral means
/// t, or t plus a trailing s column which is recomputed). Each new node
/// copies the adjacency of a uniformly drawn labeled node of that class.
void expand_graph(SuperpixelGraph& graph, SplitAssignment& split, int cls, const Matrix& rows,
                  std::uint64_t seed);

struct AugmentSummary {
  std::vector<int> classes;           // minority classes found
  std::vector<std::size_t> generated;  // nodes added per class (same order)
};

/// Detects minority classes and fills each from a GAN trained on that
/// class's labeled nodes only.
AugmentSummary augment_minority(SuperpixelGraph& graph, SplitAssignment& split,
                                const GanConfig& config);

}  // namespace blgcn
