#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "blgcn/hsi_io.hpp"
#include "blgcn/matrix.hpp"

namespace blgcn {

/// Per-pixel superpixel ids, dense in [0, count).
struct Segmentation {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> ids;
  int count = 0;
};

struct SlicParams {
  int superpixels = 100;     // target K
  double compactness = 0.08;
  int iterations = 10;
  // Random offset of the initial grid seeds as a fraction of the grid
  // interval, drawn from `seed`. Zero keeps the exact regular grid.
  double jitter = 0.0;
  std::uint64_t seed = 0;
};

/// SLIC: localized k-means over the joint distance
///   D = |spectrum - center| + (compactness / S) * |position - center|,
/// S = sqrt(H*W/K), followed by connectivity enforcement.
Segmentation slic_segment(const HsiCube& cube, const SlicParams& params);

/// Superpixel graph. Node i has feature row (t, s) where t is the per-band
/// mean over member pixels and s = sum(t^2).
struct SuperpixelGraph {
  Matrix features;   // n × (bands + 1)
  Matrix adjacency;  // n × n, symmetric, binary, zero diagonal
  std::vector<int> labels;                        // 1..classes
  std::vector<std::vector<std::size_t>> members;  // pixel indices (empty for generated nodes)
  std::vector<int> node_of_segment;               // segment id -> node, -1 if dropped
  int classes = 0;

  std::size_t nodes() const noexcept { return labels.size(); }
  std::size_t bands() const noexcept { return features.cols() == 0 ? 0 : features.cols() - 1; }
  std::vector<std::size_t> class_counts() const;  // index c holds count of class c (0 unused)
};

/// Builds features, majority-vote labels (ties to the smaller class id) and
/// 4-neighbourhood adjacency; nodes whose majority label is background are
/// removed.
SuperpixelGraph build_graph(const Segmentation& seg, const HsiCube& cube);

/// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I.
Matrix renormalize(const Matrix& adjacency);

// Text export: a "# blgcn-graph nodes N dims D classes C" header, one line
// "id label t_1 .. t_d s" per node, a "# edges M" line, then "i j" (i < j).
void write_graph(std::ostream& out, const SuperpixelGraph& graph);
void save_graph(const std::filesystem::path& path, const SuperpixelGraph& graph);
// Reads features, labels and adjacency back; member lists are not part of
// the format and come back empty.
SuperpixelGraph read_graph(std::istream& in);
SuperpixelGraph load_graph(const std::filesystem::path& path);

/// Per-pixel node index (-1 where the superpixel was dropped as
/// background). Lets a classification map be rendered from graph-space
/// predictions without the original segmentation.
struct NodeMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> node;
};

NodeMap node_map(const Segmentation& seg, const SuperpixelGraph& graph);
// Text: "H W" then H lines of W node indices.
void save_node_map(const std::filesystem::path& path, const NodeMap& map);
NodeMap load_node_map(const std::filesystem::path& path);

}  // namespace blgcn
