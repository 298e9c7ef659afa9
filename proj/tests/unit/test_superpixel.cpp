#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "blgcn/errors.hpp"
#include "blgcn/superpixel.hpp"
#include "helpers.hpp"

namespace blgcn {
namespace {

HsiCube uniform_cube(std::size_t h, std::size_t w, std::size_t bands, double value) {
  HsiCube c;
  c.height = h;
  c.width = w;
  c.bands = bands;
  c.values.assign(h * w * bands, value);
  c.labels.assign(h * w, 1);
  return c;
}

HsiCube random_cube(std::size_t h, std::size_t w, std::size_t bands, int classes, Rng& rng) {
  HsiCube c = uniform_cube(h, w, bands, 0.0);
  for (double& v : c.values) v = rng.uniform();
  for (int& l : c.labels) l = static_cast<int>(rng.below(static_cast<std::size_t>(classes) + 1));
  return c;
}

std::map<int, std::size_t> cluster_sizes(const Segmentation& s) {
  std::map<int, std::size_t> out;
  for (int id : s.ids) ++out[id];
  return out;
}

TEST(Slic, UniformCubeSplitsIntoQuadrants) {
  SlicParams p;
  p.superpixels = 4;
  const Segmentation s = slic_segment(uniform_cube(10, 10, 3, 0.5), p);
  ASSERT_EQ(s.count, 4);
  for (const auto& [id, n] : cluster_sizes(s)) EXPECT_EQ(n, 25u) << "cluster " << id;
  // Spatial k-means oracle: with equal spectra each pixel goes to the nearest
  // grid seed, i.e. its 5x5 quadrant.
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t x = 0; x < 10; ++x)
      EXPECT_EQ(s.ids[y * 10 + x], s.ids[(y / 5) * 5 * 10 + (x / 5) * 5]);
}

TEST(Slic, SingleSuperpixel) {
  Rng rng(1);
  SlicParams p;
  p.superpixels = 1;
  const Segmentation s = slic_segment(random_cube(7, 9, 4, 2, rng), p);
  EXPECT_EQ(s.count, 1);
  for (int id : s.ids) EXPECT_EQ(id, 0);
}

TEST(Slic, EveryPixelAssignedDenseIdsAndConnected) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const HsiCube cube = random_cube(15 + rng.below(10), 15 + rng.below(10), 3, 3, rng);
    SlicParams p;
    p.superpixels = 5 + static_cast<int>(rng.below(30));
    const Segmentation s = slic_segment(cube, p);
    ASSERT_EQ(s.ids.size(), cube.pixels());
    std::set<int> ids(s.ids.begin(), s.ids.end());
    ASSERT_EQ(static_cast<int>(ids.size()), s.count);
    EXPECT_EQ(*ids.begin(), 0);
    EXPECT_EQ(*ids.rbegin(), s.count - 1);

    // Each id forms one 4-connected region.
    std::vector<int> seen(cube.pixels(), 0);
    std::set<int> visited_ids;
    for (std::size_t start = 0; start < cube.pixels(); ++start) {
      if (seen[start]) continue;
      const int id = s.ids[start];
      EXPECT_TRUE(visited_ids.insert(id).second) << "id " << id << " has two components";
      std::vector<std::size_t> stack{start};
      seen[start] = 1;
      while (!stack.empty()) {
        const std::size_t q = stack.back();
        stack.pop_back();
        const std::size_t y = q / cube.width, x = q % cube.width;
        auto visit = [&](std::size_t n) {
          if (!seen[n] && s.ids[n] == id) seen[n] = 1, stack.push_back(n);
        };
        if (y > 0) visit(q - cube.width);
        if (y + 1 < cube.height) visit(q + cube.width);
        if (x > 0) visit(q - 1);
        if (x + 1 < cube.width) visit(q + 1);
      }
    }
  }
}

TEST(Slic, FollowsSpectralEdges) {
  // Two spectrally distinct halves; no superpixel may straddle them.
  HsiCube c = uniform_cube(12, 12, 2, 0.0);
  for (std::size_t p = 0; p < c.pixels(); ++p)
    if (p % 12 >= 6) c.values[p * 2] = c.values[p * 2 + 1] = 1.0;
  SlicParams p;
  p.superpixels = 8;
  const Segmentation s = slic_segment(c, p);
  std::map<int, std::set<bool>> side;
  for (std::size_t q = 0; q < c.pixels(); ++q) side[s.ids[q]].insert(q % 12 >= 6);
  for (const auto& [id, sides] : side) EXPECT_EQ(sides.size(), 1u) << id;
}

TEST(Slic, Deterministic) {
  Rng rng(3);
  const HsiCube cube = random_cube(20, 20, 4, 3, rng);
  SlicParams p;
  p.superpixels = 12;
  p.jitter = 0.3;
  p.seed = 9;
  EXPECT_EQ(slic_segment(cube, p).ids, slic_segment(cube, p).ids);
}

TEST(Slic, ParameterErrors) {
  const HsiCube c = uniform_cube(3, 3, 1, 0.0);
  SlicParams p;
  p.superpixels = 10;
  EXPECT_THROW(slic_segment(c, p), ContractError);
  p.superpixels = 0;
  EXPECT_THROW(slic_segment(c, p), ContractError);
  p.superpixels = 2;
  p.iterations = 0;
  EXPECT_THROW(slic_segment(c, p), ContractError);
}

Segmentation manual_seg(std::size_t h, std::size_t w, std::vector<int> ids) {
  Segmentation s;
  s.height = h;
  s.width = w;
  s.count = *std::max_element(ids.begin(), ids.end()) + 1;
  s.ids = std::move(ids);
  return s;
}

TEST(BuildGraph, FeatureRowIsMeanAndSquareSum) {
  HsiCube c = uniform_cube(1, 2, 2, 0.0);
  c.values = {1, 3, 3, 5};
  const SuperpixelGraph g = build_graph(manual_seg(1, 2, {0, 0}), c);
  ASSERT_EQ(g.nodes(), 1u);
  EXPECT_EQ(g.features.cols(), 3u);
  EXPECT_DOUBLE_EQ(g.features(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g.features(0, 1), 4.0);
  EXPECT_DOUBLE_EQ(g.features(0, 2), 20.0);
  EXPECT_EQ(g.members[0], (std::vector<std::size_t>{0, 1}));
}

TEST(BuildGraph, MajorityVoteAndTies) {
  HsiCube c = uniform_cube(1, 9, 1, 0.0);
  c.labels = {2, 2, 3, /**/ 3, 1, /**/ 0, 0, 1, /**/ 4};
  const SuperpixelGraph g = build_graph(manual_seg(1, 9, {0, 0, 0, 1, 1, 2, 2, 2, 3}), c);
  // Segment 2 is background-majority and is dropped.
  ASSERT_EQ(g.nodes(), 3u);
  EXPECT_EQ(g.labels, (std::vector<int>{2, 1, 4}));
  EXPECT_EQ(g.node_of_segment, (std::vector<int>{0, 1, -1, 2}));
  EXPECT_EQ(g.classes, 4);
}

TEST(BuildGraph, TieBetweenBackgroundAndClassDropsNode) {
  HsiCube c = uniform_cube(1, 4, 1, 0.0);
  c.labels = {0, 1, 2, 1};
  const SuperpixelGraph g = build_graph(manual_seg(1, 4, {0, 0, 1, 1}), c);
  ASSERT_EQ(g.nodes(), 1u);
  EXPECT_EQ(g.labels, (std::vector<int>{1}));
  EXPECT_EQ(g.node_of_segment, (std::vector<int>{-1, 0}));
}

TEST(BuildGraph, AdjacencyOfRow) {
  const HsiCube c = uniform_cube(1, 6, 1, 0.0);
  const SuperpixelGraph g = build_graph(manual_seg(1, 6, {0, 0, 1, 1, 2, 2}), c);
  EXPECT_EQ(g.adjacency, Matrix::from_rows({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}}));
}

TEST(BuildGraph, AdjacencyMatchesBruteForcePixelScan) {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t h = 1 + rng.below(20), w = 1 + rng.below(20);
    HsiCube cube = random_cube(h, w, 2, 3, rng);
    // Random Voronoi segmentation, not necessarily connected.
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(h * w, 15));
    std::vector<std::pair<double, double>> sites;
    for (std::size_t i = 0; i < k; ++i) sites.emplace_back(rng.uniform(0, h), rng.uniform(0, w));
    std::vector<int> ids(h * w);
    for (std::size_t p = 0; p < h * w; ++p) {
      double best = 1e300;
      for (std::size_t i = 0; i < k; ++i) {
        const double dy = sites[i].first - static_cast<double>(p / w);
        const double dx = sites[i].second - static_cast<double>(p % w);
        if (dy * dy + dx * dx < best) best = dy * dy + dx * dx, ids[p] = static_cast<int>(i);
      }
    }
    // Densify ids.
    std::map<int, int> dense;
    for (int& id : ids) id = dense.try_emplace(id, static_cast<int>(dense.size())).first->second;
    const Segmentation seg = manual_seg(h, w, ids);
    // Keep at least one labeled pixel so some node survives.
    cube.labels[0] = 1;
    for (std::size_t p = 0; p < h * w; ++p)
      if (ids[p] == ids[0]) cube.labels[p] = 1;

    const SuperpixelGraph g = build_graph(seg, cube);
    Matrix oracle(g.nodes(), g.nodes());
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t q = 0; q < h * w; ++q) {
        const std::size_t py = p / w, px = p % w, qy = q / w, qx = q % w;
        const std::size_t manhattan = (py > qy ? py - qy : qy - py) + (px > qx ? px - qx : qx - px);
        if (manhattan != 1) continue;
        const int a = g.node_of_segment[static_cast<std::size_t>(ids[p])];
        const int b = g.node_of_segment[static_cast<std::size_t>(ids[q])];
        if (a >= 0 && b >= 0 && a != b) oracle(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) = 1;
      }
    ASSERT_EQ(g.adjacency, oracle) << "trial " << trial;
    EXPECT_EQ(g.adjacency, transpose(g.adjacency));
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      EXPECT_EQ(g.adjacency(i, i), 0.0);
      EXPECT_GE(g.labels[i], 1);
    }
    EXPECT_EQ(g.features.rows(), g.nodes());
    EXPECT_EQ(g.members.size(), g.nodes());
  }
}

TEST(BuildGraph, RequiresLabelsAndMatchingDims) {
  HsiCube c = uniform_cube(2, 2, 1, 0.0);
  EXPECT_THROW(build_graph(Segmentation{}, c), ContractError);
  EXPECT_THROW(build_graph(manual_seg(1, 4, {0, 0, 1, 1}), c), std::exception);
  c.labels.clear();
  EXPECT_THROW(build_graph(manual_seg(2, 2, {0, 0, 1, 1}), c), std::exception);
}

// Direct evaluation: entry (i, j) = (A + I)_ij / sqrt(d_i d_j).
Matrix renormalize_oracle(const Matrix& a) {
  const std::size_t n = a.rows();
  std::vector<double> d(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i] += a(i, j);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = (a(i, j) + (i == j ? 1.0 : 0.0)) / std::sqrt(d[i] * d[j]);
  return out;
}

TEST(Renormalize, Examples) {
  EXPECT_EQ(renormalize(Matrix::from_rows({{0}})), Matrix::from_rows({{1}}));
  const Matrix two = renormalize(Matrix::from_rows({{0, 1}, {1, 0}}));
  for (double v : two.data()) EXPECT_NEAR(v, 0.5, 1e-15);
  const Matrix path = renormalize(Matrix::from_rows({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}}));
  EXPECT_NEAR(path(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(path(1, 1), 1.0 / 3.0, 1e-15);
}

TEST(Renormalize, ExhaustiveSmallGraphs) {
  for (std::size_t n = 1; n <= 5; ++n) {
    const std::size_t pairs = n * (n - 1) / 2;
    for (std::uint64_t mask = 0; mask < (1ULL << pairs); ++mask) {
      Matrix a(n, n);
      std::size_t bit = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j, ++bit)
          if (mask >> bit & 1) a(i, j) = a(j, i) = 1;
      const Matrix got = renormalize(a), want = renormalize_oracle(a);
      for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
    }
  }
}

TEST(Renormalize, PowersStayInUnitInterval) {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    Matrix a(n, n);
    const double density = rng.uniform();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform() < density) a(i, j) = a(j, i) = 1;
    const Matrix g = renormalize(a);
    EXPECT_EQ(g, transpose(g));
    Matrix p = g;
    for (int k = 1; k <= 10; ++k) {
      for (double v : p.data()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0 + 1e-12);
      }
      p = matmul(p, g);
    }
  }
}

TEST(GraphExport, RoundTrip) {
  Rng rng(2);
  const HsiCube cube = random_cube(12, 12, 3, 3, rng);
  SlicParams p;
  p.superpixels = 10;
  const SuperpixelGraph g = build_graph(slic_segment(cube, p), cube);
  std::stringstream ss;
  write_graph(ss, g);
  const SuperpixelGraph back = read_graph(ss);
  EXPECT_EQ(back.features, g.features);
  EXPECT_EQ(back.adjacency, g.adjacency);
  EXPECT_EQ(back.labels, g.labels);
  EXPECT_EQ(back.classes, g.classes);
}

TEST(GraphExport, MalformedInput) {
  std::stringstream bad("# blgcn-graph nodes 2 dims 1 classes 1\n0 1 0.5 0.25\n");
  EXPECT_THROW(read_graph(bad), FormatError);
  std::stringstream header("nonsense\n");
  EXPECT_THROW(read_graph(header), FormatError);
}

TEST(NodeMap, RoundTripAndBackground) {
  test::TempDir dir("nodes");
  HsiCube c = uniform_cube(1, 4, 1, 0.0);
  c.labels = {0, 0, 1, 1};
  const Segmentation seg = manual_seg(1, 4, {0, 0, 1, 1});
  const SuperpixelGraph g = build_graph(seg, c);
  const NodeMap m = node_map(seg, g);
  EXPECT_EQ(m.node, (std::vector<int>{-1, -1, 0, 0}));
  save_node_map(dir / "n.txt", m);
  const NodeMap back = load_node_map(dir / "n.txt");
  EXPECT_EQ(back.node, m.node);
  EXPECT_EQ(back.height, 1u);
  EXPECT_EQ(back.width, 4u);
}

}  // namespace
}  // namespace blgcn
