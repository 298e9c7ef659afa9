#include "blgcn/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "blgcn/errors.hpp"
#include "blgcn/rng.hpp"

namespace blgcn {
namespace {

struct Center {
  double y = 0.0;
  double x = 0.0;
  std::vector<double> spectrum;
};

double spectral_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Union-find over connected components, used by connectivity enforcement.
struct Components {
  std::vector<std::size_t> parent;
  std::vector<std::size_t> size;

  std::size_t find(std::size_t c) {
    while (parent[c] != c) {
      parent[c] = parent[parent[c]];
      c = parent[c];
    }
    return c;
  }
};

// Relabels every 4-connected fragment smaller than `min_size` into its
// largest adjacent fragment, then makes ids dense in raster order of first
// appearance.
void enforce_connectivity(Segmentation& seg, std::size_t min_size) {
  const std::size_t h = seg.height, w = seg.width, n = h * w;
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::vector<std::size_t> comp(n, kNone);
  std::vector<std::vector<std::size_t>> pixels;
  std::vector<std::size_t> queue;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] != kNone) continue;
    const std::size_t id = pixels.size();
    pixels.emplace_back();
    queue.assign(1, start);
    comp[start] = id;
    while (!queue.empty()) {
      const std::size_t p = queue.back();
      queue.pop_back();
      pixels[id].push_back(p);
      const std::size_t y = p / w, x = p % w;
      const std::size_t nbr[4] = {y > 0 ? p - w : kNone, y + 1 < h ? p + w : kNone,
                                  x > 0 ? p - 1 : kNone, x + 1 < w ? p + 1 : kNone};
      for (std::size_t q : nbr) {
        if (q != kNone && comp[q] == kNone && seg.ids[q] == seg.ids[p]) {
          comp[q] = id;
          queue.push_back(q);
        }
      }
    }
  }

  Components uf;
  uf.parent.resize(pixels.size());
  std::iota(uf.parent.begin(), uf.parent.end(), std::size_t{0});
  uf.size.resize(pixels.size());
  for (std::size_t c = 0; c < pixels.size(); ++c) uf.size[c] = pixels[c].size();

  for (std::size_t c = 0; c < pixels.size(); ++c) {
    const std::size_t root = uf.find(c);
    if (root != c || uf.size[root] >= min_size) continue;
    // Largest neighbouring fragment; ties go to the lower fragment index.
    std::size_t best = kNone;
    for (std::size_t p : pixels[c]) {
      const std::size_t y = p / w, x = p % w;
      const std::size_t nbr[4] = {y > 0 ? p - w : kNone, y + 1 < h ? p + w : kNone,
                                  x > 0 ? p - 1 : kNone, x + 1 < w ? p + 1 : kNone};
      for (std::size_t q : nbr) {
        if (q == kNone) continue;
        const std::size_t r = uf.find(comp[q]);
        if (r == root) continue;
        if (best == kNone || uf.size[r] > uf.size[best] ||
            (uf.size[r] == uf.size[best] && r < best)) {
          best = r;
        }
      }
    }
    if (best == kNone) continue;
    uf.parent[root] = best;
    uf.size[best] += uf.size[root];
  }

  std::vector<int> dense(pixels.size(), -1);
  int next = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t r = uf.find(comp[p]);
    if (dense[r] < 0) dense[r] = next++;
    seg.ids[p] = dense[r];
  }
  seg.count = next;
}

}  // namespace

Segmentation slic_segment(const HsiCube& cube, const SlicParams& params) {
  const std::size_t h = cube.height, w = cube.width, n = cube.pixels(), bands = cube.bands;
  if (params.superpixels < 1) throw ContractError("slic: K must be >= 1");
  if (params.iterations < 1) throw ContractError("slic: iterations must be >= 1");
  if (static_cast<std::size_t>(params.superpixels) > n) {
    throw ContractError("slic: K = " + std::to_string(params.superpixels) +
                        " exceeds pixel count " + std::to_string(n));
  }
  if (params.compactness < 0.0) throw ContractError("slic: compactness must be >= 0");

  const double k = static_cast<double>(params.superpixels);
  const double step = std::sqrt(static_cast<double>(n) / k);
  const std::size_t ny = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(static_cast<double>(h) / step)), 1, h);
  const std::size_t nx = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(static_cast<double>(w) / step)), 1, w);
  const double spatial_weight = params.compactness / step;

  Rng rng(params.seed);
  std::vector<Center> centers;
  centers.reserve(ny * nx);
  for (std::size_t i = 0; i < ny; ++i) {
    for (std::size_t j = 0; j < nx; ++j) {
      Center c;
      c.y = (static_cast<double>(i) + 0.5) * static_cast<double>(h) / static_cast<double>(ny) - 0.5;
      c.x = (static_cast<double>(j) + 0.5) * static_cast<double>(w) / static_cast<double>(nx) - 0.5;
      if (params.jitter > 0.0) {
        c.y = std::clamp(c.y + rng.uniform(-1.0, 1.0) * params.jitter * step, 0.0,
                         static_cast<double>(h - 1));
        c.x = std::clamp(c.x + rng.uniform(-1.0, 1.0) * params.jitter * step, 0.0,
                         static_cast<double>(w - 1));
      }
      const std::size_t py = static_cast<std::size_t>(std::lround(c.y));
      const std::size_t px = static_cast<std::size_t>(std::lround(c.x));
      const auto s = cube.spectrum(py * w + px);
      c.spectrum.assign(s.begin(), s.end());
      centers.push_back(std::move(c));
    }
  }

  Segmentation seg;
  seg.height = h;
  seg.width = w;
  seg.ids.resize(n);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      seg.ids[y * w + x] = static_cast<int>((y * ny / h) * nx + x * nx / w);

  std::vector<double> dist(n);
  std::vector<double> acc_spec;
  std::vector<double> acc_pos;
  std::vector<std::size_t> acc_count;
  for (int iter = 0; iter < params.iterations; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const Center& c = centers[ci];
      const auto y0 = static_cast<std::size_t>(std::max(0.0, std::ceil(c.y - step)));
      const auto y1 = static_cast<std::size_t>(
          std::min(static_cast<double>(h - 1), std::floor(c.y + step)));
      const auto x0 = static_cast<std::size_t>(std::max(0.0, std::ceil(c.x - step)));
      const auto x1 = static_cast<std::size_t>(
          std::min(static_cast<double>(w - 1), std::floor(c.x + step)));
      for (std::size_t y = y0; y <= y1; ++y) {
        for (std::size_t x = x0; x <= x1; ++x) {
          const std::size_t p = y * w + x;
          const double dy = static_cast<double>(y) - c.y;
          const double dx = static_cast<double>(x) - c.x;
          const double d = spectral_distance(cube.spectrum(p), c.spectrum) +
                           spatial_weight * std::sqrt(dy * dy + dx * dx);
          // Strict comparison: ties stay with the lower-indexed center.
          if (d < dist[p]) {
            dist[p] = d;
            seg.ids[p] = static_cast<int>(ci);
          }
        }
      }
    }

    acc_spec.assign(centers.size() * bands, 0.0);
    acc_pos.assign(centers.size() * 2, 0.0);
    acc_count.assign(centers.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      const auto ci = static_cast<std::size_t>(seg.ids[p]);
      acc_pos[2 * ci] += static_cast<double>(p / w);
      acc_pos[2 * ci + 1] += static_cast<double>(p % w);
      const auto s = cube.spectrum(p);
      for (std::size_t b = 0; b < bands; ++b) acc_spec[ci * bands + b] += s[b];
      ++acc_count[ci];
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      if (acc_count[ci] == 0) continue;
      const double inv = 1.0 / static_cast<double>(acc_count[ci]);
      centers[ci].y = acc_pos[2 * ci] * inv;
      centers[ci].x = acc_pos[2 * ci + 1] * inv;
      for (std::size_t b = 0; b < bands; ++b)
        centers[ci].spectrum[b] = acc_spec[ci * bands + b] * inv;
    }
  }

  const std::size_t average = n / static_cast<std::size_t>(params.superpixels);
  enforce_connectivity(seg, std::max<std::size_t>(1, average / 4));
  return seg;
}

std::vector<std::size_t> SuperpixelGraph::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes) + 1, 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

SuperpixelGraph build_graph(const Segmentation& seg, const HsiCube& cube) {
  if (seg.count <= 0 || seg.ids.empty()) throw ContractError("build_graph: empty segmentation");
  if (seg.height != cube.height || seg.width != cube.width) {
    throw ContractError("build_graph: segmentation and cube dimensions differ");
  }
  if (cube.labels.size() != cube.pixels()) {
    throw ContractError("build_graph: cube has no label map");
  }
  const auto segments = static_cast<std::size_t>(seg.count);
  const std::size_t bands = cube.bands;
  const int classes = cube.max_label();

  std::vector<std::vector<std::size_t>> members(segments);
  for (std::size_t p = 0; p < seg.ids.size(); ++p) {
    const int id = seg.ids[p];
    if (id < 0 || id >= seg.count) throw ContractError("build_graph: segment id out of range");
    members[static_cast<std::size_t>(id)].push_back(p);
  }

  SuperpixelGraph g;
  g.classes = classes;
  g.node_of_segment.assign(segments, -1);
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> votes(static_cast<std::size_t>(classes) + 1);
  for (std::size_t s = 0; s < segments; ++s) {
    if (members[s].empty()) continue;
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t p : members[s]) ++votes[static_cast<std::size_t>(cube.labels[p])];
    std::size_t label = 0;
    for (std::size_t c = 1; c < votes.size(); ++c)
      if (votes[c] > votes[label]) label = c;
    if (label == 0) continue;

    std::vector<double> row(bands + 1, 0.0);
    for (std::size_t p : members[s]) {
      const auto sp = cube.spectrum(p);
      for (std::size_t b = 0; b < bands; ++b) row[b] += sp[b];
    }
    const double inv = 1.0 / static_cast<double>(members[s].size());
    double energy = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
      row[b] *= inv;
      energy += row[b] * row[b];
    }
    row[bands] = energy;

    g.node_of_segment[s] = static_cast<int>(g.labels.size());
    g.labels.push_back(static_cast<int>(label));
    g.members.push_back(std::move(members[s]));
    rows.push_back(std::move(row));
  }

  const std::size_t n = g.labels.size();
  g.features = Matrix(n, bands + 1);
  for (std::size_t i = 0; i < n; ++i) std::copy(rows[i].begin(), rows[i].end(), g.features.row(i).begin());

  g.adjacency = Matrix(n, n);
  const std::size_t h = seg.height, w = seg.width;
  auto link = [&](std::size_t p, std::size_t q) {
    const int a = g.node_of_segment[static_cast<std::size_t>(seg.ids[p])];
    const int b = g.node_of_segment[static_cast<std::size_t>(seg.ids[q])];
    if (a < 0 || b < 0 || a == b) return;
    g.adjacency(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) = 1.0;
    g.adjacency(static_cast<std::size_t>(b), static_cast<std::size_t>(a)) = 1.0;
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      if (x + 1 < w) link(p, p + 1);
      if (y + 1 < h) link(p, p + w);
    }
  }
  return g;
}

Matrix renormalize(const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols()) {
    throw DimensionError("renormalize: adjacency must be square, got " + adjacency.shape_string());
  }
  const std::size_t n = adjacency.rows();
  std::vector<double> inv_sqrt_degree(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;  // self loop
    for (std::size_t j = 0; j < n; ++j) d += adjacency(i, j);
    inv_sqrt_degree[i] = 1.0 / std::sqrt(d);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = adjacency(i, j) + (i == j ? 1.0 : 0.0);
      if (a != 0.0) out(i, j) = a * inv_sqrt_degree[i] * inv_sqrt_degree[j];
    }
  }
  return out;
}

void write_graph(std::ostream& out, const SuperpixelGraph& graph) {
  const std::size_t n = graph.nodes();
  out << "# blgcn-graph nodes " << n << " dims " << graph.bands() << " classes " << graph.classes
      << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < n; ++i) {
    out << i << ' ' << graph.labels[i];
    for (double v : graph.features.row(i)) out << ' ' << v;
    out << '\n';
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (graph.adjacency(i, j) != 0.0) edges.emplace_back(i, j);
  out << "# edges " << edges.size() << '\n';
  for (const auto& [i, j] : edges) out << i << ' ' << j << '\n';
}

void save_graph(const std::filesystem::path& path, const SuperpixelGraph& graph) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_graph(out, graph);
}

SuperpixelGraph read_graph(std::istream& in) {
  std::uint64_t offset = 0;
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) throw FormatError(std::string("unexpected end of graph before ") + what, offset);
    const std::uint64_t at = offset;
    offset += line.size() + 1;
    return at;
  };

  auto at = next_line("header");
  std::istringstream hs(line);
  std::string hash, tag, k1, k2, k3;
  std::size_t n = 0, dims = 0;
  int classes = 0;
  if (!(hs >> hash >> tag >> k1 >> n >> k2 >> dims >> k3 >> classes) || hash != "#" ||
      tag != "blgcn-graph" || k1 != "nodes" || k2 != "dims" || k3 != "classes") {
    throw FormatError("malformed graph header", at);
  }

  SuperpixelGraph g;
  g.classes = classes;
  g.features = Matrix(n, dims + 1);
  g.labels.resize(n);
  g.members.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    at = next_line("node line");
    std::istringstream ls(line);
    std::size_t id = 0;
    if (!(ls >> id >> g.labels[i]) || id != i) throw FormatError("bad node line", at);
    if (g.labels[i] < 1 || g.labels[i] > classes) throw FormatError("node label out of range", at);
    for (double& v : g.features.row(i))
      if (!(ls >> v)) throw FormatError("too few feature values", at);
  }
  at = next_line("edge header");
  std::istringstream es(line);
  std::string e1;
  std::size_t m = 0;
  if (!(es >> hash >> e1 >> m) || hash != "#" || e1 != "edges") {
    throw FormatError("malformed edge header", at);
  }
  g.adjacency = Matrix(n, n);
  for (std::size_t e = 0; e < m; ++e) {
    at = next_line("edge line");
    std::istringstream ls(line);
    std::size_t i = 0, j = 0;
    if (!(ls >> i >> j) || i >= n || j >= n || i == j) throw FormatError("bad edge line", at);
    g.adjacency(i, j) = 1.0;
    g.adjacency(j, i) = 1.0;
  }
  return g;
}

SuperpixelGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph " + path.string());
  try {
    return read_graph(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

NodeMap node_map(const Segmentation& seg, const SuperpixelGraph& graph) {
  NodeMap map;
  map.height = seg.height;
  map.width = seg.width;
  map.node.resize(seg.ids.size());
  for (std::size_t p = 0; p < seg.ids.size(); ++p)
    map.node[p] = graph.node_of_segment.at(static_cast<std::size_t>(seg.ids[p]));
  return map;
}

void save_node_map(const std::filesystem::path& path, const NodeMap& map) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << map.height << ' ' << map.width << '\n';
  for (std::size_t y = 0; y < map.height; ++y) {
    for (std::size_t x = 0; x < map.width; ++x) {
      if (x) out << ' ';
      out << map.node[y * map.width + x];
    }
    out << '\n';
  }
}

NodeMap load_node_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open node map " + path.string());
  NodeMap map;
  if (!(in >> map.height >> map.width)) throw FormatError("bad node map header", 0);
  map.node.resize(map.height * map.width);
  for (int& v : map.node)
    if (!(in >> v)) throw FormatError("node map truncated", static_cast<std::uint64_t>(in.tellg()));
  return map;
}

}  // namespace blgcn
