#include "blgcn/hsi_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "blgcn/errors.hpp"
#include "blgcn/log.hpp"
#include "blgcn/rng.hpp"

namespace blgcn {
namespace {

constexpr char kCubeMagic[4] = {'B', 'L', 'G', '1'};
constexpr char kLabelMagic[4] = {'B', 'L', 'G', 'L'};

// Sanity bound on declared element counts; guards against absurd headers
// before any allocation happens.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const noexcept { return pos_; }
  std::uint64_t remaining() const noexcept { return bytes_.size() - pos_; }

  void expect_magic(const char (&magic)[4]) {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0) {
      throw FormatError(std::string("bad magic, expected \"") + std::string(magic, 4) + "\"",
                        pos_);
    }
    pos_ += 4;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v =
        static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  void need(std::uint64_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated file while reading ") + what + ": need " +
                            std::to_string(n) + " bytes, " + std::to_string(remaining()) +
                            " left",
                        pos_);
    }
  }

  void expect_end() const {
    if (remaining() != 0) {
      throw FormatError(std::to_string(remaining()) + " trailing bytes after payload", pos_);
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t checked_product(std::initializer_list<std::uint64_t> dims, std::uint64_t offset) {
  std::uint64_t p = 1;
  for (std::uint64_t d : dims) {
    if (d != 0 && p > kMaxElements / d) {
      throw FormatError("dimension overflow in header", offset);
    }
    p *= d;
  }
  if (p == 0) throw FormatError("zero-sized dimension in header", offset);
  return p;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

int HsiCube::max_label() const noexcept {
  int m = 0;
  for (int l : labels) m = std::max(m, l);
  return m;
}

HsiCube parse_cube(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic(kCubeMagic);
  const std::uint64_t header_at = r.offset();
  HsiCube cube;
  cube.height = r.u32("height");
  cube.width = r.u32("width");
  cube.bands = r.u32("bands");
  const std::uint64_t count = checked_product({cube.height, cube.width, cube.bands}, header_at);
  r.need(count * 4, "cube payload");
  cube.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    cube.values[i] = static_cast<double>(std::bit_cast<float>(r.u32("value")));
  }
  r.expect_end();
  return cube;
}

std::vector<std::uint8_t> serialize_cube(const HsiCube& cube) {
  if (cube.values.size() != cube.height * cube.width * cube.bands) {
    throw ContractError("serialize_cube: value count does not match dimensions");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + cube.values.size() * 4);
  out.insert(out.end(), std::begin(kCubeMagic), std::end(kCubeMagic));
  put_u32(out, static_cast<std::uint32_t>(cube.height));
  put_u32(out, static_cast<std::uint32_t>(cube.width));
  put_u32(out, static_cast<std::uint32_t>(cube.bands));
  for (double v : cube.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

std::vector<int> parse_labels(std::span<const std::uint8_t> bytes, std::size_t* height,
                              std::size_t* width) {
  Reader r(bytes);
  r.expect_magic(kLabelMagic);
  const std::uint64_t header_at = r.offset();
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  const std::uint64_t count = checked_product({h, w}, header_at);
  r.need(count * 2, "label payload");
  std::vector<int> labels(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto raw = static_cast<std::int16_t>(r.u16("label"));
    if (raw < 0) throw FormatError("negative class label", r.offset() - 2);
    labels[i] = raw;
  }
  r.expect_end();
  if (height) *height = h;
  if (width) *width = w;
  return labels;
}

std::vector<std::uint8_t> serialize_labels(std::size_t height, std::size_t width,
                                           std::span<const int> labels) {
  if (labels.size() != height * width) {
    throw ContractError("serialize_labels: label count does not match dimensions");
  }
  std::vector<std::uint8_t> out;
  out.reserve(12 + labels.size() * 2);
  out.insert(out.end(), std::begin(kLabelMagic), std::end(kLabelMagic));
  put_u32(out, static_cast<std::uint32_t>(height));
  put_u32(out, static_cast<std::uint32_t>(width));
  for (int l : labels) {
    if (l < 0 || l > std::numeric_limits<std::int16_t>::max()) {
      throw ContractError("label " + std::to_string(l) + " does not fit int16");
    }
    const auto u = static_cast<std::uint16_t>(l);
    out.push_back(static_cast<std::uint8_t>(u & 0xff));
    out.push_back(static_cast<std::uint8_t>(u >> 8));
  }
  return out;
}

HsiCube load_cube(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_cube(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void save_cube(const std::filesystem::path& path, const HsiCube& cube) {
  write_file(path, serialize_cube(cube));
}

std::vector<int> load_labels(const std::filesystem::path& path, std::size_t* height,
                             std::size_t* width) {
  const auto bytes = read_file(path);
  try {
    return parse_labels(bytes, height, width);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void save_labels(const std::filesystem::path& path, std::size_t height, std::size_t width,
                 std::span<const int> labels) {
  write_file(path, serialize_labels(height, width, labels));
}

HsiCube load_dataset(const std::filesystem::path& cube_path,
                     const std::filesystem::path& labels_path) {
  HsiCube cube = load_cube(cube_path);
  if (!std::filesystem::exists(labels_path)) {
    throw DataError("label file not found: " + labels_path.string());
  }
  std::size_t h = 0, w = 0;
  cube.labels = load_labels(labels_path, &h, &w);
  if (h != cube.height || w != cube.width) {
    throw DataError("label map " + std::to_string(h) + "x" + std::to_string(w) +
                    " does not match cube " + std::to_string(cube.height) + "x" +
                    std::to_string(cube.width));
  }
  return cube;
}

HsiCube normalize(HsiCube cube) {
  const std::size_t n = cube.pixels();
  for (std::size_t b = 0; b < cube.bands; ++b) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t p = 0; p < n; ++p) {
      const double v = cube.values[p * cube.bands + b];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double range = hi - lo;
    for (std::size_t p = 0; p < n; ++p) {
      double& v = cube.values[p * cube.bands + b];
      v = range > 0.0 ? (v - lo) / range : 0.0;
    }
  }
  return cube;
}

std::vector<std::size_t> SplitAssignment::labeled_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i] == SplitFlag::Labeled) out.push_back(i);
  return out;
}

std::vector<std::size_t> SplitAssignment::unlabeled_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i] == SplitFlag::Unlabeled) out.push_back(i);
  return out;
}

std::size_t labeled_count(std::size_t class_size, double ratio) {
  if (class_size == 0) return 0;
  // The small slack absorbs representation error in products such as
  // 0.3 * 15, which should round half up to 5.
  const double x = ratio * static_cast<double>(class_size);
  auto k = static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
  return std::clamp<std::size_t>(k, 1, class_size);
}

SplitAssignment split_superpixels(std::span<const int> node_labels, double ratio,
                                  std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ContractError("split ratio must lie in (0, 1), got " + std::to_string(ratio));
  }
  int classes = 0;
  for (int l : node_labels) {
    if (l < 1) throw ContractError("split_superpixels: node label must be >= 1");
    classes = std::max(classes, l);
  }
  SplitAssignment split;
  split.flags.assign(node_labels.size(), SplitFlag::Unlabeled);
  Rng rng(seed);
  for (int c = 1; c <= classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < node_labels.size(); ++i)
      if (node_labels[i] == c) members.push_back(i);
    if (members.empty()) {
      logging::warn("class " + std::to_string(c) + " has no superpixels; skipped in split");
      continue;
    }
    const std::size_t k = labeled_count(members.size(), ratio);
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(members.size() - i);
      std::swap(members[i], members[j]);
      split.flags[members[i]] = SplitFlag::Labeled;
    }
  }
  return split;
}

HsiCube synth_dataset(const SynthSpec& spec) {
  if (spec.classes < 1 || spec.height == 0 || spec.width == 0 || spec.bands == 0 ||
      spec.tile == 0 || spec.noise < 0.0 || 2 * spec.gutter >= spec.tile) {
    throw ContractError("synth_dataset: invalid spec");
  }
  if (!spec.class_weights.empty() &&
      spec.class_weights.size() != static_cast<std::size_t>(spec.classes)) {
    throw ContractError("synth_dataset: class_weights must have one entry per class");
  }
  const std::size_t ty = (spec.height + spec.tile - 1) / spec.tile;
  const std::size_t tx = (spec.width + spec.tile - 1) / spec.tile;
  const std::size_t tiles = ty * tx;
  const auto classes = static_cast<std::size_t>(spec.classes);
  if (classes + spec.background_tiles > tiles) {
    throw ContractError("synth_dataset: not enough tiles for classes and background");
  }

  Rng rng(spec.seed);

  // Tile shares by largest remainder, at least one tile per class.
  std::vector<double> w = spec.class_weights;
  if (w.empty()) w.assign(classes, 1.0);
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  const std::size_t free_tiles = tiles - spec.background_tiles - classes;
  std::vector<std::size_t> count(classes, 1);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double exact = static_cast<double>(free_tiles) * w[c] / wsum;
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    count[c] += whole;
    used += whole;
    rem.emplace_back(exact - static_cast<double>(whole), c);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < free_tiles; ++i, ++used) ++count[rem[i % classes].second];

  std::vector<int> tile_class;
  tile_class.reserve(tiles);
  tile_class.insert(tile_class.end(), spec.background_tiles, 0);
  for (std::size_t c = 0; c < classes; ++c)
    tile_class.insert(tile_class.end(), count[c], static_cast<int>(c + 1));
  for (std::size_t i = tiles; i > 1; --i) std::swap(tile_class[i - 1], tile_class[rng.below(i)]);

  // Class mean spectra: smooth random curves inside (0.1, 0.9). Index 0 is
  // the background spectrum.
  std::vector<std::vector<double>> means(classes + 1, std::vector<double>(spec.bands));
  for (auto& m : means) {
    const double level = rng.uniform(0.3, 0.7);
    const double amp = rng.uniform(0.1, 0.2);
    const double freq = rng.uniform(0.5, 2.5);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    for (std::size_t b = 0; b < spec.bands; ++b) {
      const double t = static_cast<double>(b) / static_cast<double>(spec.bands);
      m[b] = level + amp * std::sin(6.283185307179586 * freq * t + phase);
    }
  }

  HsiCube cube;
  cube.height = spec.height;
  cube.width = spec.width;
  cube.bands = spec.bands;
  cube.values.resize(cube.pixels() * cube.bands);
  cube.labels.resize(cube.pixels());
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const std::size_t p = y * spec.width + x;
      const std::size_t oy = y % spec.tile, ox = x % spec.tile;
      const bool border = oy < spec.gutter || ox < spec.gutter ||
                          oy + spec.gutter >= spec.tile || ox + spec.gutter >= spec.tile;
      const int label = border ? 0 : tile_class[(y / spec.tile) * tx + x / spec.tile];
      cube.labels[p] = label;
      const auto& m = means[static_cast<std::size_t>(label)];
      for (std::size_t b = 0; b < spec.bands; ++b) {
        cube.values[p * cube.bands + b] = spec.noise > 0.0 ? m[b] + spec.noise * rng.normal() : m[b];
      }
    }
  }
  return cube;
}

}  // namespace blgcn
