#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace blgcn {

/// Hyperspectral cube: height×width pixels, `bands` radiance values per
/// pixel stored pixel-major (row-major pixels, bands contiguous), plus an
/// optional per-pixel label map where 0 is background and 1..C are classes.
struct HsiCube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<double> values;
  std::vector<int> labels;  // empty when no ground truth is attached

  std::size_t pixels() const noexcept { return height * width; }
  double value(std::size_t pixel, std::size_t band) const noexcept {
    return values[pixel * bands + band];
  }
  std::span<const double> spectrum(std::size_t pixel) const noexcept {
    return {values.data() + pixel * bands, bands};
  }
  int max_label() const noexcept;
};

// Binary containers, all fields little-endian:
//   cube:   "BLG1" u32 height u32 width u32 bands, then f32 × (h·w·b)
//   labels: "BLGL" u32 height u32 width, then i16 × (h·w)
// Loaders throw FormatError with the failing byte offset.
HsiCube load_cube(const std::filesystem::path& path);
void save_cube(const std::filesystem::path& path, const HsiCube& cube);
std::vector<int> load_labels(const std::filesystem::path& path, std::size_t* height = nullptr,
                             std::size_t* width = nullptr);
void save_labels(const std::filesystem::path& path, std::size_t height, std::size_t width,
                 std::span<const int> labels);

// In-memory variants used by the file functions (and by tests).
HsiCube parse_cube(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_cube(const HsiCube& cube);
std::vector<int> parse_labels(std::span<const std::uint8_t> bytes, std::size_t* height,
                              std::size_t* width);
std::vector<std::uint8_t> serialize_labels(std::size_t height, std::size_t width,
                                           std::span<const int> labels);

/// Loads a cube and its label map and checks the dimensions agree.
HsiCube load_dataset(const std::filesystem::path& cube_path,
                     const std::filesystem::path& labels_path);

/// Per-band min-max scaling into [0, 1]; constant bands become all zeros.
HsiCube normalize(HsiCube cube);

enum class SplitFlag : std::uint8_t { Labeled, Unlabeled };

struct SplitAssignment {
  std::vector<SplitFlag> flags;  // one per graph node

  bool labeled(std::size_t node) const { return flags[node] == SplitFlag::Labeled; }
  std::vector<std::size_t> labeled_nodes() const;
  std::vector<std::size_t> unlabeled_nodes() const;
};

/// Labeled count for a class of `class_size` nodes: round-half-up of
/// ratio·class_size, at least 1.
std::size_t labeled_count(std::size_t class_size, double ratio);

/// Per-class random split of graph nodes (labels 1..C) under `seed`. Classes
/// with no nodes are skipped with a warning.
SplitAssignment split_superpixels(std::span<const int> node_labels, double ratio,
                                  std::uint64_t seed);

/// Synthetic cube made of square tiles, each tile one class with its own
/// Gaussian spectrum.
struct SynthSpec {
  int classes = 4;
  std::size_t height = 96;
  std::size_t width = 96;
  std::size_t bands = 16;
  std::size_t tile = 24;       // tile edge in pixels
  double noise = 0.0;          // per-value Gaussian std around the class mean
  std::vector<double> class_weights;  // relative tile share per class; empty = equal
  std::size_t background_tiles = 0;   // tiles left as label 0
  std::size_t gutter = 2;  // background border, in pixels, inside every tile edge
  std::uint64_t seed = 1;
};

HsiCube synth_dataset(const SynthSpec& spec);

}  // namespace blgcn
