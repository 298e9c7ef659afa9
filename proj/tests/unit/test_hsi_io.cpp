#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "blgcn/errors.hpp"
#include "blgcn/hsi_io.hpp"
#include "helpers.hpp"

namespace blgcn {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::vector<std::uint8_t> cube_bytes(std::uint32_t h, std::uint32_t w, std::uint32_t b,
                                     const std::vector<float>& values) {
  std::vector<std::uint8_t> out{'B', 'L', 'G', '1'};
  put_u32(out, h);
  put_u32(out, w);
  put_u32(out, b);
  for (float f : values) put_f32(out, f);
  return out;
}

TEST(CubeFormat, ParsesHandBuiltFile) {
  std::vector<float> v;
  for (int i = 0; i < 12; ++i) v.push_back(0.5f * static_cast<float>(i));
  const HsiCube cube = parse_cube(cube_bytes(2, 2, 3, v));
  EXPECT_EQ(cube.height, 2u);
  EXPECT_EQ(cube.width, 2u);
  EXPECT_EQ(cube.bands, 3u);
  EXPECT_EQ(cube.pixels(), 4u);
  EXPECT_EQ(cube.value(1, 2), 2.5);  // pixel-major, bands contiguous
  EXPECT_EQ(cube.value(3, 0), 4.5);
  EXPECT_TRUE(cube.labels.empty());
}

TEST(CubeFormat, WrongMagic) {
  auto bytes = cube_bytes(1, 1, 1, {1.0f});
  bytes[3] = '2';
  try {
    parse_cube(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(CubeFormat, TruncatedPayloadReportsOffset) {
  auto bytes = cube_bytes(2, 2, 3, std::vector<float>(12, 1.0f));
  bytes.resize(bytes.size() - 2);
  try {
    parse_cube(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 16u);
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  EXPECT_THROW(parse_cube(std::vector<std::uint8_t>{'B', 'L', 'G', '1', 0, 0}), FormatError);
}

TEST(CubeFormat, DimensionOverflow) {
  const auto bytes = cube_bytes(0xFFFFFFFFu, 0xFFFFFFFFu, 0xFFFFFFFFu, {});
  EXPECT_THROW(parse_cube(bytes), FormatError);
}

TEST(CubeFormat, ZeroDimensionAndTrailingBytes) {
  EXPECT_THROW(parse_cube(cube_bytes(0, 2, 2, {})), FormatError);
  auto bytes = cube_bytes(1, 1, 1, {1.0f});
  bytes.push_back(0);
  EXPECT_THROW(parse_cube(bytes), FormatError);
}

TEST(CubeFormat, FileRoundTripIsByteIdentical) {
  test::TempDir dir("cube");
  Rng rng(8);
  std::vector<float> v(5 * 3 * 7);
  for (float& f : v) f = static_cast<float>(rng.uniform(-100, 100));
  const auto original = cube_bytes(5, 3, 7, v);
  {
    std::ofstream out(dir / "a.blg", std::ios::binary);
    out.write(reinterpret_cast<const char*>(original.data()), static_cast<std::streamsize>(original.size()));
  }
  save_cube(dir / "b.blg", load_cube(dir / "a.blg"));
  std::ifstream in(dir / "b.blg", std::ios::binary);
  const std::vector<std::uint8_t> copy((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(copy, original);
}

TEST(LabelFormat, RoundTripAndNegativeLabels) {
  const std::vector<int> labels{0, 1, 2, 16, 3, 0};
  const auto bytes = serialize_labels(2, 3, labels);
  std::size_t h = 0, w = 0;
  EXPECT_EQ(parse_labels(bytes, &h, &w), labels);
  EXPECT_EQ(h, 2u);
  EXPECT_EQ(w, 3u);
  auto bad = bytes;
  bad[12] = 0xFF;  // first label becomes negative
  bad[13] = 0xFF;
  EXPECT_THROW(parse_labels(bad, &h, &w), FormatError);
}

TEST(LoadDataset, MissingLabelFileIsDataError) {
  test::TempDir dir("ds");
  HsiCube c;
  c.height = 1;
  c.width = 2;
  c.bands = 1;
  c.values = {1.0, 2.0};
  save_cube(dir / "c.blg", c);
  EXPECT_THROW(load_dataset(dir / "c.blg", dir / "missing.blgl"), DataError);
  save_labels(dir / "l.blgl", 2, 1, std::vector<int>{1, 1});
  EXPECT_THROW(load_dataset(dir / "c.blg", dir / "l.blgl"), DataError);  // 2x1 vs 1x2
  save_labels(dir / "ok.blgl", 1, 2, std::vector<int>{1, 2});
  EXPECT_EQ(load_dataset(dir / "c.blg", dir / "ok.blgl").labels, (std::vector<int>{1, 2}));
}

HsiCube band_cube(std::vector<double> band0, std::vector<double> band1) {
  HsiCube c;
  c.height = 1;
  c.width = band0.size();
  c.bands = 2;
  for (std::size_t i = 0; i < band0.size(); ++i) {
    c.values.push_back(band0[i]);
    c.values.push_back(band1[i]);
  }
  return c;
}

TEST(Normalize, MinMaxPerBand) {
  const HsiCube n = normalize(band_cube({0, 5, 10}, {7, 7, 7}));
  EXPECT_EQ(n.value(0, 0), 0.0);
  EXPECT_EQ(n.value(1, 0), 0.5);
  EXPECT_EQ(n.value(2, 0), 1.0);
  for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(n.value(p, 1), 0.0);
}

TEST(Normalize, IdempotentAndInUnitRange) {
  Rng rng(1);
  std::vector<double> a(30), b(30);
  for (auto& v : a) v = rng.uniform(-50, 300);
  for (auto& v : b) v = rng.uniform(1e3, 2e3);
  const HsiCube once = normalize(band_cube(a, b));
  const HsiCube twice = normalize(once);
  EXPECT_EQ(once.values, twice.values);
  for (double v : once.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Split, TableCounts) {
  EXPECT_EQ(labeled_count(20, 0.1), 2u);
  EXPECT_EQ(labeled_count(28, 0.1), 3u);
  EXPECT_EQ(labeled_count(46, 0.1), 5u);
  EXPECT_EQ(labeled_count(1, 0.1), 1u);
}

// Independent integer oracle: round-half-up(n / 10), at least 1.
std::size_t tenth_oracle(std::size_t n) { return std::max<std::size_t>(1, (n + 5) / 10); }

TEST(Split, RoundHalfUpForEveryClassSize) {
  for (std::size_t n = 1; n <= 500; ++n) {
    ASSERT_EQ(labeled_count(n, 0.1), tenth_oracle(n)) << "n=" << n;
    // Quarter ratio: round-half-up(n / 4).
    ASSERT_EQ(labeled_count(n, 0.25), std::max<std::size_t>(1, (n + 2) / 4)) << "n=" << n;
  }
}

TEST(Split, PerClassProportionsExhaustive) {
  // Two classes of sizes n and 501 - n interleaved, every n in 1..500.
  for (std::size_t n = 1; n <= 500; ++n) {
    std::vector<int> labels;
    for (std::size_t i = 0; i < 501; ++i) labels.push_back(i % 501 < n ? 1 : 2);
    std::shuffle(labels.begin(), labels.end(), Rng(n).engine());
    const SplitAssignment s = split_superpixels(labels, 0.1, n);
    ASSERT_EQ(s.flags.size(), labels.size());
    std::map<int, std::size_t> lab;
    for (std::size_t j : s.labeled_nodes()) ++lab[labels[j]];
    ASSERT_EQ(lab[1], tenth_oracle(n)) << n;
    ASSERT_EQ(lab[2], tenth_oracle(501 - n)) << n;
  }
}

TEST(Split, DeterministicAndSeedDependent) {
  std::vector<int> labels(200);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = 1 + static_cast<int>(i % 3);
  const auto a = split_superpixels(labels, 0.1, 5).labeled_nodes();
  EXPECT_EQ(a, split_superpixels(labels, 0.1, 5).labeled_nodes());
  EXPECT_NE(a, split_superpixels(labels, 0.1, 6).labeled_nodes());
}

TEST(Split, UniformOverMembers) {
  // Each of 10 members of a class should be drawn about equally often.
  std::vector<int> labels(10, 1);
  std::vector<int> hits(10, 0);
  const int trials = 20000;
  for (int t = 0; t < trials; ++t)
    for (std::size_t j : split_superpixels(labels, 0.1, static_cast<std::uint64_t>(t)).labeled_nodes()) ++hits[j];
  // Binomial(20000, 0.1): sd ≈ 42; allow 5 sd.
  for (int h : hits) EXPECT_NEAR(h, 2000, 212);
}

TEST(Split, EmptyClassSkipped) {
  const std::vector<int> labels{1, 1, 3, 3, 3};
  const SplitAssignment s = split_superpixels(labels, 0.5, 1);
  EXPECT_EQ(s.labeled_nodes().size(), 1u + 2u);
}

TEST(Synth, NoiseFreeSpectraEqualClassMean) {
  SynthSpec spec;
  spec.classes = 2;
  spec.height = 16;
  spec.width = 16;
  spec.tile = 8;
  spec.noise = 0.0;
  spec.gutter = 1;
  const HsiCube c = synth_dataset(spec);
  std::map<int, std::vector<double>> first;
  for (std::size_t p = 0; p < c.pixels(); ++p) {
    const auto s = c.spectrum(p);
    auto [it, inserted] = first.try_emplace(c.labels[p], s.begin(), s.end());
    if (!inserted) ASSERT_TRUE(std::equal(s.begin(), s.end(), it->second.begin()));
  }
  // Two classes plus the gutter background.
  EXPECT_EQ(first.size(), 3u);
  EXPECT_TRUE(first.contains(0));
}

TEST(Synth, SameSeedSameCube) {
  SynthSpec spec;
  spec.noise = 0.05;
  const HsiCube a = synth_dataset(spec), b = synth_dataset(spec);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.labels, b.labels);
  spec.seed = 99;
  EXPECT_NE(synth_dataset(spec).values, a.values);
}

TEST(Synth, NearestMeanClassifierIsPerfectAtZeroNoise) {
  SynthSpec spec;
  spec.classes = 4;
  spec.noise = 0.0;
  const HsiCube c = synth_dataset(spec);
  std::map<int, std::vector<double>> sum;
  std::map<int, double> count;
  for (std::size_t p = 0; p < c.pixels(); ++p) {
    auto& s = sum[c.labels[p]];
    s.resize(c.bands);
    for (std::size_t b = 0; b < c.bands; ++b) s[b] += c.value(p, b);
    count[c.labels[p]] += 1;
  }
  std::size_t correct = 0;
  for (std::size_t p = 0; p < c.pixels(); ++p) {
    int best = -1;
    double best_d = 1e300;
    for (const auto& [cls, s] : sum) {
      double d = 0;
      for (std::size_t b = 0; b < c.bands; ++b) {
        const double diff = c.value(p, b) - s[b] / count[cls];
        d += diff * diff;
      }
      if (d < best_d) best_d = d, best = cls;
    }
    correct += best == c.labels[p];
  }
  EXPECT_EQ(correct, c.pixels());
  EXPECT_EQ(c.max_label(), 4);
}

TEST(Synth, GutterSeparatesTiles) {
  SynthSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.tile = 16;
  spec.gutter = 2;
  const HsiCube c = synth_dataset(spec);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      const std::size_t oy = y % 16, ox = x % 16;
      const bool border = oy < 2 || ox < 2 || oy >= 14 || ox >= 14;
      EXPECT_EQ(c.labels[y * 32 + x] == 0, border);
    }
}

TEST(Synth, InvalidSpec) {
  SynthSpec spec;
  spec.classes = 0;
  EXPECT_THROW(synth_dataset(spec), ContractError);
  spec = {};
  spec.background_tiles = 100;
  EXPECT_THROW(synth_dataset(spec), ContractError);
}

}  // namespace
}  // namespace blgcn
