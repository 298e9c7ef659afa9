#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blgcn/matrix.hpp"
#include "blgcn/superpixel.hpp"
#include "blgcn/trainer.hpp"

namespace blgcn {

struct ClassificationReport {
  int classes = 0;
  Matrix confusion;                 // classes × classes, rows = truth
  std::vector<double> per_class;    // C[i][i] / row_i, 0 for absent classes
  std::vector<bool> present;        // row_i > 0
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
  std::optional<ConfidenceInterval> ci;
};

/// Labels are 1-based in 1..classes. `weights`, when given, weights each
/// pair (e.g. by superpixel pixel count); otherwise every pair counts 1.
/// AA averages over classes present in the truth only. When p_e = 1 the
/// Kappa is 1 if p_o = 1 and 0 otherwise.
ClassificationReport compute_metrics(std::span<const int> predicted, std::span<const int> truth,
                                     int classes, std::span<const double> weights = {});

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample std, 0 for a single trial
};

struct TrialSummary {
  std::size_t n = 0;
  int classes = 0;
  std::vector<MetricSummary> per_class;
  std::vector<std::size_t> per_class_n;  // trials in which the class was present
  MetricSummary oa, aa, kappa;
};

MetricSummary summarize(std::span<const double> values);
TrialSummary aggregate_trials(std::span<const ClassificationReport> reports);

// Aligned text table: one row per class, then OA, AA and Kappa, with
// "mean±std" cells in percent. Kappa is scaled by 100 like the others.
void write_report(std::ostream& out, const TrialSummary& summary,
                  std::span<const std::string> class_names = {});
std::string format_report(const TrialSummary& summary,
                          std::span<const std::string> class_names = {});

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed 16-color palette cycled by class id; index 0 (background) is black.
std::vector<Rgb> default_palette(int classes);

/// Binary P6 pixmap, one pixel per cube pixel. Pixels of dropped
/// superpixels are black; others take palette[predictions[node]].
void emit_map(const NodeMap& map, std::span<const int> predictions, std::span<const Rgb> palette,
              const std::filesystem::path& path);
std::vector<std::uint8_t> render_map(const NodeMap& map, std::span<const int> predictions,
                                     std::span<const Rgb> palette);

}  // namespace blgcn
