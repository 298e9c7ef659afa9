#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blgcn/config.hpp"
#include "blgcn/gan_augment.hpp"
#include "blgcn/hsi_io.hpp"
#include "blgcn/metrics.hpp"
#include "blgcn/model.hpp"
#include "blgcn/superpixel.hpp"
#include "blgcn/trainer.hpp"

namespace blgcn {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

/// Maps an exception to the documented exit code.
int exit_code_for(const std::exception& e) noexcept;

// Fixed output names under the output directory.
namespace outputs {
inline constexpr const char* kGraph = "graph.txt";
inline constexpr const char* kSplit = "split.txt";
inline constexpr const char* kNodes = "nodes.txt";
inline constexpr const char* kHistory = "history.csv";
inline constexpr const char* kReport = "report.txt";
inline constexpr const char* kMap = "map.ppm";
inline constexpr const char* kManifest = "manifest.txt";
inline constexpr const char* kModel = "model.bin";
inline constexpr const char* kTrials = "trials.csv";
inline constexpr const char* kCube = "cube.blg";
inline constexpr const char* kLabels = "labels.blgl";
}  // namespace outputs

// Split text format: "# blgcn-split nodes N" then one "id L|U" line per node.
void write_split(std::ostream& out, const SplitAssignment& split);
void save_split(const std::filesystem::path& path, const SplitAssignment& split);
SplitAssignment read_split(std::istream& in);
SplitAssignment load_split(const std::filesystem::path& path);

struct Preprocessed {
  SuperpixelGraph graph;
  SplitAssignment split;
  NodeMap nodes;
};

// Loads (and optionally normalises) the cube, segments it and builds the
// graph and split under `seed`.
Preprocessed preprocess(const RunConfig& config, std::uint64_t seed);
Preprocessed preprocess(const HsiCube& cube, const RunConfig& config, std::uint64_t seed);

struct TrialResult {
  std::uint64_t seed = 0;
  AugmentSummary augmentation;
  TrainHistory history;
  Evaluation evaluation;
  ClassificationReport report;
};

/// Augment (when enabled and minority classes exist), train and evaluate on
/// an already preprocessed graph. `prep` is modified by augmentation.
TrialResult run_trial(Preprocessed& prep, const RunConfig& config, std::uint64_t seed);

/// Test-node metrics (unlabeled, non-generated nodes), optionally weighted
/// by pixel count from the node map.
ClassificationReport score(const SuperpixelGraph& graph, const SplitAssignment& split,
                           std::span<const int> predictions, const NodeMap* nodes,
                           bool pixel_weighted);

// Subcommands. Each writes its outputs and a manifest under config "out" and
// throws on failure; run_command wraps them with exit-code mapping.
void cmd_synth(const RunConfig& config);
void cmd_preprocess(const RunConfig& config);
void cmd_augment(const RunConfig& config);
void cmd_train(const RunConfig& config);
void cmd_evaluate(const RunConfig& config);
void cmd_pipeline(const RunConfig& config);
TrialSummary cmd_trials(const RunConfig& config, int n);

std::vector<std::string> command_names();

/// Runs a subcommand by name, returning an exit code. Errors are written to
/// `err` and recorded as a failed status in the manifest.
int run_command(const std::string& name, const RunConfig& config, std::ostream& err);

/// Manifest text: "# ..." metadata lines (command, status, seeds, input
/// checksums) followed by the full config snapshot, so that passing the
/// manifest back as a config file reproduces the run.
std::string manifest_text(const std::string& command, const RunConfig& config,
                          const std::string& status);

/// CRC-32 of a file's bytes.
std::uint32_t file_crc32(const std::filesystem::path& path);

}  // namespace blgcn
