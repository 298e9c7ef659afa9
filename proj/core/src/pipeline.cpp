#include "blgcn/pipeline.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "blgcn/checkpoint.hpp"
#include "blgcn/errors.hpp"
#include "blgcn/log.hpp"

#ifndef BLGCN_VERSION
#define BLGCN_VERSION "unknown"
#endif

namespace blgcn {
namespace fs = std::filesystem;

namespace {

// Sub-seeds of one trial, so split, augmentation, initialisation, training
// and evaluation draw from unrelated sequences.
enum class Stage : std::uint64_t { Split = 1, Gan = 2, Init = 3, Train = 4, Eval = 5 };

std::uint64_t stage_seed(std::uint64_t seed, Stage stage) {
  return splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(stage) * 0x9e3779b97f4a7c15ULL));
}

fs::path out_dir(const RunConfig& config) { return fs::path(config.get("out")); }

fs::path input_or_default(const RunConfig& config, const char* key, const char* fallback) {
  const std::string& v = config.get(key);
  return v.empty() ? out_dir(config) / fallback : fs::path(v);
}

void prepare_output(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(out_dir(config), ec);
  if (ec) throw DataError("cannot create output directory " + config.get("out") + ": " + ec.message());
}

void apply_log_level(const RunConfig& config) {
  const std::string& v = config.get("log_level");
  if (v == "debug") logging::set_level(logging::Level::Debug);
  else if (v == "info") logging::set_level(logging::Level::Info);
  else if (v == "warn") logging::set_level(logging::Level::Warn);
  else if (v == "error") logging::set_level(logging::Level::Error);
  else logging::set_level(logging::Level::Off);
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

void write_manifest(const RunConfig& config, const std::string& command, const std::string& status) {
  write_text_file(out_dir(config) / outputs::kManifest, manifest_text(command, config, status));
}

void write_history(const fs::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_history_csv(out, history);
}

HsiCube load_input(const RunConfig& config) {
  const std::string& cube = config.get("cube");
  const std::string& labels = config.get("labels");
  if (cube.empty()) throw ConfigError("config key 'cube' is required");
  if (labels.empty()) throw DataError("no label file given (config key 'labels') for " + cube);
  HsiCube c = load_dataset(cube, labels);
  if (config.flag("normalize")) c = normalize(std::move(c));
  return c;
}

std::vector<std::uint64_t> trial_seeds(const RunConfig& config) {
  const std::uint64_t base = config.u64("seed");
  const auto n = static_cast<std::uint64_t>(std::max<long long>(1, config.integer("trials")));
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < n; ++i) seeds.push_back(base + i);
  return seeds;
}

std::string report_text(const TrialSummary& summary, std::size_t requested,
                        const std::vector<TrialResult>& results) {
  std::ostringstream os;
  write_report(os, summary);
  if (summary.n < requested) {
    os << "completed trials: " << summary.n << " of " << requested << '\n';
  }
  if (results.size() == 1) {
    const auto& r = results.front();
    os << std::fixed << std::setprecision(4);
    os << "stop: epoch " << r.history.stop_epoch << " ("
       << stop_reason_name(r.history.stop_reason) << ")\n";
    os << "mc accuracy: mean " << r.evaluation.ci.mean << ", ci [" << r.evaluation.ci.lower
       << ", " << r.evaluation.ci.upper << "]\n";
  }
  return os.str();
}

void write_trial_outputs(const RunConfig& config, const Preprocessed& prep, const TrialResult& r,
                         const BlgcnModel* model) {
  const fs::path out = out_dir(config);
  save_graph(out / outputs::kGraph, prep.graph);
  save_split(out / outputs::kSplit, prep.split);
  save_node_map(out / outputs::kNodes, prep.nodes);
  write_history(out / outputs::kHistory, r.history);
  emit_map(prep.nodes, r.evaluation.predictions, default_palette(prep.graph.classes),
           out / outputs::kMap);
  if (model) save_checkpoint(out / outputs::kModel, model->to_checkpoint());
}

TrialResult run_trial_impl(Preprocessed& prep, const RunConfig& config, std::uint64_t seed,
                           std::optional<BlgcnModel>* keep_model) {
  TrialResult result;
  result.seed = seed;
  SuperpixelGraph& graph = prep.graph;

  if (config.flag("augment")) {
    GanConfig gan = config.gan();
    gan.seed = stage_seed(seed, Stage::Gan);
    const auto minority = detect_minority(graph.class_counts(), gan.minority_threshold);
    if (minority.empty()) {
      logging::info("augmentation skipped: no minority classes");
    } else {
      result.augmentation = augment_minority(graph, prep.split, gan);
    }
  }

  ModelConfig mc = config.model(graph.features.cols(), graph.classes);
  mc.seed = stage_seed(seed, Stage::Init);
  BlgcnModel model(mc);
  model.set_graph(renormalize(graph.adjacency));

  TrainConfig tc = config.train();
  tc.seed = stage_seed(seed, Stage::Train);
  result.history = train(model, graph, prep.split, tc);

  result.evaluation = evaluate(model, graph, prep.split, tc.eval_samples,
                               stage_seed(seed, Stage::Eval), tc.z, tc.workers);
  result.report = score(graph, prep.split, result.evaluation.predictions,
                        prep.nodes.node.empty() ? nullptr : &prep.nodes,
                        config.flag("pixel_weighted"));
  result.report.ci = result.evaluation.ci;
  if (keep_model) keep_model->emplace(std::move(model));
  return result;
}

void check_inputs_exist(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw DataError(std::string(what) + " not found: " + path.string());
}

}  // namespace

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) {
    return kExitData;
  }
  if (dynamic_cast<const ContractError*>(&e)) return kExitConfig;
  return kExitFailure;
}

void write_split(std::ostream& out, const SplitAssignment& split) {
  out << "# blgcn-split nodes " << split.flags.size() << '\n';
  for (std::size_t i = 0; i < split.flags.size(); ++i)
    out << i << ' ' << (split.labeled(i) ? 'L' : 'U') << '\n';
}

void save_split(const fs::path& path, const SplitAssignment& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_split(out, split);
}

SplitAssignment read_split(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  std::uint64_t offset = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "# blgcn-split nodes %zu", &n) != 1) {
    throw FormatError("split: missing '# blgcn-split nodes N' header", 0);
  }
  offset += line.size() + 1;
  SplitAssignment split;
  split.flags.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw FormatError("split: expected " + std::to_string(n) + " node lines", offset);
    std::istringstream ls(line);
    std::size_t id = 0;
    char flag = 0;
    if (!(ls >> id >> flag) || id != i || (flag != 'L' && flag != 'U')) {
      throw FormatError("split: malformed node line '" + line + "'", offset);
    }
    split.flags.push_back(flag == 'L' ? SplitFlag::Labeled : SplitFlag::Unlabeled);
    offset += line.size() + 1;
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      throw FormatError("split: trailing content", offset);
    }
    offset += line.size() + 1;
  }
  return split;
}

SplitAssignment load_split(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read split file " + path.string());
  try {
    return read_split(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

Preprocessed preprocess(const HsiCube& cube, const RunConfig& config, std::uint64_t seed) {
  Preprocessed p;
  const Segmentation seg = slic_segment(cube, config.slic());
  p.graph = build_graph(seg, cube);
  p.split = split_superpixels(p.graph.labels, config.number("train_ratio"),
                              stage_seed(seed, Stage::Split));
  p.nodes = node_map(seg, p.graph);
  logging::info("preprocess: " + std::to_string(seg.count) + " superpixels, " +
            std::to_string(p.graph.nodes()) + " labeled nodes, " +
            std::to_string(p.graph.classes) + " classes");
  return p;
}

Preprocessed preprocess(const RunConfig& config, std::uint64_t seed) {
  return preprocess(load_input(config), config, seed);
}

TrialResult run_trial(Preprocessed& prep, const RunConfig& config, std::uint64_t seed) {
  return run_trial_impl(prep, config, seed, nullptr);
}

ClassificationReport score(const SuperpixelGraph& graph, const SplitAssignment& split,
                           std::span<const int> predictions, const NodeMap* nodes,
                           bool pixel_weighted) {
  std::vector<double> pixels;
  if (pixel_weighted) {
    if (!nodes) throw DataError("pixel-weighted metrics need the pixel-to-node map");
    pixels.assign(graph.nodes(), 0.0);
    for (int n : nodes->node)
      if (n >= 0 && static_cast<std::size_t>(n) < pixels.size()) pixels[static_cast<std::size_t>(n)] += 1.0;
  }
  std::vector<int> pred, truth;
  std::vector<double> weights;
  for (std::size_t j : split.unlabeled_nodes()) {
    pred.push_back(predictions[j]);
    truth.push_back(graph.labels[j]);
    if (pixel_weighted) weights.push_back(pixels[j]);
  }
  return compute_metrics(pred, truth, graph.classes, weights);
}

void cmd_synth(const RunConfig& config) {
  prepare_output(config);
  const HsiCube cube = synth_dataset(config.synth());
  save_cube(out_dir(config) / outputs::kCube, cube);
  save_labels(out_dir(config) / outputs::kLabels, cube.height, cube.width, cube.labels);
  write_manifest(config, "synth", "ok");
}

void cmd_preprocess(const RunConfig& config) {
  prepare_output(config);
  const Preprocessed p = preprocess(config, config.u64("seed"));
  const fs::path out = out_dir(config);
  save_graph(out / outputs::kGraph, p.graph);
  save_split(out / outputs::kSplit, p.split);
  save_node_map(out / outputs::kNodes, p.nodes);
  write_manifest(config, "preprocess", "ok");
}

void cmd_augment(const RunConfig& config) {
  prepare_output(config);
  const fs::path graph_path = input_or_default(config, "graph", outputs::kGraph);
  const fs::path split_path = input_or_default(config, "split", outputs::kSplit);
  check_inputs_exist(graph_path, "graph file");
  check_inputs_exist(split_path, "split file");
  SuperpixelGraph graph = load_graph(graph_path);
  SplitAssignment split = load_split(split_path);
  GanConfig gan = config.gan();
  gan.seed = stage_seed(config.u64("seed"), Stage::Gan);
  const auto minority = detect_minority(graph.class_counts(), gan.minority_threshold);
  if (minority.empty()) {
    logging::info("augmentation skipped: no minority classes");
  } else {
    augment_minority(graph, split, gan);
  }
  save_graph(out_dir(config) / outputs::kGraph, graph);
  save_split(out_dir(config) / outputs::kSplit, split);
  write_manifest(config, "augment", "ok");
}

void cmd_train(const RunConfig& config) {
  prepare_output(config);
  const fs::path graph_path = input_or_default(config, "graph", outputs::kGraph);
  const fs::path split_path = input_or_default(config, "split", outputs::kSplit);
  check_inputs_exist(graph_path, "graph file");
  check_inputs_exist(split_path, "split file");
  const SuperpixelGraph graph = load_graph(graph_path);
  const SplitAssignment split = load_split(split_path);
  const std::uint64_t seed = config.u64("seed");

  ModelConfig mc = config.model(graph.features.cols(), graph.classes);
  mc.seed = stage_seed(seed, Stage::Init);
  BlgcnModel model(mc);
  model.set_graph(renormalize(graph.adjacency));
  TrainConfig tc = config.train();
  tc.seed = stage_seed(seed, Stage::Train);
  const TrainHistory history = train(model, graph, split, tc);
  save_checkpoint(out_dir(config) / outputs::kModel, model.to_checkpoint());
  write_history(out_dir(config) / outputs::kHistory, history);
  write_manifest(config, "train", "ok");
}

void cmd_evaluate(const RunConfig& config) {
  prepare_output(config);
  const fs::path graph_path = input_or_default(config, "graph", outputs::kGraph);
  const fs::path split_path = input_or_default(config, "split", outputs::kSplit);
  const fs::path model_path = input_or_default(config, "checkpoint", outputs::kModel);
  const fs::path nodes_path = input_or_default(config, "nodes", outputs::kNodes);
  check_inputs_exist(graph_path, "graph file");
  check_inputs_exist(split_path, "split file");
  check_inputs_exist(model_path, "checkpoint");
  const SuperpixelGraph graph = load_graph(graph_path);
  const SplitAssignment split = load_split(split_path);
  BlgcnModel model = BlgcnModel::from_checkpoint(load_checkpoint(model_path));
  model.set_graph(renormalize(graph.adjacency));

  std::optional<NodeMap> nodes;
  if (fs::exists(nodes_path)) nodes = load_node_map(nodes_path);

  TrialResult r;
  r.seed = config.u64("seed");
  const TrainConfig tc = config.train();
  r.evaluation = evaluate(model, graph, split, tc.eval_samples, stage_seed(r.seed, Stage::Eval),
                          tc.z, tc.workers);
  r.report = score(graph, split, r.evaluation.predictions, nodes ? &*nodes : nullptr,
                   config.flag("pixel_weighted"));
  r.report.ci = r.evaluation.ci;

  const std::vector<ClassificationReport> reports{r.report};
  std::ostringstream os;
  write_report(os, aggregate_trials(reports));
  os << std::fixed << std::setprecision(4) << "mc accuracy: mean " << r.evaluation.ci.mean
     << ", ci [" << r.evaluation.ci.lower << ", " << r.evaluation.ci.upper << "]\n";
  write_text_file(out_dir(config) / outputs::kReport, os.str());
  if (nodes) {
    emit_map(*nodes, r.evaluation.predictions, default_palette(graph.classes),
             out_dir(config) / outputs::kMap);
  }
  write_manifest(config, "evaluate", "ok");
}

TrialSummary cmd_trials(const RunConfig& config, int n) {
  if (n < 1) throw ConfigError("trials: need at least one trial");
  prepare_output(config);
  RunConfig cfg = config;
  cfg.set("trials", std::to_string(n));
  const HsiCube cube = load_input(cfg);
  const std::vector<std::uint64_t> seeds = trial_seeds(cfg);

  std::vector<TrialResult> results;
  std::vector<ClassificationReport> reports;
  std::ostringstream table;
  table << "trial,seed,status,oa,aa,kappa,stop_epoch,stop_reason\n";
  table << std::setprecision(10);
  bool outputs_written = false;
  std::string first_error;
  int first_code = kExitOk;

  for (std::size_t i = 0; i < seeds.size(); ++i) {
    try {
      Preprocessed prep = preprocess(cube, cfg, seeds[i]);
      std::optional<BlgcnModel> model;
      TrialResult r = run_trial_impl(prep, cfg, seeds[i], &model);
      logging::info("trial " + std::to_string(i) + " (seed " + std::to_string(seeds[i]) +
                "): OA " + std::to_string(r.report.oa));
      table << i << ',' << seeds[i] << ",ok," << r.report.oa << ',' << r.report.aa << ','
            << r.report.kappa << ',' << r.history.stop_epoch << ','
            << stop_reason_name(r.history.stop_reason) << '\n';
      if (!outputs_written) {
        write_trial_outputs(cfg, prep, r, model ? &*model : nullptr);
        outputs_written = true;
      }
      reports.push_back(r.report);
      results.push_back(std::move(r));
    } catch (const std::exception& e) {
      logging::error("trial " + std::to_string(i) + " (seed " + std::to_string(seeds[i]) +
                 ") failed: " + e.what());
      table << i << ',' << seeds[i] << ",failed,,,,,\n";
      if (first_error.empty()) {
        first_error = e.what();
        first_code = exit_code_for(e);
      }
    }
  }
  write_text_file(out_dir(cfg) / outputs::kTrials, table.str());
  if (reports.empty()) {
    const std::string msg = "all " + std::to_string(n) + " trials failed; first error: " + first_error;
    if (first_code == kExitNumeric) throw NumericError(msg);
    if (first_code == kExitData) throw DataError(msg);
    if (first_code == kExitConfig) throw ConfigError(msg);
    throw std::runtime_error(msg);
  }
  const TrialSummary summary = aggregate_trials(reports);
  write_text_file(out_dir(cfg) / outputs::kReport,
                  report_text(summary, seeds.size(),
                              seeds.size() == 1 ? results : std::vector<TrialResult>{}));
  write_manifest(cfg, n == 1 ? "pipeline" : "trials",
                 reports.size() == seeds.size()
                     ? "ok"
                     : "partial (" + std::to_string(reports.size()) + " of " +
                           std::to_string(seeds.size()) + " trials completed)");
  return summary;
}

void cmd_pipeline(const RunConfig& config) {
  cmd_trials(config, static_cast<int>(config.integer("trials")));
}

std::vector<std::string> command_names() {
  return {"synth", "preprocess", "augment", "train", "evaluate", "pipeline", "trials"};
}

int run_command(const std::string& name, const RunConfig& config, std::ostream& err) {
  try {
    config.validate();
    apply_log_level(config);
    if (name == "synth") cmd_synth(config);
    else if (name == "preprocess") cmd_preprocess(config);
    else if (name == "augment") cmd_augment(config);
    else if (name == "train") cmd_train(config);
    else if (name == "evaluate") cmd_evaluate(config);
    else if (name == "pipeline") cmd_pipeline(config);
    else if (name == "trials") cmd_trials(config, static_cast<int>(config.integer("trials")));
    else throw ConfigError("unknown command '" + name + "'");
    return kExitOk;
  } catch (const std::exception& e) {
    err << "blgcn " << name << ": error: " << e.what() << '\n';
    const int code = exit_code_for(e);
    try {
      if (fs::is_directory(out_dir(config))) {
        write_manifest(config, name, std::string("failed (exit ") + std::to_string(code) + "): " + e.what());
      }
    } catch (...) {
    }
    return code;
  }
}

std::uint32_t file_crc32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = in.gcount();
    if (got > 0) crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(got));
  }
  return static_cast<std::uint32_t>(crc);
}

std::string manifest_text(const std::string& command, const RunConfig& config,
                          const std::string& status) {
  std::ostringstream os;
  os << "# blgcn manifest\n";
  os << "# version " << BLGCN_VERSION << '\n';
  os << "# command " << command << '\n';
  os << "# status " << status << '\n';
  os << "# trial_seeds";
  for (std::uint64_t s : trial_seeds(config)) os << ' ' << s;
  os << '\n';
  for (const char* key : {"cube", "labels", "graph", "split", "nodes", "checkpoint"}) {
    const std::string& v = config.get(key);
    if (v.empty() || !fs::is_regular_file(v)) continue;
    os << "# input " << key << ' ' << v << " bytes " << fs::file_size(v) << " crc32 " << std::hex
       << std::setw(8) << std::setfill('0') << file_crc32(v) << std::dec << std::setfill(' ')
       << '\n';
  }
  os << config.snapshot();
  return os.str();
}

}  // namespace blgcn
