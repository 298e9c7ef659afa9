#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "blgcn/config.hpp"
#include "blgcn/errors.hpp"
#include "blgcn/pipeline.hpp"

namespace {

struct Options {
  std::vector<std::string> config_files;
  std::vector<std::string> overrides;
  std::string out;
  int trials = 0;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("-c,--config", opt.config_files, "key=value config file (repeatable, later wins)");
  cmd->add_option("-s,--set", opt.overrides, "override one key, e.g. --set superpixels=200");
  cmd->add_option("-o,--out", opt.out, "output directory (same as --set out=DIR)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian graph convolutional classification of hyperspectral images"};
  app.require_subcommand(1);
  app.footer("Config keys:\n" + blgcn::config_help() +
             "\nExit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.");

  Options opt;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "write a synthetic tiled cube and label map"},
      {"preprocess", "segment the cube and write the graph, split and node map"},
      {"augment", "fill minority classes of a graph with generated nodes"},
      {"train", "train on a graph and split, writing the checkpoint and history"},
      {"evaluate", "Monte-Carlo evaluation of a checkpoint, writing the report and map"},
      {"pipeline", "preprocess, augment, train and evaluate in one run"},
      {"trials", "repeat the pipeline over seeds seed+0..n-1 and aggregate"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, opt);
    if (name == "pipeline" || name == "trials") {
      cmd->add_option("-n,--trials", opt.trials, "number of independent runs");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : blgcn::kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  blgcn::RunConfig config;
  try {
    for (const auto& f : opt.config_files) config.merge_file(f);
    for (const auto& a : opt.overrides) config.merge_assignment(a);
    if (!opt.out.empty()) config.set("out", opt.out);
    if (opt.trials > 0) config.set("trials", std::to_string(opt.trials));
  } catch (const blgcn::ConfigError& e) {
    std::cerr << "blgcn " << name << ": error: " << e.what() << '\n';
    return blgcn::kExitConfig;
  }
  return blgcn::run_command(name, config, std::cerr);
}
