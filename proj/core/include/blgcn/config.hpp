#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "blgcn/gan_augment.hpp"
#include "blgcn/hsi_io.hpp"
#include "blgcn/model.hpp"
#include "blgcn/superpixel.hpp"
#include "blgcn/trainer.hpp"

namespace blgcn {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

/// Every recognised key with its default, in documentation order.
std::span<const ConfigKey> config_keys();

/// Flat key=value run configuration. All keys always hold a value (the
/// default until overridden); unknown keys are rejected with ConfigError.
class RunConfig {
 public:
  RunConfig();

  // Lines "key = value"; blank lines and lines starting with '#' are
  // ignored. Later assignments win.
  void merge_text(std::istream& in, const std::string& source = "<text>");
  void merge_file(const std::filesystem::path& path);
  // "key=value" as given on the command line.
  void merge_assignment(const std::string& assignment);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool is_default(const std::string& key) const;

  double number(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;
  std::vector<double> double_list(const std::string& key) const;

  // Sorted "key = value" lines; round-trips through merge_text.
  std::string snapshot() const;

  SlicParams slic() const;
  GanConfig gan() const;
  ModelConfig model(std::size_t in_dim, int classes) const;
  TrainConfig train() const;
  SynthSpec synth() const;

  // Checks numeric keys parse and lie in range; throws ConfigError.
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
};

/// One help line per key: "  name (default: value)  help".
std::string config_help();

}  // namespace blgcn
