#include "blgcn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "blgcn/errors.hpp"

namespace blgcn {
namespace {

constexpr ConfigKey kKeys[] = {
    // paths
    {"cube", "", "input cube (BLG1)"},
    {"labels", "", "input label map (BLGL)"},
    {"graph", "", "graph export to read instead of segmenting (train/evaluate/augment)"},
    {"split", "", "split file to read (defaults to <out>/split.txt when a graph is read)"},
    {"nodes", "", "pixel-to-node map for rendering (defaults to <out>/nodes.txt)"},
    {"checkpoint", "", "model checkpoint to read (evaluate)"},
    {"out", "out", "output directory"},
    {"seed", "1", "base seed for split, augmentation, initialisation and sampling"},
    {"workers", "0", "threads for Monte-Carlo passes (0 = hardware); results do not depend on it"},
    {"log_level", "warn", "debug | info | warn | error | off"},
    // preprocessing
    {"normalize", "1", "per-band min-max scaling of the cube before segmentation"},
    {"superpixels", "100", "target superpixel count K"},
    {"compactness", "0.08", "SLIC compactness m"},
    {"slic_iters", "10", "SLIC iterations"},
    {"slic_jitter", "0", "random offset of SLIC grid seeds as a fraction of the grid step"},
    {"train_ratio", "0.1", "labeled fraction per class"},
    // augmentation
    {"augment", "1", "run minority augmentation when minority classes exist"},
    {"gan_epochs", "2000", "GAN training epochs"},
    {"gan_lr", "1e-7", "GAN learning rate"},
    {"gan_hidden", "32", "discriminator hidden width"},
    {"gan_g_std", "1e-5", "generator init noise std around 1"},
    {"gan_d_std", "0.01", "discriminator init std"},
    {"gan_minority", "0.02", "minority threshold as a fraction of the largest class"},
    {"gan_fill", "0.05", "fill target as a fraction of the largest class"},
    {"gan_order", "sequential", "sequential | shuffled tiling of minority samples"},
    // model
    {"hidden", "128", "feature-extraction width"},
    {"hidden2", "64", "first Bayesian graph layer width"},
    {"dropout", "0.2", "dropout after feature extraction"},
    {"rho_init", "-5", "initial rho of Bayesian layers"},
    {"prior_std", "1", "std of the Gaussian weight prior"},
    {"kl_scale", "1", "weight of log q - log p in the loss"},
    {"use_graph", "1", "0 replaces the adjacency operator by the identity"},
    // training
    {"epochs", "4000", "epoch budget"},
    {"lr", "1e-3", "initial learning rate"},
    {"lr_gamma", "0.9", "learning rate decay factor"},
    {"lr_milestones", "1500,2500,3500", "epochs at which the rate decays"},
    {"weight_decay", "5e-4", "decoupled weight decay (not applied to rho)"},
    {"train_samples", "1", "weight samples per training step"},
    {"pseudo_threshold", "0.9", "confidence needed for a pseudo-label"},
    {"pseudo_start", "500", "first pseudo-label refresh epoch"},
    {"pseudo_every", "100", "pseudo-label refresh cadence (0 disables)"},
    {"pseudo_samples", "5", "Monte-Carlo passes per pseudo-label refresh"},
    {"dynamic", "1", "two-threshold dynamic stopping"},
    {"t1", "0.9", "single-pass validation accuracy gate"},
    {"t2", "0.95", "confidence-interval upper bound needed to stop"},
    {"z", "1.96", "normal quantile of the confidence interval"},
    {"eval_samples", "30", "Monte-Carlo passes for the interval and final evaluation"},
    {"gate_class", "0", "0 gates on overall accuracy, c > 0 on class c only"},
    // reporting
    {"pixel_weighted", "0", "weight each superpixel by its pixel count in the metrics"},
    {"trials", "1", "independent runs with seeds seed+0..trials-1"},
    // synthetic data
    {"synth_classes", "4", "synthetic class count"},
    {"synth_height", "96", "synthetic cube height"},
    {"synth_width", "96", "synthetic cube width"},
    {"synth_bands", "16", "synthetic band count"},
    {"synth_tile", "24", "synthetic tile edge in pixels"},
    {"synth_noise", "0.02", "per-value noise std of synthetic spectra"},
    {"synth_weights", "", "comma-separated relative tile share per class"},
    {"synth_background", "0", "synthetic tiles left as background"},
    {"synth_gutter", "2", "background border in pixels inside every synthetic tile edge"},
    {"synth_seed", "1", "synthetic data seed"},
};

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : kKeys)
    if (name == k.name) return &k;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw ConfigError("config key '" + key + "': '" + text + "' is not a valid number");
  }
  return value;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

std::span<const ConfigKey> config_keys() { return kKeys; }

RunConfig::RunConfig() {
  for (const auto& k : kKeys) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

bool RunConfig::is_default(const std::string& key) const {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  return get(key) == k->default_value;
}

void RunConfig::merge_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("expected key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::merge_text(std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      merge_assignment(t);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  merge_text(in, path.string());
}

double RunConfig::number(const std::string& key) const {
  return parse_number<double>(key, get(key));
}

long long RunConfig::integer(const std::string& key) const {
  return parse_number<long long>(key, get(key));
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key));
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : split_list(get(key))) out.push_back(parse_number<int>(key, item));
  return out;
}

std::vector<double> RunConfig::double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key))) out.push_back(parse_number<double>(key, item));
  return out;
}

std::string RunConfig::snapshot() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

SlicParams RunConfig::slic() const {
  SlicParams p;
  p.superpixels = static_cast<int>(integer("superpixels"));
  p.compactness = number("compactness");
  p.iterations = static_cast<int>(integer("slic_iters"));
  p.jitter = number("slic_jitter");
  p.seed = u64("seed");
  return p;
}

GanConfig RunConfig::gan() const {
  GanConfig g;
  g.epochs = static_cast<int>(integer("gan_epochs"));
  g.learning_rate = number("gan_lr");
  g.discriminator_hidden = static_cast<std::size_t>(integer("gan_hidden"));
  g.generator_init_std = number("gan_g_std");
  g.discriminator_init_std = number("gan_d_std");
  g.minority_threshold = number("gan_minority");
  g.fill_target = number("gan_fill");
  const std::string& order = get("gan_order");
  if (order == "sequential") {
    g.order = TileOrder::Sequential;
  } else if (order == "shuffled") {
    g.order = TileOrder::Shuffled;
  } else {
    throw ConfigError("config key 'gan_order': expected sequential or shuffled, got '" + order +
                      "'");
  }
  g.seed = u64("seed");
  return g;
}

ModelConfig RunConfig::model(std::size_t in_dim, int classes) const {
  ModelConfig m;
  m.in_dim = in_dim;
  m.classes = classes;
  m.hidden = static_cast<std::size_t>(integer("hidden"));
  m.hidden2 = static_cast<std::size_t>(integer("hidden2"));
  m.dropout = number("dropout");
  m.rho_init = number("rho_init");
  m.prior.std = number("prior_std");
  m.graph_conv = flag("use_graph");
  m.seed = u64("seed");
  return m;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.max_epochs = static_cast<int>(integer("epochs"));
  t.schedule.initial = number("lr");
  t.schedule.gamma = number("lr_gamma");
  t.schedule.milestones = int_list("lr_milestones");
  t.weight_decay = number("weight_decay");
  t.kl_scale = number("kl_scale");
  t.train_samples = static_cast<int>(integer("train_samples"));
  t.pseudo_threshold = number("pseudo_threshold");
  t.pseudo_start = static_cast<int>(integer("pseudo_start"));
  t.pseudo_every = static_cast<int>(integer("pseudo_every"));
  t.pseudo_samples = static_cast<int>(integer("pseudo_samples"));
  t.dynamic_control = flag("dynamic");
  t.t1 = number("t1");
  t.t2 = number("t2");
  t.z = number("z");
  t.eval_samples = static_cast<int>(integer("eval_samples"));
  t.gate_class = static_cast<int>(integer("gate_class"));
  t.seed = u64("seed");
  t.workers = static_cast<unsigned>(integer("workers"));
  return t;
}

SynthSpec RunConfig::synth() const {
  SynthSpec s;
  s.classes = static_cast<int>(integer("synth_classes"));
  s.height = static_cast<std::size_t>(integer("synth_height"));
  s.width = static_cast<std::size_t>(integer("synth_width"));
  s.bands = static_cast<std::size_t>(integer("synth_bands"));
  s.tile = static_cast<std::size_t>(integer("synth_tile"));
  s.noise = number("synth_noise");
  s.class_weights = double_list("synth_weights");
  s.background_tiles = static_cast<std::size_t>(integer("synth_background"));
  s.gutter = static_cast<std::size_t>(integer("synth_gutter"));
  s.seed = u64("synth_seed");
  return s;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  auto positive_int = [&](const char* key) {
    require(integer(key) >= 1, std::string("config key '") + key + "' must be >= 1");
  };
  auto non_negative_int = [&](const char* key) {
    require(integer(key) >= 0, std::string("config key '") + key + "' must be >= 0");
  };
  for (const char* k : {"superpixels", "slic_iters", "hidden", "hidden2", "epochs",
                        "train_samples", "eval_samples", "pseudo_samples", "trials", "gan_hidden",
                        "synth_classes", "synth_height", "synth_width", "synth_bands",
                        "synth_tile"})
    positive_int(k);
  for (const char* k : {"workers", "gan_epochs", "pseudo_start", "pseudo_every", "gate_class",
                        "synth_background", "synth_gutter"})
    non_negative_int(k);
  const double ratio = number("train_ratio");
  require(ratio > 0.0 && ratio <= 1.0, "config key 'train_ratio' must lie in (0, 1]");
  const double dropout = number("dropout");
  require(dropout >= 0.0 && dropout < 1.0, "config key 'dropout' must lie in [0, 1)");
  require(number("compactness") >= 0.0, "config key 'compactness' must be >= 0");
  require(number("lr") > 0.0, "config key 'lr' must be positive");
  require(number("gan_lr") > 0.0, "config key 'gan_lr' must be positive");
  require(number("prior_std") > 0.0, "config key 'prior_std' must be positive");
  require(number("z") > 0.0, "config key 'z' must be positive");
  require(number("t1") <= number("t2"), "config keys: t1 must not exceed t2");
  const double pt = number("pseudo_threshold");
  require(pt > 0.5 && pt <= 1.0, "config key 'pseudo_threshold' must lie in (0.5, 1]");
  const double amin = number("gan_minority"), afill = number("gan_fill");
  require(amin > 0.0 && amin <= afill && afill < 1.0,
          "config keys: need 0 < gan_minority <= gan_fill < 1");
  const std::string& level = get("log_level");
  require(level == "debug" || level == "info" || level == "warn" || level == "error" ||
              level == "off",
          "config key 'log_level' must be debug, info, warn, error or off");
  (void)int_list("lr_milestones");
  (void)u64("seed");
  (void)u64("synth_seed");
  (void)flag("normalize");
  (void)flag("augment");
  (void)flag("use_graph");
  (void)flag("dynamic");
  (void)flag("pixel_weighted");
  (void)gan();
  (void)synth();
}

std::string config_help() {
  std::size_t width = 0;
  for (const auto& k : kKeys) width = std::max(width, std::string(k.name).size());
  std::ostringstream os;
  for (const auto& k : kKeys) {
    std::string name = k.name;
    os << "  " << name << std::string(width - name.size() + 2, ' ') << k.help
       << " (default: " << (k.default_value[0] ? k.default_value : "none") << ")\n";
  }
  return os.str();
}

}  // namespace blgcn
