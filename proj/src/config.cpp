#include "dropcluster/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dropcluster {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

}  // namespace

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  for (const auto& item : split_csv(csv)) out.push_back(std::stoi(item));
  return out;
}

void ExperimentConfig::apply(const std::string& key, const std::string& value) {
  if (key == "dataset") dataset = value;
  else if (key == "cifar_train_path") cifar_train_path = value;
  else if (key == "cifar_test_path") cifar_test_path = value;
  else if (key == "synthetic_train_n") synthetic_train_n = std::stoi(value);
  else if (key == "synthetic_test_n") synthetic_test_n = std::stoi(value);
  else if (key == "synthetic_classes") synthetic_classes = std::stoi(value);
  else if (key == "synthetic_channels") synthetic_channels = std::stoi(value);
  else if (key == "synthetic_noise") synthetic_noise = std::stod(value);
  else if (key == "train_fraction") train_fraction = std::stod(value);
  else if (key == "augment") augment = parse_bool(value);
  else if (key == "arch") arch = value;
  else if (key == "epochs") epochs = std::stoi(value);
  else if (key == "batch_size") batch_size = std::stoi(value);
  else if (key == "lr") lr = std::stod(value);
  else if (key == "momentum") momentum = std::stod(value);
  else if (key == "weight_decay") weight_decay = std::stod(value);
  else if (key == "lr_decay") lr_decay = std::stod(value);
  else if (key == "milestones") milestones = parse_int_list(value);
  else if (key == "regularizer") regularizer = value;
  else if (key == "p") p = std::stod(value);
  else if (key == "n_clusters") n_clusters = std::stoi(value);
  else if (key == "s") s = std::stoi(value);
  else if (key == "block_size") block_size = std::stoi(value);
  else if (key == "normalize_at_inference") normalize_at_inference = parse_bool(value);
  else if (key == "rena_max_iter") rena_max_iter = std::stoi(value);
  else if (key == "corrupt_kinds") corrupt_kinds = value;
  else if (key == "severities") severities = value;
  else if (key == "gaussian_sigmas") gaussian_sigmas = value;
  else if (key == "shot_rates") shot_rates = value;
  else if (key == "impulse_fractions") impulse_fractions = value;
  else if (key == "defocus_radii") defocus_radii = value;
  else if (key == "tendency_samples") tendency_samples = std::stoi(value);
  else if (key == "histogram_bins") histogram_bins = std::stoi(value);
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "final_window") final_window = std::stoi(value);
  else if (key == "out_dir") out_dir = value;
  else throw std::invalid_argument("unknown config key: " + key);
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": expected key=value");
    cfg.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& key_values) {
  for (const auto& kv : key_values) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must be key=value: " + kv);
    cfg.apply(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

TrainConfig ExperimentConfig::to_train_config() const {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch_size;
  tc.lr = lr;
  tc.momentum = momentum;
  tc.weight_decay = weight_decay;
  tc.lr_decay = lr_decay;
  tc.milestones = milestones;
  tc.regularizer = reg_kind_from_string(regularizer);
  tc.p = p;
  tc.n_clusters = n_clusters;
  tc.s = s;
  tc.block_size = block_size;
  tc.normalize_at_inference = normalize_at_inference;
  tc.rena_max_iter = rena_max_iter;
  tc.seed = seed;
  tc.final_window = final_window;
  tc.augment = augment;
  return tc;
}

CorruptionLadders ExperimentConfig::corruption_ladders() const {
  CorruptionLadders ladders;
  auto fill = [](const std::string& csv, auto& target) {
    if (csv.empty()) return;
    const auto items = split_csv(csv);
    if (items.size() != target.size())
      throw std::invalid_argument("severity ladder needs exactly 5 values: " + csv);
    for (std::size_t i = 0; i < items.size(); ++i)
      target[i] = static_cast<typename std::decay_t<decltype(target)>::value_type>(
          std::stod(items[i]));
  };
  fill(gaussian_sigmas, ladders.gaussian_sigma);
  fill(shot_rates, ladders.shot_rate);
  fill(impulse_fractions, ladders.impulse_fraction);
  fill(defocus_radii, ladders.defocus_radius);
  return ladders;
}

std::string ExperimentConfig::summary() const {
  std::ostringstream os;
  os << "dataset=" << dataset << " arch=" << arch << " regularizer=" << regularizer
     << " p=" << p << " epochs=" << epochs << " seed=" << seed;
  return os.str();
}

DatasetPair load_datasets(const ExperimentConfig& cfg) {
  DatasetPair pair;
  if (cfg.dataset == "synthetic") {
    RandomSource data_rng(cfg.seed, 100);
    pair.train = synthetic_labeled_set(cfg.synthetic_train_n, cfg.synthetic_classes,
                                       cfg.synthetic_channels, 32, 32, cfg.synthetic_noise,
                                       data_rng);
    RandomSource test_rng(cfg.seed, 101);
    pair.test = synthetic_labeled_set(cfg.synthetic_test_n, cfg.synthetic_classes,
                                      cfg.synthetic_channels, 32, 32, cfg.synthetic_noise,
                                      test_rng);
  } else if (cfg.dataset == "cifar10") {
    pair.train = load_cifar10_binary(cfg.cifar_train_path);
    pair.test = load_cifar10_binary(cfg.cifar_test_path);
  } else {
    throw std::invalid_argument("unknown dataset: " + cfg.dataset);
  }
  if (cfg.train_fraction < 1.0) {
    RandomSource frac_rng(cfg.seed, 102);
    pair.train = stratified_fraction(pair.train, cfg.train_fraction, frac_rng);
  }
  return pair;
}

}  // namespace dropcluster
