#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dropcluster/data.hpp"
#include "dropcluster/nn.hpp"
#include "dropcluster/rng.hpp"

namespace dropcluster {

// One experiment, fully determined by these fields plus the seed. Parsed
// from a flat key=value file; command-line --set overrides win.
struct ExperimentConfig {
  // data
  std::string dataset = "synthetic";  // "synthetic" or "cifar10"
  std::string cifar_train_path;
  std::string cifar_test_path;
  int synthetic_train_n = 2000;
  int synthetic_test_n = 500;
  int synthetic_classes = 5;
  int synthetic_channels = 3;
  double synthetic_noise = 0.08;
  double train_fraction = 1.0;  // stratified by class
  bool augment = false;

  // model / schedule
  std::string arch = "tiny";
  int epochs = 24;
  int batch_size = 50;
  double lr = 0.02;  // 0.1 collapses the tiny architecture on synthetic data
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_decay = 0.1;
  std::vector<int> milestones;  // empty -> 60%/80% of epochs

  // regularizer
  std::string regularizer = "none";
  double p = 0.1;
  int n_clusters = 15;
  int s = 8;
  int block_size = 5;
  bool normalize_at_inference = true;
  int rena_max_iter = 1000;

  // evaluation
  std::string corrupt_kinds = "gaussian,shot,impulse,defocus";
  std::string severities = "1,2,3,4,5";
  std::string gaussian_sigmas;    // 5 comma-separated values; empty = defaults
  std::string shot_rates;
  std::string impulse_fractions;
  std::string defocus_radii;
  int tendency_samples = 64;
  int histogram_bins = 10;

  std::uint64_t seed = 1;
  int final_window = 0;
  std::string out_dir = "out";

  void apply(const std::string& key, const std::string& value);
  TrainConfig to_train_config() const;
  CorruptionLadders corruption_ladders() const;
  std::string summary() const;
};

// key=value lines; '#' starts a comment; blank lines ignored.
ExperimentConfig load_config_file(const std::string& path);
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& key_values);

std::vector<int> parse_int_list(const std::string& csv);
std::vector<std::string> split_csv(const std::string& csv);

// Builds the train/test pair the config describes, applying train_fraction.
struct DatasetPair {
  LabeledImageSet train;
  LabeledImageSet test;
};
DatasetPair load_datasets(const ExperimentConfig& cfg);

}  // namespace dropcluster
