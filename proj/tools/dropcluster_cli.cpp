// Command-line front end: train models, render cluster maps, report cluster
// tendency, and evaluate robustness to test-time corruption. Every command is
// reproducible from (config, seed) and writes plot-ready CSV.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dropcluster/config.hpp"
#include "dropcluster/data.hpp"
#include "dropcluster/errors.hpp"
#include "dropcluster/dropcluster.hpp"
#include "dropcluster/nn.hpp"
#include "dropcluster/rng.hpp"
#include "dropcluster/serialize.hpp"
#include "dropcluster/tendency.hpp"

namespace dc = dropcluster;
namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string checkpoint_path;
};

dc::ExperimentConfig resolve_config(const CommonArgs& args) {
  dc::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = dc::load_config_file(args.config_path);
  dc::apply_overrides(cfg, args.overrides);
  if (const char* env = std::getenv("DROPCLUSTER_OUT_DIR"); env && *env) cfg.out_dir = env;
  return cfg;
}

std::string out_path(const dc::ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

std::string format_row(int epoch, double lr, double loss, double top1, double top5) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f\n", epoch, lr, loss, top1, top5);
  return buf;
}

int cmd_train(const CommonArgs& args) {
  const dc::ExperimentConfig cfg = resolve_config(args);
  const dc::DatasetPair data = dc::load_datasets(cfg);
  const dc::TrainConfig tc = cfg.to_train_config();

  dc::Network net(data.train.images.channels(), data.train.images.width(),
                  data.train.images.height(), data.train.class_count,
                  dc::make_arch(cfg.arch, data.train.class_count));

  std::ofstream csv(out_path(cfg, "metrics.csv"));
  csv << "epoch,lr,train_loss,top1,top5\n";

  dc::TrainConfig tc_logged = tc;
  tc_logged.on_epoch = [&](int epoch, double lr, double loss, double top1, double top5) {
    csv << format_row(epoch, lr, loss, top1, top5);
    std::printf("epoch %3d  lr %.4f  loss %.4f  top1 %.4f  top5 %.4f\n", epoch, lr, loss, top1,
                top5);
  };

  const dc::TrainResult result = dc::train(net, data.train, data.test, tc_logged);

  char buf[160];
  std::snprintf(buf, sizeof(buf), "final,%.6f,%.6f,%.6f,%.6f\n",
                result.metrics.epochs.back().lr, result.metrics.epochs.back().train_loss,
                result.metrics.final_top1, result.metrics.final_top5);
  csv << buf;
  csv.close();

  const dc::Checkpoint ckpt = dc::Checkpoint::capture(net, result, tc, cfg.arch);
  dc::save_checkpoint(ckpt, out_path(cfg, "checkpoint.bin"));

  std::printf("final top1 %.4f top5 %.4f (mean of last %d epochs)\n", result.metrics.final_top1,
              result.metrics.final_top5, result.metrics.window);
  return 0;
}

// First-conv activations of a deterministic evaluation batch, the shared
// input of cluster-viz and tendency-report.
dc::FeatureMapBatch eval_batch_activations(const dc::ExperimentConfig& cfg,
                                           const dc::Checkpoint& ckpt, dc::Network& net) {
  const dc::DatasetPair data = dc::load_datasets(cfg);
  const int count = std::min(cfg.batch_size, data.test.size());
  dc::FeatureMapBatch batch(count, data.test.images.channels(), data.test.images.width(),
                            data.test.images.height());
  for (int i = 0; i < count; ++i) {
    for (int c = 0; c < batch.channels(); ++c)
      for (int x = 0; x < batch.width(); ++x)
        for (int y = 0; y < batch.height(); ++y)
          batch.at(i, c, x, y) = data.test.images.at(i, c, x, y);
    if (!ckpt.stats.mean.empty()) dc::normalize_image(batch, i, ckpt.stats);
  }
  return net.first_conv_activations(batch);
}

int cmd_cluster_viz(const CommonArgs& args) {
  const dc::ExperimentConfig cfg = resolve_config(args);
  const dc::Checkpoint ckpt = dc::load_checkpoint(args.checkpoint_path);
  if (!ckpt.cluster_state)
    throw dc::StateError("checkpoint holds no cluster state; train with regularizer=dropcluster");

  const dc::ClusterState& state = *ckpt.cluster_state;
  for (int ch = 0; ch < state.channels(); ++ch) {
    const auto rgb = dc::render_cluster_map(state, ch);
    char name[64];
    std::snprintf(name, sizeof(name), "clusters_channel_%02d.ppm", ch);
    dc::write_ppm(out_path(cfg, name), state.height(), state.width(), rgb);
  }
  std::printf("wrote %d cluster maps to %s (%zu unstructured channels)\n", state.channels(),
              cfg.out_dir.c_str(), state.unstructured().size());
  return 0;
}

int cmd_tendency_report(const CommonArgs& args) {
  const dc::ExperimentConfig cfg = resolve_config(args);
  const dc::Checkpoint ckpt = dc::load_checkpoint(args.checkpoint_path);
  dc::Network net = ckpt.build_network();
  const dc::FeatureMapBatch acts = eval_batch_activations(cfg, ckpt, net);

  dc::RandomSource rng(cfg.seed, 7);
  const dc::TendencyReport report = dc::channel_tendency_report(acts, cfg.tendency_samples, rng);

  std::ofstream csv(out_path(cfg, "tendency.csv"));
  report.write_csv(csv);
  csv.close();

  const auto counts = dc::tendency_histogram(report.per_channel_mean, cfg.histogram_bins);
  std::ofstream hist(out_path(cfg, "tendency_histogram.csv"));
  hist << "bin_lo,bin_hi,count\n";
  char buf[96];
  for (int i = 0; i < cfg.histogram_bins; ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d\n", double(i) / cfg.histogram_bins,
                  double(i + 1) / cfg.histogram_bins, counts[i]);
    hist << buf;
  }
  hist.close();

  const auto flagged = report.flagged_channels();
  std::printf("tendency report for %d channels; %zu flagged below 0.3\n",
              static_cast<int>(report.per_channel_mean.size()), flagged.size());
  return 0;
}

int cmd_corrupt_eval(const CommonArgs& args) {
  const dc::ExperimentConfig cfg = resolve_config(args);
  const dc::Checkpoint ckpt = dc::load_checkpoint(args.checkpoint_path);
  dc::Network net = ckpt.build_network();
  const dc::DatasetPair data = dc::load_datasets(cfg);

  dc::TrainConfig tc = cfg.to_train_config();
  tc.regularizer = ckpt.regularizer;
  tc.p = ckpt.p;
  tc.n_clusters = ckpt.n_clusters;
  tc.normalize_at_inference = ckpt.normalize_at_inference;
  const dc::ChannelStats* stats = ckpt.stats.mean.empty() ? nullptr : &ckpt.stats;

  std::ofstream csv(out_path(cfg, "corrupt_eval.csv"));
  csv << "kind,severity,top1,top5\n";
  char buf[128];

  // severity 0 = clean baseline
  const auto clean = dc::evaluate(net, data.test, cfg.batch_size, tc, ckpt.cluster_state, stats);
  std::snprintf(buf, sizeof(buf), "clean,0,%.6f,%.6f\n", clean.first, clean.second);
  csv << buf;

  const auto kinds = dc::split_csv(cfg.corrupt_kinds);
  const auto severities = dc::parse_int_list(cfg.severities);
  const dc::CorruptionLadders ladders = cfg.corruption_ladders();
  for (const auto& kind_name : kinds) {
    const dc::CorruptionKind kind = dc::corruption_kind_from_string(kind_name);
    for (int severity : severities) {
      dc::LabeledImageSet corrupted;
      corrupted.class_count = data.test.class_count;
      corrupted.labels = data.test.labels;
      corrupted.images = data.test.images;
      dc::RandomSource rng(cfg.seed, 9000 + 10 * static_cast<int>(kind) + severity);
      for (int i = 0; i < corrupted.size(); ++i)
        dc::corrupt_in_place(corrupted.images, i, kind, severity, rng, ladders);
      const auto acc =
          dc::evaluate(net, corrupted, cfg.batch_size, tc, ckpt.cluster_state, stats);
      std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f\n", kind_name.c_str(), severity, acc.first,
                    acc.second);
      csv << buf;
      std::printf("%-9s severity %d: top1 %.4f top5 %.4f\n", kind_name.c_str(), severity,
                  acc.first, acc.second);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DropCluster: data-driven structured dropout experiments"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
    sub->add_option("--config", args.config_path, "key=value config file");
    sub->add_option("--set", args.overrides, "config override key=value (repeatable)");
    if (needs_checkpoint)
      sub->add_option("--checkpoint", args.checkpoint_path, "checkpoint file")->required();
  };

  CLI::App* train = app.add_subcommand("train", "train a model and write metrics + checkpoint");
  add_common(train, false);
  CLI::App* viz = app.add_subcommand("cluster-viz", "render per-channel cluster maps");
  add_common(viz, true);
  CLI::App* tendency =
      app.add_subcommand("tendency-report", "per-channel Spatial Hopkins CSV + histogram");
  add_common(tendency, true);
  CLI::App* corrupt =
      app.add_subcommand("corrupt-eval", "accuracy under corruption kinds x severities");
  add_common(corrupt, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(args);
    if (viz->parsed()) return cmd_cluster_viz(args);
    if (tendency->parsed()) return cmd_tendency_report(args);
    if (corrupt->parsed()) return cmd_corrupt_eval(args);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
