// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Criteria marked with a runtime budget also fail when the
// budget is exceeded.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dropcluster/data.hpp"
#include "dropcluster/dropcluster.hpp"
#include "dropcluster/nn.hpp"
#include "dropcluster/rena.hpp"
#include "dropcluster/rng.hpp"
#include "dropcluster/tendency.hpp"
#include "test_util.hpp"

using namespace dropcluster;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

struct Criterion {
  int number;
  std::string name;
  double budget_seconds;  // <= 0 means no budget
  std::chrono::steady_clock::time_point start;
  bool ok = true;
  std::string detail;

  Criterion(int number_, std::string name_, double budget_ = 0.0)
      : number(number_), name(std::move(name_)), budget_seconds(budget_),
        start(std::chrono::steady_clock::now()) {}

  void require(bool condition, const std::string& why) {
    if (!condition && ok) {
      ok = false;
      detail = why;
    }
  }

  void finish() {
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && budget_seconds > 0.0 && elapsed > budget_seconds) {
      ok = false;
      detail = "runtime budget exceeded";
    }
    if (!ok) ++g_failures;
    std::printf("[%s] criterion %d: %s (%.1fs%s%s)\n", ok ? "PASS" : "FAIL", number, name.c_str(),
                elapsed, detail.empty() ? "" : " - ", detail.c_str());
    std::fflush(stdout);
  }
};

Matrix box_filter(const Matrix& img, int radius) {
  Matrix out(img.rows, img.cols);
  for (int x = 0; x < img.rows; ++x)
    for (int y = 0; y < img.cols; ++y) {
      double acc = 0.0;
      int count = 0;
      for (int dx = -radius; dx <= radius; ++dx)
        for (int dy = -radius; dy <= radius; ++dy) {
          const int sx = std::clamp(x + dx, 0, img.rows - 1);
          const int sy = std::clamp(y + dy, 0, img.cols - 1);
          acc += img.at(sx, sy);
          ++count;
        }
      out.at(x, y) = acc / count;
    }
  return out;
}

void criterion_1_orthonormality() {
  Criterion c(1, "grouping matrices from 100 random fits are orthonormal", 10.0);
  RandomSource rng(101);
  for (int trial = 0; trial < 100 && c.ok; ++trial) {
    const int w = 6 + static_cast<int>(rng.uniform_int(7));
    const int h = 6 + static_cast<int>(rng.uniform_int(7));
    const int k = 2 + static_cast<int>(rng.uniform_int(7));
    const double sigma = rng.uniform() * 0.3;
    const PlantedBatch planted = synthetic_planted(5, 1, w, h, k, sigma, rng);
    const LatticeGraph graph = build_lattice_graph(w, h);
    const RenaOutcome out = rena_fit(flatten_channel(planted.data, 0), graph, k, 1000);
    c.require(out.converged, "fit did not converge");
    if (!out.converged) break;
    const GroupingMatrix phi = grouping_matrix(out.assignment);
    const Matrix dense = phi.to_dense();
    double worst = 0.0;
    for (int i = 0; i < phi.k; ++i)
      for (int j = 0; j < phi.k; ++j) {
        double dot = 0.0;
        for (int m = 0; m < phi.m; ++m) dot += dense.at(i, m) * dense.at(j, m);
        worst = std::max(worst, std::fabs(dot - (i == j ? 1.0 : 0.0)));
      }
    c.require(worst < 1e-12, "||PhiPhi^T - I||_max = " + std::to_string(worst));
  }
  c.finish();
}

void criterion_2_planted_recovery() {
  Criterion c(2, "exact recovery of 20 random planted partitions on 16x16", 30.0);
  RandomSource rng(202);
  const LatticeGraph graph = build_lattice_graph(16, 16);
  for (int trial = 0; trial < 20 && c.ok; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(7));  // k in {2..8}
    const PlantedBatch planted = synthetic_planted(8, 1, 16, 16, k, 0.0, rng);
    const RenaOutcome out = rena_fit(flatten_channel(planted.data, 0), graph, k, 1000);
    c.require(out.converged, "fit did not converge (trial " + std::to_string(trial) + ")");
    if (!out.converged) break;
    const double ari = testutil::adjusted_rand_index(out.assignment.labels, planted.pixel_labels);
    c.require(ari == 1.0, "ARI " + std::to_string(ari) + " on trial " + std::to_string(trial));
  }
  c.finish();
}

void criterion_3_spatial_hopkins_calibration() {
  Criterion c(3, "Spatial Hopkins: noise near 0.5, smoothed noise above 0.7", 5.0);
  double noise_acc = 0.0, smooth_acc = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    RandomSource img_rng(3000 + seed);
    Matrix img(32, 32);
    for (auto& v : img.v) v = img_rng.uniform();
    const Matrix smoothed = box_filter(img, 5);  // 11x11 box
    RandomSource r1(seed), r2(seed);
    noise_acc += spatial_hopkins(img, 200, r1);
    smooth_acc += spatial_hopkins(smoothed, 200, r2);
  }
  const double noise_mean = noise_acc / 20;
  const double smooth_mean = smooth_acc / 20;
  c.require(noise_mean >= 0.45 && noise_mean <= 0.55,
            "noise mean " + std::to_string(noise_mean));
  c.require(smooth_mean > noise_mean, "smoothed mean not greater");
  c.require(smooth_mean > 0.7, "smoothed mean " + std::to_string(smooth_mean));
  c.finish();
}

ClusterState structured_state_16x16(int channels, int n, RandomSource& rng) {
  const PlantedBatch planted = synthetic_planted(6, channels, 16, 16, n, 0.0, rng);
  return compute_clusters(planted.data, n);
}

void criterion_4_algorithm2_exactness() {
  Criterion c(4, "mask drops floor(p*n) clusters, renormalizes exactly, preserves mean");
  RandomSource data_rng(404);
  const ClusterState state = structured_state_16x16(4, 15, data_rng);
  c.require(state.unstructured().empty(), "expected all channels structured");

  RegularizerConfig cfg;
  cfg.p = 0.1;
  cfg.n = 15;
  cfg.mode = Mode::Training;

  FeatureMapBatch activations(3, 4, 16, 16);
  RandomSource act_rng(405);
  for (auto& v : activations.values()) v = 0.5 + 0.2 * act_rng.normal();
  double clean_mean = 0.0;
  for (double v : activations.values()) clean_mean += v;
  clean_mean /= double(activations.size());

  RandomSource rng(406);
  double masked_mean_acc = 0.0;
  const int draws = 1000;
  for (int draw = 0; draw < draws && c.ok; ++draw) {
    const DropMask mask = build_mask(state, cfg, rng);

    // floor(0.1 * 15) = 1 cluster zeroed per structured channel
    for (int t = 0; t < 4; ++t) {
      int zeroed = 0;
      for (int cl = 0; cl < 15; ++cl) {
        bool any = false;
        for (int x = 0; x < 16 && !any; ++x)
          for (int y = 0; y < 16 && !any; ++y)
            if (state.membership(t, cl, x, y) && !mask.at(t, x, y)) any = true;
        if (any) ++zeroed;
      }
      c.require(zeroed == 1, "channel dropped " + std::to_string(zeroed) + " clusters");
    }

    // renormalization, recounted independently from the mask bits
    std::size_t ones = 0;
    for (std::uint8_t bit : mask.m) ones += bit;
    c.require(mask.scale == double(mask.m.size()) / double(ones), "scale is not count/ones");

    double mean = 0.0;
    for (const double v : apply_mask(activations, mask).values()) mean += v;
    masked_mean_acc += mean / double(activations.size());
  }
  const double masked_mean = masked_mean_acc / draws;
  c.require(std::fabs(masked_mean - clean_mean) <= 0.02 * std::fabs(clean_mean),
            "expected activation drifted " + std::to_string(masked_mean) + " vs " +
                std::to_string(clean_mean));
  c.finish();
}

void criterion_5_unstructured_contract() {
  Criterion c(5, "unstructured channels are zero in training and inference outputs");
  RandomSource data_rng(505);
  const PlantedBatch planted = synthetic_planted(6, 3, 16, 16, 10, 0.0, data_rng);
  ClusterState state = compute_clusters(planted.data, 10);
  state.mark_unstructured(0);
  state.mark_unstructured(2);

  FeatureMapBatch activations(4, 3, 16, 16);
  RandomSource act_rng(506);
  for (auto& v : activations.values()) v = act_rng.normal();

  RegularizerConfig cfg;
  cfg.p = 0.2;
  cfg.n = 10;
  RandomSource rng(507);
  for (Mode mode : {Mode::Training, Mode::Inference}) {
    cfg.mode = mode;
    const FeatureMapBatch out = apply_mask(activations, build_mask(state, cfg, rng));
    for (int b = 0; b < 4; ++b)
      for (int t : {0, 2})
        for (int x = 0; x < 16; ++x)
          for (int y = 0; y < 16; ++y)
            c.require(out.at(b, t, x, y) == 0.0, "nonzero output in a masked channel");
  }
  c.finish();
}

void criterion_6_gradient_fidelity() {
  Criterion c(6, "finite differences confirm gradients through a DropCluster mask", 60.0);
  Network net(2, 10, 10, 3,
              {LayerSpec::conv(3, 3), LayerSpec::regularizer_slot(), LayerSpec::relu(),
               LayerSpec::maxpool(2), LayerSpec::flatten(), LayerSpec::dense(10),
               LayerSpec::relu(), LayerSpec::dense(3)});
  RandomSource init_rng(606);
  net.init_params(init_rng);
  // positive first-conv bias keeps unmasked activations clear of the relu
  // kink, so masked zeros never tie inside a pool window
  for (auto& b : *net.parameters()[1].values) b = 1.5;

  // a real cluster state drives the fixed mask
  RandomSource input_rng(607);
  FeatureMapBatch input(8, 2, 10, 10);
  for (auto& v : input.values()) v = input_rng.normal(0.0, 0.5);
  const FeatureMapBatch acts = net.first_conv_activations(input);
  const ClusterState state = compute_clusters(acts, 4);
  RegularizerConfig rc;
  rc.p = 0.25;  // floor(0.25*4) = 1 cluster per channel
  rc.n = 4;
  rc.mode = Mode::Training;
  RandomSource mask_rng(608);
  net.set_slot_mask(build_mask(state, rc, mask_rng));

  std::vector<int> labels(8);
  for (auto& l : labels) l = static_cast<int>(input_rng.uniform_int(3));

  net.zero_grad();
  net.backward(net.forward(input, Mode::Training), labels);
  std::vector<std::vector<double>> analytic;
  for (auto view : net.parameters()) analytic.push_back(*view.grads);

  double worst = 0.0;
  auto views = net.parameters();
  const double step = 1e-4;
  for (std::size_t p = 0; p < views.size(); ++p)
    for (std::size_t i = 0; i < views[p].values->size(); ++i) {
      double& theta = (*views[p].values)[i];
      const double orig = theta;
      theta = orig + step;
      const double lp = net.loss(net.forward(input, Mode::Training), labels);
      theta = orig - step;
      const double lm = net.loss(net.forward(input, Mode::Training), labels);
      theta = orig;
      const double numeric = (lp - lm) / (2.0 * step);
      const double a = analytic[p][i];
      const double denom = std::max(std::fabs(a), std::fabs(numeric));
      if (denom < 1e-8) continue;
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  c.require(worst < 1e-4, "max relative error " + std::to_string(worst));
  c.finish();
}

struct SmokeRun {
  Metrics metrics;
  Network net;
  std::optional<ClusterState> state;
  TrainConfig cfg;
};

SmokeRun smoke_train(RegKind reg, std::uint64_t seed, const LabeledImageSet& train_set,
                     const LabeledImageSet& test_set) {
  TrainConfig cfg;
  cfg.epochs = 18;
  cfg.batch_size = 50;
  cfg.lr = 0.02;  // stable across seeds for the tiny architecture
  cfg.momentum = 0.9;
  cfg.weight_decay = 5e-4;
  cfg.regularizer = reg;
  cfg.p = 0.1;
  cfg.n_clusters = 15;
  cfg.s = 4;  // activates while the model is still learning, then refreshes
  cfg.seed = seed;
  Network net(3, 32, 32, 5, make_arch("tiny", 5));
  TrainResult result = train(net, train_set, test_set, cfg);
  return SmokeRun{std::move(result.metrics), std::move(net), std::move(result.cluster_state), cfg};
}

std::vector<SmokeRun> g_dropcluster_runs;  // shared between criteria 7 and 8
LabeledImageSet g_test_set;

void criterion_7_desk_scale_trend() {
  Criterion c(7, "smoke training: DropCluster holds up against no regularizer", 900.0);
  RandomSource train_rng(700);
  const LabeledImageSet train_set = synthetic_labeled_set(2000, 5, 3, 32, 32, 0.08, train_rng);
  RandomSource test_rng(701);
  g_test_set = synthetic_labeled_set(500, 5, 3, 32, 32, 0.08, test_rng);

  double none_acc = 0.0, dc_acc = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SmokeRun none = smoke_train(RegKind::None, seed, train_set, g_test_set);
    SmokeRun dc = smoke_train(RegKind::DropCluster, seed, train_set, g_test_set);
    c.require(none.metrics.epochs.back().train_loss < none.metrics.epochs.front().train_loss,
              "baseline loss did not decrease (seed " + std::to_string(seed) + ")");
    c.require(dc.metrics.epochs.back().train_loss < dc.metrics.epochs.front().train_loss,
              "dropcluster loss did not decrease (seed " + std::to_string(seed) + ")");
    none_acc += none.metrics.final_top1;
    dc_acc += dc.metrics.final_top1;
    g_dropcluster_runs.push_back(std::move(dc));
  }
  none_acc /= 3.0;
  dc_acc /= 3.0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "none %.4f vs dropcluster %.4f", none_acc, dc_acc);
  c.require(dc_acc >= none_acc - 0.005, buf);
  if (c.ok) c.detail = buf;
  c.finish();
}

void criterion_8_corruption_monotonicity() {
  Criterion c(8, "mean accuracy over corruption kinds falls with severity", 600.0);
  if (g_dropcluster_runs.empty()) {
    c.require(false, "no trained smoke models available");
    c.finish();
    return;
  }
  const CorruptionKind kinds[4] = {CorruptionKind::Gaussian, CorruptionKind::Shot,
                                   CorruptionKind::Impulse, CorruptionKind::Defocus};
  double mean_by_severity[3] = {0.0, 0.0, 0.0};
  int idx = 0;
  for (int severity : {1, 3, 5}) {
    double acc = 0.0;
    for (auto& run : g_dropcluster_runs) {
      for (const CorruptionKind kind : kinds) {
        LabeledImageSet corrupted;
        corrupted.class_count = g_test_set.class_count;
        corrupted.labels = g_test_set.labels;
        corrupted.images = g_test_set.images;
        RandomSource rng(808 + severity * 10 + static_cast<int>(kind));
        for (int i = 0; i < corrupted.size(); ++i)
          corrupt_in_place(corrupted.images, i, kind, severity, rng);
        acc += evaluate(run.net, corrupted, 50, run.cfg, run.state).first;
      }
    }
    mean_by_severity[idx++] = acc / (4.0 * g_dropcluster_runs.size());
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "severity 1/3/5 top1: %.4f / %.4f / %.4f", mean_by_severity[0],
                mean_by_severity[1], mean_by_severity[2]);
  c.require(mean_by_severity[0] >= mean_by_severity[1], buf);
  c.require(mean_by_severity[1] >= mean_by_severity[2], buf);
  if (c.ok) c.detail = buf;
  c.finish();
}

// ---- criterion 9: CLI determinism ----

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DROPCLUSTER_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_9_cli_determinism() {
  Criterion c(9, "CLI commands rerun to byte-identical CSV outputs");
  const fs::path base = fs::temp_directory_path() / "dc_acceptance_cli";
  fs::remove_all(base);
  const fs::path a = base / "a";
  const fs::path b = base / "b";

  auto args = [&](const fs::path& dir, const std::string& extra) {
    return "--set synthetic_train_n=80 --set synthetic_test_n=40 --set epochs=3 "
           "--set batch_size=20 --set lr=0.05 --set seed=21 --set regularizer=dropcluster "
           "--set s=2 --set n_clusters=15 --set out_dir=" +
           dir.string() + (extra.empty() ? "" : " " + extra);
  };

  for (const fs::path& dir : {a, b}) {
    fs::create_directories(dir);
    c.require(run_cli("train " + args(dir, "")) == 0, "train failed");
    if (!c.ok) break;
    const std::string ckpt = (dir / "checkpoint.bin").string();
    c.require(run_cli("cluster-viz --checkpoint " + ckpt + " --set out_dir=" + dir.string()) == 0,
              "cluster-viz failed");
    c.require(run_cli("tendency-report --checkpoint " + ckpt + " " + args(dir, "")) == 0,
              "tendency-report failed");
    c.require(run_cli("corrupt-eval --checkpoint " + ckpt + " " +
                      args(dir, "--set severities=1,3")) == 0,
              "corrupt-eval failed");
  }

  if (c.ok) {
    for (const std::string name : {"metrics.csv", "tendency.csv", "tendency_histogram.csv",
                                   "corrupt_eval.csv", "clusters_channel_00.ppm"}) {
      c.require(slurp(a / name) == slurp(b / name), name + " differs between reruns");
      c.require(!slurp(a / name).empty(), name + " is empty");
    }
  }
  fs::remove_all(base);
  c.finish();
}

}  // namespace

int main() {
  criterion_1_orthonormality();
  criterion_2_planted_recovery();
  criterion_3_spatial_hopkins_calibration();
  criterion_4_algorithm2_exactness();
  criterion_5_unstructured_contract();
  criterion_6_gradient_fidelity();
  criterion_7_desk_scale_trend();
  criterion_8_corruption_monotonicity();
  criterion_9_cli_determinism();

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
