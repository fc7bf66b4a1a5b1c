#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dropcluster/data.hpp"
#include "dropcluster/dropcluster.hpp"
#include "dropcluster/nn.hpp"

namespace dropcluster {

// Little-endian binary primitives; readers throw FormatError on truncation.
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);

// ClusterState dump: header (t, n, w, h, epoch), the membership bits as
// bytes, then the unstructured channel list.
void save_cluster_state(const ClusterState& state, std::ostream& os);
ClusterState load_cluster_state(std::istream& is);

// Everything needed to resume evaluation of a trained model: architecture,
// parameters, optimizer velocity, normalization stats, regularizer settings
// and the cluster state when one was learned.
struct Checkpoint {
  std::string arch = "tiny";
  int in_channels = 3;
  int in_w = 32;
  int in_h = 32;
  int classes = 10;
  std::vector<std::vector<double>> params;
  std::vector<std::vector<double>> velocity;
  ChannelStats stats;  // empty vectors when normalization is unused
  RegKind regularizer = RegKind::None;
  double p = 0.0;
  int n_clusters = 15;
  int s = 50;
  int block_size = 5;
  bool normalize_at_inference = true;
  int epochs_trained = 0;
  std::uint64_t seed = 0;
  std::optional<ClusterState> cluster_state;

  static Checkpoint capture(Network& net, const TrainResult& result, const TrainConfig& cfg,
                            const std::string& arch);
  Network build_network() const;  // rebuilds and loads parameters
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Binary PPM (P6) image writer; rgb has 3 bytes per pixel, rows of `width`.
void write_ppm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& rgb);

// Renders one channel's cluster labels with a distinct color per cluster;
// unstructured channels come out as a uniform dark field.
std::vector<std::uint8_t> render_cluster_map(const ClusterState& state, int channel);

}  // namespace dropcluster
