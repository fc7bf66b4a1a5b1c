#pragma once

#include <cstdint>
#include <vector>

#include "dropcluster/rena.hpp"
#include "dropcluster/rng.hpp"
#include "dropcluster/tensor.hpp"

namespace dropcluster {

enum class Mode { Training, Inference };

// Cluster membership learned from one mini-batch of feature maps: T is the
// binary [t][n][w][h] membership tensor and N the set of channels where ReNA
// could not reach the target cluster count. Structured channels partition
// their pixels across the n cluster slices; unstructured channels are all
// zero in T.
class ClusterState {
 public:
  ClusterState() = default;
  ClusterState(int t, int n, int w, int h);

  int channels() const { return t_; }
  int n_clusters() const { return n_; }
  int width() const { return w_; }
  int height() const { return h_; }
  int epoch_computed() const { return epoch_computed_; }
  void set_epoch_computed(int epoch) { epoch_computed_ = epoch; }

  bool membership(int t, int cluster, int x, int y) const {
    return mem_[index(t, cluster, x, y)] != 0;
  }
  void set_membership(int t, int cluster, int x, int y, bool value) {
    mem_[index(t, cluster, x, y)] = value ? 1 : 0;
  }

  const std::vector<int>& unstructured() const { return unstructured_; }
  bool is_unstructured(int channel) const;
  void mark_unstructured(int channel);

  // Fills channel t's slices from a fitted assignment (assignment.k <= n).
  void assign_channel(int t, const ClusterAssignment& assignment);

  const std::vector<std::uint8_t>& raw_membership() const { return mem_; }
  std::vector<std::uint8_t>& raw_membership() { return mem_; }
  std::vector<int>& raw_unstructured() { return unstructured_; }

 private:
  std::size_t index(int t, int cluster, int x, int y) const {
    return ((static_cast<std::size_t>(t) * n_ + cluster) * w_ + x) * h_ + y;
  }

  int t_ = 0, n_ = 0, w_ = 0, h_ = 0;
  int epoch_computed_ = -1;
  std::vector<std::uint8_t> mem_;
  std::vector<int> unstructured_;  // ascending channel indices
};

// Binary [t][w][h] mask plus the renormalization factor
// count(M) / count_ones(M).
struct DropMask {
  int t = 0, w = 0, h = 0;
  std::vector<std::uint8_t> m;
  double scale = 1.0;

  bool at(int t_, int x, int y) const {
    return m[(static_cast<std::size_t>(t_) * w + x) * h + y] != 0;
  }
  void set(int t_, int x, int y, bool v) {
    m[(static_cast<std::size_t>(t_) * w + x) * h + y] = v ? 1 : 0;
  }
  std::size_t count() const { return m.size(); }
  std::size_t count_ones() const;

  static DropMask ones(int t, int w, int h);
  void finalize_scale();  // sets scale = count/count_ones, throws if no ones
};

struct RegularizerConfig {
  double p = 0.1;   // drop probability, in [0, 1)
  int n = 15;       // clusters per channel
  int s = 50;       // recompute period in epochs
  Mode mode = Mode::Training;
  // Algorithm-literal behavior renormalizes at inference too (the mask is
  // then only zeroing unstructured channels); switch off to skip that.
  bool normalize_at_inference = true;

  void validate() const;
};

// Runs ReNA per channel with k_target = n. Channels where the fit does not
// converge are recorded as unstructured; the rest get their partition written
// into the membership tensor.
ClusterState compute_clusters(const FeatureMapBatch& activations, int n, int max_iter = 1000);

// Mask construction: unstructured channels are zeroed in both modes; in
// Training mode each structured channel independently drops
// floor(p*n) clusters sampled without replacement.
DropMask build_mask(const ClusterState& state, const RegularizerConfig& cfg, RandomSource& rng);

// output = A (*) M * scale, the mask broadcast along the batch axis.
FeatureMapBatch apply_mask(const FeatureMapBatch& activations, const DropMask& mask);

// Backward of apply_mask with the mask treated as constant.
FeatureMapBatch mask_gradient(const FeatureMapBatch& upstream, const DropMask& mask);

// Clusters are first learned at epoch s and refreshed every s epochs.
bool schedule_should_recompute(int epoch, int s);

// Baseline masks, all renormalized by count/count_ones.
DropMask dropout_mask(int t, int w, int h, double p, RandomSource& rng);
DropMask spatial_dropout_mask(int t, int w, int h, double p, RandomSource& rng);
DropMask dropblock_mask(int t, int w, int h, double p, int block_size, RandomSource& rng);

}  // namespace dropcluster
