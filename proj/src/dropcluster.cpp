#include "dropcluster/dropcluster.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dropcluster/errors.hpp"
#include "dropcluster/lattice.hpp"

namespace dropcluster {

ClusterState::ClusterState(int t, int n, int w, int h) : t_(t), n_(n), w_(w), h_(h) {
  if (t < 1 || n < 1 || w < 1 || h < 1)
    throw std::invalid_argument("ClusterState: dimensions must be >= 1");
  mem_.assign(static_cast<std::size_t>(t) * n * w * h, 0);
}

bool ClusterState::is_unstructured(int channel) const {
  return std::binary_search(unstructured_.begin(), unstructured_.end(), channel);
}

void ClusterState::mark_unstructured(int channel) {
  if (channel < 0 || channel >= t_) throw std::out_of_range("mark_unstructured: bad channel");
  auto it = std::lower_bound(unstructured_.begin(), unstructured_.end(), channel);
  if (it == unstructured_.end() || *it != channel) unstructured_.insert(it, channel);
  const std::size_t base = static_cast<std::size_t>(channel) * n_ * w_ * h_;
  std::fill(mem_.begin() + base, mem_.begin() + base + static_cast<std::size_t>(n_) * w_ * h_, 0);
}

void ClusterState::assign_channel(int t, const ClusterAssignment& assignment) {
  if (t < 0 || t >= t_) throw std::out_of_range("assign_channel: bad channel");
  if (assignment.m != w_ * h_)
    throw std::invalid_argument("assign_channel: assignment pixel count mismatch");
  if (assignment.k > n_)
    throw std::invalid_argument("assign_channel: more clusters than membership slices");
  for (int x = 0; x < w_; ++x)
    for (int y = 0; y < h_; ++y) {
      const int cluster = assignment.labels[x * h_ + y];
      for (int c = 0; c < n_; ++c) set_membership(t, c, x, y, c == cluster);
    }
}

std::size_t DropMask::count_ones() const {
  std::size_t ones = 0;
  for (std::uint8_t b : m) ones += b;
  return ones;
}

DropMask DropMask::ones(int t, int w, int h) {
  if (t < 1 || w < 1 || h < 1) throw std::invalid_argument("DropMask: dimensions must be >= 1");
  DropMask mask;
  mask.t = t;
  mask.w = w;
  mask.h = h;
  mask.m.assign(static_cast<std::size_t>(t) * w * h, 1);
  mask.scale = 1.0;
  return mask;
}

void DropMask::finalize_scale() {
  const std::size_t ones = count_ones();
  if (ones == 0) throw DegenerateMaskError("mask has no surviving elements");
  scale = static_cast<double>(count()) / static_cast<double>(ones);
}

void RegularizerConfig::validate() const {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("RegularizerConfig: p must be in [0, 1)");
  if (n < 1) throw std::invalid_argument("RegularizerConfig: n must be >= 1");
  if (s < 1) throw std::invalid_argument("RegularizerConfig: s must be >= 1");
}

ClusterState compute_clusters(const FeatureMapBatch& activations, int n, int max_iter) {
  const int t = activations.channels();
  const int w = activations.width();
  const int h = activations.height();
  if (n > w * h) throw std::invalid_argument("compute_clusters: n must be <= pixel count");

  ClusterState state(t, n, w, h);
  const LatticeGraph graph = build_lattice_graph(w, h);
  for (int i = 0; i < t; ++i) {
    const Matrix data = flatten_channel(activations, i);
    const RenaOutcome outcome = rena_fit(data, graph, n, max_iter);
    if (outcome.converged)
      state.assign_channel(i, outcome.assignment);
    else
      state.mark_unstructured(i);
  }
  return state;
}

DropMask build_mask(const ClusterState& state, const RegularizerConfig& cfg, RandomSource& rng) {
  cfg.validate();
  if (cfg.n != state.n_clusters())
    throw std::invalid_argument("build_mask: cfg.n does not match cluster state");

  DropMask mask = DropMask::ones(state.channels(), state.width(), state.height());
  const int drops = static_cast<int>(std::floor(cfg.p * cfg.n));

  for (int i = 0; i < state.channels(); ++i) {
    if (state.is_unstructured(i)) {
      for (int x = 0; x < state.width(); ++x)
        for (int y = 0; y < state.height(); ++y) mask.set(i, x, y, false);
      continue;
    }
    if (cfg.mode != Mode::Training || drops == 0) continue;
    const std::vector<int> dropped = rng.sample_without_replacement(cfg.n, drops);
    for (int cluster : dropped)
      for (int x = 0; x < state.width(); ++x)
        for (int y = 0; y < state.height(); ++y)
          if (state.membership(i, cluster, x, y)) mask.set(i, x, y, false);
  }

  if (cfg.mode == Mode::Inference && !cfg.normalize_at_inference) {
    if (mask.count_ones() == 0) throw DegenerateMaskError("mask has no surviving elements");
    mask.scale = 1.0;
  } else {
    mask.finalize_scale();
  }
  return mask;
}

namespace {

FeatureMapBatch masked_product(const FeatureMapBatch& input, const DropMask& mask) {
  if (input.channels() != mask.t || input.width() != mask.w || input.height() != mask.h)
    throw std::invalid_argument("mask shape does not match feature maps");
  FeatureMapBatch out(input.batch(), input.channels(), input.width(), input.height());
  for (int b = 0; b < input.batch(); ++b)
    for (int t = 0; t < input.channels(); ++t)
      for (int x = 0; x < input.width(); ++x)
        for (int y = 0; y < input.height(); ++y)
          out.at(b, t, x, y) = mask.at(t, x, y) ? input.at(b, t, x, y) * mask.scale : 0.0;
  return out;
}

}  // namespace

FeatureMapBatch apply_mask(const FeatureMapBatch& activations, const DropMask& mask) {
  return masked_product(activations, mask);
}

FeatureMapBatch mask_gradient(const FeatureMapBatch& upstream, const DropMask& mask) {
  return masked_product(upstream, mask);
}

bool schedule_should_recompute(int epoch, int s) {
  if (epoch < 0) throw std::invalid_argument("schedule_should_recompute: epoch must be >= 0");
  if (s < 1) throw std::invalid_argument("schedule_should_recompute: s must be >= 1");
  return epoch >= s && epoch % s == 0;
}

DropMask dropout_mask(int t, int w, int h, double p, RandomSource& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout_mask: p must be in [0, 1)");
  DropMask mask = DropMask::ones(t, w, h);
  if (p > 0.0)
    for (auto& bit : mask.m) bit = rng.bernoulli(1.0 - p) ? 1 : 0;
  mask.finalize_scale();
  return mask;
}

DropMask spatial_dropout_mask(int t, int w, int h, double p, RandomSource& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("spatial_dropout_mask: p must be in [0, 1)");
  DropMask mask = DropMask::ones(t, w, h);
  if (p > 0.0)
    for (int i = 0; i < t; ++i)
      if (!rng.bernoulli(1.0 - p))
        for (int x = 0; x < w; ++x)
          for (int y = 0; y < h; ++y) mask.set(i, x, y, false);
  mask.finalize_scale();
  return mask;
}

DropMask dropblock_mask(int t, int w, int h, double p, int block_size, RandomSource& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropblock_mask: p must be in [0, 1)");
  if (block_size < 1 || block_size % 2 == 0)
    throw std::invalid_argument("dropblock_mask: block_size must be odd and >= 1");
  if (block_size > std::min(w, h))
    throw std::invalid_argument("dropblock_mask: block_size exceeds feature map");

  DropMask mask = DropMask::ones(t, w, h);
  if (p > 0.0) {
    // seed rate chosen so the expected dropped fraction matches p
    const double gamma = p * (double(w) * h) /
                         (double(block_size) * block_size * (w - block_size + 1) *
                          (h - block_size + 1));
    const int half = block_size / 2;
    for (int i = 0; i < t; ++i)
      for (int cx = half; cx < w - half; ++cx)
        for (int cy = half; cy < h - half; ++cy)
          if (rng.bernoulli(gamma))
            for (int x = cx - half; x <= cx + half; ++x)
              for (int y = cy - half; y <= cy + half; ++y) mask.set(i, x, y, false);
  }
  mask.finalize_scale();
  return mask;
}

}  // namespace dropcluster
