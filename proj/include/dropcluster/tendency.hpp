#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "dropcluster/rng.hpp"
#include "dropcluster/tensor.hpp"

namespace dropcluster {

// Per-channel cluster-tendency summary. Values near 1 mean strong spatial
// structure, values near 0.5 mean none.
struct TendencyReport {
  std::vector<double> per_channel_mean;
  int m_samples = 0;
  std::uint64_t seed = 0;

  // Channels whose mean statistic falls below the diagnostic threshold.
  // Advisory only: the operative unstructured test is ReNA non-convergence.
  std::vector<int> flagged_channels(double threshold = 0.3) const;
  void write_csv(std::ostream& os) const;
};

// Classical Hopkins statistic over an n x d point set: compares
// nearest-neighbor distances of m artificial uniform points against those of
// m sampled real points. Near 0.5 for unclustered data, near 1 for clustered.
// Requires n >= 20 and m_samples <= n/10.
double hopkins(const Matrix& points, int m_samples, RandomSource& rng);

// Spatial Hopkins over one image: for m sampled interior pixels, w_i is the
// mean absolute difference between the pixel and its 8 neighbors, and z_i is
// the mean absolute difference between a second random pixel and those same
// neighbors; the statistic is sum(z) / (sum(z) + sum(w)). Degenerate 0/0
// (constant image) is defined as 0.5.
double spatial_hopkins(const Matrix& image, int m_samples, RandomSource& rng);

// Deterministic core of spatial_hopkins with explicit (x, y) locations; both
// lists must have equal length and contain interior pixels only.
double spatial_hopkins_at(const Matrix& image, const std::vector<std::pair<int, int>>& xy,
                          const std::vector<std::pair<int, int>>& qr);

// Mean spatial_hopkins across the mini-batch for every channel.
TendencyReport channel_tendency_report(const FeatureMapBatch& batch, int m_samples,
                                       RandomSource& rng);

// Equal-width histogram over [0, 1]; the upper edge of the last bin is
// inclusive, and an interior edge value falls in the bin above it.
std::vector<int> tendency_histogram(const std::vector<double>& values, int bins);

}  // namespace dropcluster
