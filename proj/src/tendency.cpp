#include "dropcluster/tendency.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "dropcluster/errors.hpp"

namespace dropcluster {

namespace {

double nn_distance(const Matrix& points, const std::vector<double>& q, int exclude) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points.rows; ++i) {
    if (i == exclude) continue;
    double d = 0.0;
    for (int j = 0; j < points.cols; ++j) {
      const double diff = points.at(i, j) - q[j];
      d += diff * diff;
    }
    if (d < best) best = d;
  }
  return std::sqrt(best);
}

constexpr int kNeighborOffsets[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                        {0, 1},   {1, -1}, {1, 0},  {1, 1}};

double mean_neighbor_abs_diff(const Matrix& image, double value, int cx, int cy) {
  double acc = 0.0;
  for (const auto& off : kNeighborOffsets)
    acc += std::fabs(value - image.at(cx + off[0], cy + off[1]));
  return acc / 8.0;
}

}  // namespace

double hopkins(const Matrix& points, int m_samples, RandomSource& rng) {
  const int n = points.rows;
  const int d = points.cols;
  if (n < 20) throw InsufficientDataError("hopkins: need at least 20 points");
  if (d < 1) throw std::invalid_argument("hopkins: need at least one feature");
  if (m_samples < 1 || m_samples > n / 10)
    throw std::invalid_argument("hopkins: m_samples must satisfy 1 <= m <= n/10");

  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      lo[j] = std::min(lo[j], points.at(i, j));
      hi[j] = std::max(hi[j], points.at(i, j));
    }

  double sum_u = 0.0;
  std::vector<double> q(d);
  for (int i = 0; i < m_samples; ++i) {
    for (int j = 0; j < d; ++j) q[j] = rng.uniform(lo[j], hi[j]);
    sum_u += nn_distance(points, q, -1);
  }

  double sum_w = 0.0;
  for (int i = 0; i < m_samples; ++i) {
    const int idx = static_cast<int>(rng.uniform_int(n));
    for (int j = 0; j < d; ++j) q[j] = points.at(idx, j);
    sum_w += nn_distance(points, q, idx);
  }

  const double denom = sum_u + sum_w;
  if (denom == 0.0) return 0.5;
  return sum_u / denom;
}

double spatial_hopkins_at(const Matrix& image, const std::vector<std::pair<int, int>>& xy,
                          const std::vector<std::pair<int, int>>& qr) {
  const int X = image.rows;
  const int Y = image.cols;
  if (X < 3 || Y < 3) throw std::invalid_argument("spatial_hopkins: image must be at least 3x3");
  if (xy.size() != qr.size() || xy.empty())
    throw std::invalid_argument("spatial_hopkins: location lists must be equal and non-empty");
  auto check_interior = [&](const std::pair<int, int>& p) {
    if (p.first < 1 || p.first > X - 2 || p.second < 1 || p.second > Y - 2)
      throw std::invalid_argument("spatial_hopkins: location not interior");
  };

  double sum_w = 0.0, sum_z = 0.0;
  for (std::size_t i = 0; i < xy.size(); ++i) {
    check_interior(xy[i]);
    check_interior(qr[i]);
    const auto [x, y] = xy[i];
    const auto [q, r] = qr[i];
    // both deviations are measured against the neighborhood of (x, y)
    sum_w += mean_neighbor_abs_diff(image, image.at(x, y), x, y);
    sum_z += mean_neighbor_abs_diff(image, image.at(q, r), x, y);
  }
  const double denom = sum_z + sum_w;
  if (denom == 0.0) return 0.5;
  return sum_z / denom;
}

double spatial_hopkins(const Matrix& image, int m_samples, RandomSource& rng) {
  const int X = image.rows;
  const int Y = image.cols;
  if (X < 3 || Y < 3) throw std::invalid_argument("spatial_hopkins: image must be at least 3x3");
  const int interior = (X - 2) * (Y - 2);
  if (m_samples < 1 || m_samples > interior)
    throw std::invalid_argument("spatial_hopkins: m_samples must be in [1, (X-2)(Y-2)]");

  auto draw_interior = [&]() -> std::pair<int, int> {
    const int x = 1 + static_cast<int>(rng.uniform_int(X - 2));
    const int y = 1 + static_cast<int>(rng.uniform_int(Y - 2));
    return {x, y};
  };
  std::vector<std::pair<int, int>> xy(m_samples), qr(m_samples);
  for (auto& p : xy) p = draw_interior();
  for (auto& p : qr) p = draw_interior();
  return spatial_hopkins_at(image, xy, qr);
}

TendencyReport channel_tendency_report(const FeatureMapBatch& batch, int m_samples,
                                       RandomSource& rng) {
  if (batch.width() < 3 || batch.height() < 3)
    throw std::invalid_argument("channel_tendency_report: feature maps must be at least 3x3");
  TendencyReport report;
  report.m_samples = m_samples;
  report.seed = rng.seed();
  report.per_channel_mean.resize(batch.channels());
  Matrix image(batch.width(), batch.height());
  for (int t = 0; t < batch.channels(); ++t) {
    double acc = 0.0;
    for (int b = 0; b < batch.batch(); ++b) {
      for (int x = 0; x < batch.width(); ++x)
        for (int y = 0; y < batch.height(); ++y) image.at(x, y) = batch.at(b, t, x, y);
      acc += spatial_hopkins(image, m_samples, rng);
    }
    report.per_channel_mean[t] = acc / batch.batch();
  }
  return report;
}

std::vector<int> tendency_histogram(const std::vector<double>& values, int bins) {
  if (bins < 1) throw std::invalid_argument("tendency_histogram: bins must be >= 1");
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("tendency_histogram: values must lie in [0, 1]");
    int idx = static_cast<int>(v * bins);
    if (idx == bins) idx = bins - 1;  // v == 1.0
    ++counts[idx];
  }
  return counts;
}

std::vector<int> TendencyReport::flagged_channels(double threshold) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < per_channel_mean.size(); ++i)
    if (per_channel_mean[i] < threshold) out.push_back(static_cast<int>(i));
  return out;
}

void TendencyReport::write_csv(std::ostream& os) const {
  os << "channel,mean_spatial_hopkins\n";
  char buf[64];
  for (std::size_t i = 0; i < per_channel_mean.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", i, per_channel_mean[i]);
    os << buf;
  }
}

}  // namespace dropcluster
