#pragma once

#include <cstddef>
#include <vector>

namespace dropcluster {

// Dense row-major matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

// Batch of convolutional feature maps, indexed [sample][channel][x][y] with
// x in [0, width) and y in [0, height). Pixels of one w x h map are stored in
// row-major order: pixel index = x * height + y. This ordering is the single
// source of truth for every flatten/graph/mask operation in the project.
class FeatureMapBatch {
 public:
  FeatureMapBatch() = default;
  FeatureMapBatch(int b, int t, int w, int h, double fill = 0.0);

  // Validating constructor for data crossing a module boundary: checks
  // dimensions and that every value is finite.
  static FeatureMapBatch from_values(int b, int t, int w, int h, std::vector<double> values);

  int batch() const { return b_; }
  int channels() const { return t_; }
  int width() const { return w_; }
  int height() const { return h_; }
  int pixels() const { return w_ * h_; }
  std::size_t size() const { return values_.size(); }

  double& at(int b, int t, int x, int y) { return values_[index(b, t, x, y)]; }
  double at(int b, int t, int x, int y) const { return values_[index(b, t, x, y)]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  std::size_t index(int b, int t, int x, int y) const {
    return ((static_cast<std::size_t>(b) * t_ + t) * w_ + x) * h_ + y;
  }

  bool all_finite() const;

 private:
  int b_ = 0, t_ = 0, w_ = 0, h_ = 0;
  std::vector<double> values_;
};

// Rows are samples, columns are the w*h pixels of one channel in row-major
// pixel order.
Matrix flatten_channel(const FeatureMapBatch& batch, int channel);

// Inverse of flatten_channel: writes the matrix back into the given channel.
void unflatten_channel(const Matrix& data, FeatureMapBatch& batch, int channel);

}  // namespace dropcluster
