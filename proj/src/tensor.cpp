#include "dropcluster/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace dropcluster {

FeatureMapBatch::FeatureMapBatch(int b, int t, int w, int h, double fill)
    : b_(b), t_(t), w_(w), h_(h) {
  if (b < 1 || t < 1 || w < 1 || h < 1)
    throw std::invalid_argument("FeatureMapBatch: all dimensions must be >= 1");
  values_.assign(static_cast<std::size_t>(b) * t * w * h, fill);
}

FeatureMapBatch FeatureMapBatch::from_values(int b, int t, int w, int h,
                                             std::vector<double> values) {
  FeatureMapBatch out(b, t, w, h);
  if (values.size() != out.values_.size())
    throw std::invalid_argument("FeatureMapBatch: value count does not match dimensions");
  out.values_ = std::move(values);
  if (!out.all_finite())
    throw std::invalid_argument("FeatureMapBatch: values must be finite");
  return out;
}

bool FeatureMapBatch::all_finite() const {
  for (double x : values_)
    if (!std::isfinite(x)) return false;
  return true;
}

Matrix flatten_channel(const FeatureMapBatch& batch, int channel) {
  if (channel < 0 || channel >= batch.channels())
    throw std::out_of_range("flatten_channel: channel " + std::to_string(channel) +
                            " out of range [0, " + std::to_string(batch.channels()) + ")");
  Matrix out(batch.batch(), batch.pixels());
  for (int s = 0; s < batch.batch(); ++s)
    for (int x = 0; x < batch.width(); ++x)
      for (int y = 0; y < batch.height(); ++y)
        out.at(s, x * batch.height() + y) = batch.at(s, channel, x, y);
  return out;
}

void unflatten_channel(const Matrix& data, FeatureMapBatch& batch, int channel) {
  if (channel < 0 || channel >= batch.channels())
    throw std::out_of_range("unflatten_channel: channel out of range");
  if (data.rows != batch.batch() || data.cols != batch.pixels())
    throw std::invalid_argument("unflatten_channel: shape mismatch");
  for (int s = 0; s < batch.batch(); ++s)
    for (int x = 0; x < batch.width(); ++x)
      for (int y = 0; y < batch.height(); ++y)
        batch.at(s, channel, x, y) = data.at(s, x * batch.height() + y);
}

}  // namespace dropcluster
