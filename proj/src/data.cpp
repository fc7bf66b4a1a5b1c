#include "dropcluster/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "dropcluster/errors.hpp"
#include "dropcluster/lattice.hpp"

namespace dropcluster {

namespace {

constexpr int kCifarDim = 32;
constexpr int kCifarRecord = 1 + 3 * kCifarDim * kCifarDim;

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace

LabeledImageSet load_cifar10_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("load_cifar10_binary: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kCifarRecord != 0)
    throw FormatError("load_cifar10_binary: file size is not a multiple of 3073 bytes");

  const int n = static_cast<int>(bytes.size() / kCifarRecord);
  LabeledImageSet set;
  set.class_count = 10;
  set.images = FeatureMapBatch(n, 3, kCifarDim, kCifarDim);
  set.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + static_cast<std::size_t>(i) * kCifarRecord;
    if (rec[0] > 9) throw FormatError("load_cifar10_binary: label byte out of range");
    set.labels[i] = rec[0];
    for (int c = 0; c < 3; ++c)
      for (int x = 0; x < kCifarDim; ++x)
        for (int y = 0; y < kCifarDim; ++y)
          set.images.at(i, c, x, y) =
              rec[1 + (c * kCifarDim + x) * kCifarDim + y] / 255.0;
  }
  return set;
}

void save_cifar10_binary(const LabeledImageSet& set, const std::string& path) {
  if (set.images.channels() != 3 || set.images.width() != kCifarDim ||
      set.images.height() != kCifarDim)
    throw std::invalid_argument("save_cifar10_binary: images must be 3x32x32");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("save_cifar10_binary: cannot open " + path);
  std::vector<unsigned char> rec(kCifarRecord);
  for (int i = 0; i < set.size(); ++i) {
    rec[0] = static_cast<unsigned char>(set.labels[i]);
    for (int c = 0; c < 3; ++c)
      for (int x = 0; x < kCifarDim; ++x)
        for (int y = 0; y < kCifarDim; ++y) {
          const double v = clamp01(set.images.at(i, c, x, y));
          rec[1 + (c * kCifarDim + x) * kCifarDim + y] =
              static_cast<unsigned char>(std::lround(v * 255.0));
        }
    out.write(reinterpret_cast<const char*>(rec.data()), rec.size());
  }
}

ChannelStats compute_channel_stats(const LabeledImageSet& train_set) {
  const auto& imgs = train_set.images;
  ChannelStats stats;
  stats.mean.assign(imgs.channels(), 0.0);
  stats.stddev.assign(imgs.channels(), 0.0);
  const double count = double(imgs.batch()) * imgs.width() * imgs.height();
  for (int c = 0; c < imgs.channels(); ++c) {
    double sum = 0.0, sum_sq = 0.0;
    for (int b = 0; b < imgs.batch(); ++b)
      for (int x = 0; x < imgs.width(); ++x)
        for (int y = 0; y < imgs.height(); ++y) {
          const double v = imgs.at(b, c, x, y);
          sum += v;
          sum_sq += v * v;
        }
    stats.mean[c] = sum / count;
    const double var = std::max(0.0, sum_sq / count - stats.mean[c] * stats.mean[c]);
    stats.stddev[c] = std::max(1e-8, std::sqrt(var));
  }
  return stats;
}

void normalize_image(FeatureMapBatch& images, int index, const ChannelStats& stats) {
  for (int c = 0; c < images.channels(); ++c)
    for (int x = 0; x < images.width(); ++x)
      for (int y = 0; y < images.height(); ++y)
        images.at(index, c, x, y) = (images.at(index, c, x, y) - stats.mean[c]) / stats.stddev[c];
}

AugmentDraw sample_augment_draw(RandomSource& rng) {
  AugmentDraw draw;
  draw.flip = rng.bernoulli(0.5);
  draw.angle_deg = rng.uniform(-15.0, 15.0);
  draw.crop_dx = static_cast<int>(rng.uniform_int(9));
  draw.crop_dy = static_cast<int>(rng.uniform_int(9));
  return draw;
}

void augment_into(const FeatureMapBatch& src, int src_idx, const AugmentDraw& draw,
                  const ChannelStats* normalize, FeatureMapBatch& dst, int dst_idx) {
  const int c = src.channels(), w = src.width(), h = src.height();
  if (dst.channels() != c || dst.width() != w || dst.height() != h)
    throw std::invalid_argument("augment_into: shape mismatch");
  const double rad = draw.angle_deg * M_PI / 180.0;
  const double cos_a = std::cos(rad), sin_a = std::sin(rad);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const int pad = 4;

  for (int ch = 0; ch < c; ++ch)
    for (int x = 0; x < w; ++x)
      for (int y = 0; y < h; ++y) {
        // walk the output pixel back through crop -> rotation -> flip
        int px = x + draw.crop_dx - pad;  // position in the rotated image
        int py = y + draw.crop_dy - pad;
        double out = 0.0;
        if (px >= 0 && px < w && py >= 0 && py < h) {
          // inverse rotation about the image center, nearest neighbor
          const int sx = static_cast<int>(std::lround(cx + (px - cx) * cos_a + (py - cy) * sin_a));
          const int sy = static_cast<int>(std::lround(cy - (px - cx) * sin_a + (py - cy) * cos_a));
          if (sx >= 0 && sx < w && sy >= 0 && sy < h) {
            const int read_y = draw.flip ? h - 1 - sy : sy;
            out = src.at(src_idx, ch, sx, read_y);
          }
        }
        dst.at(dst_idx, ch, x, y) = out;
      }
  if (normalize) normalize_image(dst, dst_idx, *normalize);
}

FeatureMapBatch augment(const FeatureMapBatch& image, RandomSource& rng,
                        const ChannelStats* normalize) {
  FeatureMapBatch out(image.batch(), image.channels(), image.width(), image.height());
  for (int i = 0; i < image.batch(); ++i) {
    const AugmentDraw draw = sample_augment_draw(rng);
    augment_into(image, i, draw, normalize, out, i);
  }
  return out;
}

std::vector<int> random_connected_partition(int w, int h, int k_blocks, RandomSource& rng) {
  const int m = w * h;
  if (k_blocks < 1 || k_blocks > m)
    throw std::invalid_argument("random_connected_partition: k_blocks must be in [1, w*h]");
  const LatticeGraph graph = build_lattice_graph(w, h);

  std::vector<int> labels(m, -1);
  const std::vector<int> seeds = rng.sample_without_replacement(m, k_blocks);
  // frontier of (pixel, block) candidates; grown by randomized flood fill so
  // every block ends up connected
  std::vector<std::pair<int, int>> frontier;
  for (int b = 0; b < k_blocks; ++b) {
    labels[seeds[b]] = b;
    for (const int* nb = graph.neighbors_begin(seeds[b]); nb != graph.neighbors_end(seeds[b]); ++nb)
      frontier.emplace_back(*nb, b);
  }
  while (!frontier.empty()) {
    const std::size_t pick = rng.uniform_int(frontier.size());
    const auto [pixel, block] = frontier[pick];
    frontier[pick] = frontier.back();
    frontier.pop_back();
    if (labels[pixel] >= 0) continue;
    labels[pixel] = block;
    for (const int* nb = graph.neighbors_begin(pixel); nb != graph.neighbors_end(pixel); ++nb)
      if (labels[*nb] < 0) frontier.emplace_back(*nb, block);
  }
  return labels;
}

PlantedBatch synthetic_planted(int batch, int t, int w, int h, int k_blocks, double noise_sigma,
                               RandomSource& rng) {
  PlantedBatch out;
  out.pixel_labels = random_connected_partition(w, h, k_blocks, rng);
  out.data = FeatureMapBatch(batch, t, w, h);
  for (int ch = 0; ch < t; ++ch)
    for (int b = 0; b < batch; ++b) {
      std::vector<double> levels(k_blocks);
      for (double& l : levels) l = rng.uniform();
      for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y) {
          double v = levels[out.pixel_labels[x * h + y]];
          if (noise_sigma > 0.0) v += rng.normal(0.0, noise_sigma);
          out.data.at(b, ch, x, y) = v;
        }
    }
  return out;
}

LabeledImageSet synthetic_labeled_set(int n, int class_count, int channels, int w, int h,
                                      double noise_sigma, RandomSource& rng, double amplitude) {
  if (n < 1 || class_count < 2) throw std::invalid_argument("synthetic_labeled_set: bad sizes");
  LabeledImageSet set;
  set.class_count = class_count;
  set.images = FeatureMapBatch(n, channels, w, h);
  set.labels.resize(n);
  const double frequency = 2.0;
  for (int i = 0; i < n; ++i) {
    const int cls = static_cast<int>(rng.uniform_int(class_count));
    set.labels[i] = cls;
    const double theta = M_PI * cls / class_count;
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (int c = 0; c < channels; ++c) {
      const double channel_shift = 2.0 * M_PI * c / 3.0;
      for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y) {
          const double proj = (x * cos_t + y * sin_t) / w;
          double v =
              0.5 + amplitude * std::sin(2.0 * M_PI * frequency * proj + phase + channel_shift);
          if (noise_sigma > 0.0) v += rng.normal(0.0, noise_sigma);
          set.images.at(i, c, x, y) = clamp01(v);
        }
    }
  }
  return set;
}

CorruptionKind corruption_kind_from_string(const std::string& name) {
  if (name == "gaussian") return CorruptionKind::Gaussian;
  if (name == "shot") return CorruptionKind::Shot;
  if (name == "impulse") return CorruptionKind::Impulse;
  if (name == "defocus") return CorruptionKind::Defocus;
  throw std::invalid_argument("unknown corruption kind: " + name);
}

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::Gaussian: return "gaussian";
    case CorruptionKind::Shot: return "shot";
    case CorruptionKind::Impulse: return "impulse";
    case CorruptionKind::Defocus: return "defocus";
  }
  return "?";
}

namespace {

void defocus_blur(FeatureMapBatch& images, int index, int radius) {
  const int w = images.width(), h = images.height();
  // normalized disk kernel; borders use clamped (replicated) reads so a
  // constant image stays constant
  std::vector<std::pair<int, int>> taps;
  for (int dx = -radius; dx <= radius; ++dx)
    for (int dy = -radius; dy <= radius; ++dy)
      if (dx * dx + dy * dy <= radius * radius) taps.emplace_back(dx, dy);
  const double inv = 1.0 / taps.size();
  std::vector<double> plane(static_cast<std::size_t>(w) * h);
  for (int c = 0; c < images.channels(); ++c) {
    for (int x = 0; x < w; ++x)
      for (int y = 0; y < h; ++y) {
        double acc = 0.0;
        for (const auto& [dx, dy] : taps) {
          const int sx = std::clamp(x + dx, 0, w - 1);
          const int sy = std::clamp(y + dy, 0, h - 1);
          acc += images.at(index, c, sx, sy);
        }
        plane[static_cast<std::size_t>(x) * h + y] = acc * inv;
      }
    for (int x = 0; x < w; ++x)
      for (int y = 0; y < h; ++y)
        images.at(index, c, x, y) = plane[static_cast<std::size_t>(x) * h + y];
  }
}

}  // namespace

void corrupt_in_place(FeatureMapBatch& images, int index, CorruptionKind kind, int severity,
                      RandomSource& rng, const CorruptionLadders& ladders) {
  if (severity < 1 || severity > 5)
    throw std::invalid_argument("corrupt: severity must be in 1..5");
  const int s = severity - 1;
  const int c = images.channels(), w = images.width(), h = images.height();
  switch (kind) {
    case CorruptionKind::Gaussian:
      for (int ch = 0; ch < c; ++ch)
        for (int x = 0; x < w; ++x)
          for (int y = 0; y < h; ++y)
            images.at(index, ch, x, y) =
                clamp01(images.at(index, ch, x, y) + rng.normal(0.0, ladders.gaussian_sigma[s]));
      break;
    case CorruptionKind::Shot: {
      const double rate = ladders.shot_rate[s];
      for (int ch = 0; ch < c; ++ch)
        for (int x = 0; x < w; ++x)
          for (int y = 0; y < h; ++y) {
            const double lambda = clamp01(images.at(index, ch, x, y)) * rate;
            images.at(index, ch, x, y) = clamp01(double(rng.poisson(lambda)) / rate);
          }
      break;
    }
    case CorruptionKind::Impulse: {
      const double fraction = ladders.impulse_fraction[s];
      for (int ch = 0; ch < c; ++ch)
        for (int x = 0; x < w; ++x)
          for (int y = 0; y < h; ++y)
            if (rng.bernoulli(fraction))
              images.at(index, ch, x, y) = rng.bernoulli(0.5) ? 1.0 : 0.0;
      break;
    }
    case CorruptionKind::Defocus:
      defocus_blur(images, index, ladders.defocus_radius[s]);
      break;
  }
}

FeatureMapBatch corrupt(const FeatureMapBatch& image, CorruptionKind kind, int severity,
                        RandomSource& rng, const CorruptionLadders& ladders) {
  FeatureMapBatch out = image;
  for (int i = 0; i < out.batch(); ++i) corrupt_in_place(out, i, kind, severity, rng, ladders);
  return out;
}

LabeledImageSet stratified_fraction(const LabeledImageSet& set, double fraction,
                                    RandomSource& rng) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("stratified_fraction: fraction must be in (0, 1]");
  std::vector<std::vector<int>> by_class(set.class_count);
  for (int i = 0; i < set.size(); ++i) by_class[set.labels[i]].push_back(i);

  std::vector<int> keep;
  for (auto& idxs : by_class) {
    rng.shuffle(idxs);
    const int take = static_cast<int>(std::lround(fraction * idxs.size()));
    for (int i = 0; i < take; ++i) keep.push_back(idxs[i]);
  }
  if (keep.empty())
    throw InsufficientDataError("stratified_fraction: fraction keeps no images");
  std::sort(keep.begin(), keep.end());

  LabeledImageSet out;
  out.class_count = set.class_count;
  out.labels.resize(keep.size());
  out.images = FeatureMapBatch(static_cast<int>(keep.size()), set.images.channels(),
                               set.images.width(), set.images.height());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.labels[i] = set.labels[keep[i]];
    for (int c = 0; c < set.images.channels(); ++c)
      for (int x = 0; x < set.images.width(); ++x)
        for (int y = 0; y < set.images.height(); ++y)
          out.images.at(static_cast<int>(i), c, x, y) = set.images.at(keep[i], c, x, y);
  }
  return out;
}

}  // namespace dropcluster
