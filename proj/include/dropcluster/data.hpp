#pragma once

#include <array>
#include <string>
#include <vector>

#include "dropcluster/rng.hpp"
#include "dropcluster/tensor.hpp"

namespace dropcluster {

// Labeled image collection; pixel values in [0, 1] until normalization.
struct LabeledImageSet {
  FeatureMapBatch images;  // [n][channels][w][h]
  std::vector<int> labels;
  int class_count = 0;

  int size() const { return images.batch(); }
};

// CIFAR-10 binary format: records of 3073 bytes, one label byte followed by
// three 1024-byte row-major planes (R, G, B); bytes scaled by 1/255.
LabeledImageSet load_cifar10_binary(const std::string& path);

// Writes in the same format (values quantized back to bytes), so synthetic
// sets can reuse the whole pipeline.
void save_cifar10_binary(const LabeledImageSet& set, const std::string& path);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

ChannelStats compute_channel_stats(const LabeledImageSet& train_set);

// Normalize one image in place: (x - mean_c) / stddev_c.
void normalize_image(FeatureMapBatch& images, int index, const ChannelStats& stats);

// The random choices behind one augmentation, separated from the transform so
// specific draws can be forced in tests.
struct AugmentDraw {
  bool flip = false;        // horizontal mirror
  double angle_deg = 0.0;   // rotation, nearest-neighbor resampling
  int crop_dx = 4;          // offsets into the 4-pixel-padded image;
  int crop_dy = 4;          // (4, 4) is the centered crop
};

AugmentDraw sample_augment_draw(RandomSource& rng);

// flip -> rotate -> pad 4 + crop -> optional per-channel normalization.
void augment_into(const FeatureMapBatch& src, int src_idx, const AugmentDraw& draw,
                  const ChannelStats* normalize, FeatureMapBatch& dst, int dst_idx);

// Convenience wrapper over a single-image batch.
FeatureMapBatch augment(const FeatureMapBatch& image, RandomSource& rng,
                        const ChannelStats* normalize = nullptr);

// Feature maps with a planted connected partition of the lattice: every block
// takes a random per-sample (and per-channel) level, plus N(0, sigma^2) pixel
// noise. The returned pixel labels are the recovery oracle for clustering.
struct PlantedBatch {
  FeatureMapBatch data;
  std::vector<int> pixel_labels;  // length w*h, values in [0, k_blocks)
};

PlantedBatch synthetic_planted(int batch, int t, int w, int h, int k_blocks, double noise_sigma,
                               RandomSource& rng);

// Random connected partition of a w x h lattice into k blocks (multi-source
// randomized flood fill).
std::vector<int> random_connected_partition(int w, int h, int k_blocks, RandomSource& rng);

// Desk-scale classification task: class determines the orientation of a
// low-frequency grating, each sample gets a random phase, channels are
// phase-shifted copies, plus pixel noise. Easy for a small CNN yet spatially
// structured, so first-layer feature maps cluster well. Lower amplitude
// against fixed noise makes the task harder.
LabeledImageSet synthetic_labeled_set(int n, int class_count, int channels, int w, int h,
                                      double noise_sigma, RandomSource& rng,
                                      double amplitude = 0.35);

enum class CorruptionKind { Gaussian, Shot, Impulse, Defocus };

CorruptionKind corruption_kind_from_string(const std::string& name);
std::string to_string(CorruptionKind kind);

// Severity 1..5 parameter ladders, calibrated so severity 1 is mild. All
// overridable through the experiment config.
struct CorruptionLadders {
  std::array<double, 5> gaussian_sigma{0.04, 0.06, 0.08, 0.09, 0.10};
  std::array<double, 5> shot_rate{500.0, 250.0, 100.0, 75.0, 50.0};
  std::array<double, 5> impulse_fraction{0.01, 0.02, 0.03, 0.05, 0.07};
  std::array<int, 5> defocus_radius{1, 2, 3, 4, 6};
};

// Test-time corruption at severity 1..5; output stays within [0, 1].
void corrupt_in_place(FeatureMapBatch& images, int index, CorruptionKind kind, int severity,
                      RandomSource& rng, const CorruptionLadders& ladders = {});

FeatureMapBatch corrupt(const FeatureMapBatch& image, CorruptionKind kind, int severity,
                        RandomSource& rng, const CorruptionLadders& ladders = {});

// Stratified subsample keeping round(fraction * count) images per class.
LabeledImageSet stratified_fraction(const LabeledImageSet& set, double fraction,
                                    RandomSource& rng);

}  // namespace dropcluster
