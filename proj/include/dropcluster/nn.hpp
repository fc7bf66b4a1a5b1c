#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dropcluster/data.hpp"
#include "dropcluster/dropcluster.hpp"
#include "dropcluster/rng.hpp"
#include "dropcluster/tensor.hpp"

namespace dropcluster {

enum class LayerKind { Conv, Relu, MaxPool, RegularizerSlot, Flatten, Dense };

struct LayerSpec {
  LayerKind kind;
  int out_channels = 0;  // conv
  int kernel = 0;        // conv
  int stride = 1;        // conv
  int pad = 0;           // conv
  int pool = 0;          // maxpool window (non-overlapping)
  int out_features = 0;  // dense

  static LayerSpec conv(int out_channels, int kernel, int stride = 1, int pad = 0);
  static LayerSpec relu();
  static LayerSpec maxpool(int k);
  static LayerSpec regularizer_slot();
  static LayerSpec flatten();
  static LayerSpec dense(int out_features);
};

// Activations flowing between layers: spatial maps before Flatten, a dense
// matrix after it.
struct Activation {
  bool spatial = true;
  FeatureMapBatch maps;
  Matrix dense;
};

class Layer;

// Minimal differentiable CNN with a manual forward/backward pass and a
// softmax cross-entropy head. Exactly one regularizer slot is required,
// immediately after the first convolution. All arithmetic is double
// precision so gradients can be checked against finite differences.
class Network {
 public:
  Network(int in_channels, int in_w, int in_h, int classes,
          const std::vector<LayerSpec>& specs);
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  void init_params(RandomSource& rng);

  // Logits [batch x classes]; intermediates are cached for backward.
  Matrix forward(const FeatureMapBatch& input, Mode mode);

  // Mean softmax cross-entropy over the batch.
  double loss(const Matrix& logits, const std::vector<int>& labels) const;

  // Backward from the last forward's cache; accumulates parameter gradients
  // (zero_grad first). Returns the loss.
  double backward(const Matrix& logits, const std::vector<int>& labels);

  void zero_grad();

  // Activations right after the first convolution (before the slot), the
  // input of cluster learning.
  FeatureMapBatch first_conv_activations(const FeatureMapBatch& input);

  // Mask applied by the regularizer slot; nullopt means pass-through.
  void set_slot_mask(std::optional<DropMask> mask);

  // Shape of the slot input: channels/width/height of the first conv output.
  int slot_channels() const;
  int slot_width() const;
  int slot_height() const;

  int classes() const { return classes_; }
  int in_channels() const { return in_c_; }
  int in_width() const { return in_w_; }
  int in_height() const { return in_h_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }

  // Flat views over every parameter/gradient tensor, in layer order.
  struct ParamView {
    std::vector<double>* values;
    std::vector<double>* grads;
  };
  std::vector<ParamView> parameters();

 private:
  int in_c_, in_w_, in_h_, classes_;
  std::vector<LayerSpec> specs_;
  std::vector<std::unique_ptr<Layer>> layers_;
  int slot_index_ = -1;
  int first_conv_index_ = -1;
  int slot_c_ = 0, slot_w_ = 0, slot_h_ = 0;
};

// Named desk-scale architectures.
std::vector<LayerSpec> make_arch(const std::string& name, int classes);

struct OptimizerState {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double decay_factor = 0.1;
  std::vector<int> milestones;
  std::vector<std::vector<double>> velocity;  // one per parameter tensor

  void init_for(Network& net);
};

// Initial lr decayed by decay_factor at every milestone <= epoch.
double lr_schedule(int epoch, const OptimizerState& opt);

// Classical momentum: v <- mu*v - lr*(g + wd*theta); theta <- theta + v.
void sgd_momentum_step(Network& net, OptimizerState& opt, double lr);

enum class RegKind { None, Dropout, SpatialDropout, DropBlock, DropCluster };

RegKind reg_kind_from_string(const std::string& name);
std::string to_string(RegKind kind);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_decay = 0.1;
  std::vector<int> milestones;  // empty -> {60%, 80%} of epochs

  RegKind regularizer = RegKind::None;
  double p = 0.1;
  int n_clusters = 15;
  int s = 50;
  int block_size = 5;
  bool normalize_at_inference = true;
  int rena_max_iter = 1000;

  std::uint64_t seed = 0;
  int final_window = 0;  // 0 -> 20% of epochs
  bool augment = false;

  std::function<void(int epoch, double lr, double loss, double top1, double top5)> on_epoch;
};

struct EpochRecord {
  int epoch;
  double lr;
  double train_loss;
  double top1;
  double top5;
};

struct Metrics {
  std::vector<EpochRecord> epochs;
  double final_top1 = 0.0;
  double final_top5 = 0.0;
  int window = 0;
};

struct TrainResult {
  Metrics metrics;
  OptimizerState optimizer;
  std::optional<ClusterState> cluster_state;
  ChannelStats stats;  // augmentation normalization stats (empty if unused)
};

// Full training schedule: shuffled mini-batches, milestone lr decay, the
// regularizer applied at the slot each batch, and for DropCluster the
// cluster recomputation every s epochs on the first mini-batch.
TrainResult train(Network& net, const LabeledImageSet& train_set, const LabeledImageSet& test_set,
                  const TrainConfig& cfg);

// Top-1/top-5 accuracy (fractions in [0, 1]) under Inference-mode masking.
// When normalize is given, every test image is standardized with it first.
std::pair<double, double> evaluate(Network& net, const LabeledImageSet& test_set, int batch_size,
                                   const TrainConfig& cfg,
                                   const std::optional<ClusterState>& state,
                                   const ChannelStats* normalize = nullptr);

}  // namespace dropcluster
