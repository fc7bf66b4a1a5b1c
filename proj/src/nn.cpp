#include "dropcluster/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dropcluster/errors.hpp"

namespace dropcluster {

LayerSpec LayerSpec::conv(int out_channels, int kernel, int stride, int pad) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  return s;
}
LayerSpec LayerSpec::relu() { return LayerSpec{LayerKind::Relu}; }
LayerSpec LayerSpec::maxpool(int k) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool;
  s.pool = k;
  return s;
}
LayerSpec LayerSpec::regularizer_slot() { return LayerSpec{LayerKind::RegularizerSlot}; }
LayerSpec LayerSpec::flatten() { return LayerSpec{LayerKind::Flatten}; }
LayerSpec LayerSpec::dense(int out_features) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.out_features = out_features;
  return s;
}

namespace {

struct Shape {
  bool spatial = true;
  int c = 0, w = 0, h = 0;  // spatial
  int features = 0;         // dense
};

}  // namespace

class Layer {
 public:
  virtual ~Layer() = default;
  virtual void forward(const Activation& in, Activation& out, Mode mode) = 0;
  virtual void backward(const Activation& grad_out, Activation& grad_in) = 0;
  virtual std::vector<Network::ParamView> params() { return {}; }
  virtual void init(RandomSource&) {}
};

namespace {

class ConvLayer : public Layer {
 public:
  ConvLayer(int in_c, int in_w, int in_h, const LayerSpec& spec)
      : in_c_(in_c), in_w_(in_w), in_h_(in_h), out_c_(spec.out_channels), k_(spec.kernel),
        stride_(spec.stride), pad_(spec.pad) {
    if (out_c_ < 1 || k_ < 1 || stride_ < 1 || pad_ < 0)
      throw std::invalid_argument("conv: bad layer spec");
    out_w_ = (in_w_ + 2 * pad_ - k_) / stride_ + 1;
    out_h_ = (in_h_ + 2 * pad_ - k_) / stride_ + 1;
    if (out_w_ < 1 || out_h_ < 1) throw std::invalid_argument("conv: kernel larger than input");
    weights_.assign(static_cast<std::size_t>(out_c_) * in_c_ * k_ * k_, 0.0);
    bias_.assign(out_c_, 0.0);
    grad_w_.assign(weights_.size(), 0.0);
    grad_b_.assign(bias_.size(), 0.0);
  }

  int out_c() const { return out_c_; }
  int out_w() const { return out_w_; }
  int out_h() const { return out_h_; }

  void init(RandomSource& rng) override {
    const double limit = std::sqrt(6.0 / (double(in_c_) * k_ * k_));
    for (auto& w : weights_) w = rng.uniform(-limit, limit);
    std::fill(bias_.begin(), bias_.end(), 0.0);
  }

  double& wt(int oc, int ic, int kx, int ky) {
    return weights_[((static_cast<std::size_t>(oc) * in_c_ + ic) * k_ + kx) * k_ + ky];
  }
  double& gw(int oc, int ic, int kx, int ky) {
    return grad_w_[((static_cast<std::size_t>(oc) * in_c_ + ic) * k_ + kx) * k_ + ky];
  }

  void forward(const Activation& in, Activation& out, Mode) override {
    cached_in_ = in.maps;
    const int b = in.maps.batch();
    out.spatial = true;
    out.maps = FeatureMapBatch(b, out_c_, out_w_, out_h_);
    for (int bi = 0; bi < b; ++bi)
      for (int oc = 0; oc < out_c_; ++oc) {
        for (int ox = 0; ox < out_w_; ++ox)
          for (int oy = 0; oy < out_h_; ++oy) out.maps.at(bi, oc, ox, oy) = bias_[oc];
        for (int ic = 0; ic < in_c_; ++ic)
          for (int kx = 0; kx < k_; ++kx)
            for (int ky = 0; ky < k_; ++ky) {
              const double wv = wt(oc, ic, kx, ky);
              for (int ox = 0; ox < out_w_; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= in_w_) continue;
                for (int oy = 0; oy < out_h_; ++oy) {
                  const int iy = oy * stride_ - pad_ + ky;
                  if (iy < 0 || iy >= in_h_) continue;
                  out.maps.at(bi, oc, ox, oy) += wv * in.maps.at(bi, ic, ix, iy);
                }
              }
            }
      }
  }

  void backward(const Activation& grad_out, Activation& grad_in) override {
    const int b = grad_out.maps.batch();
    grad_in.spatial = true;
    grad_in.maps = FeatureMapBatch(b, in_c_, in_w_, in_h_);
    for (int bi = 0; bi < b; ++bi)
      for (int oc = 0; oc < out_c_; ++oc) {
        for (int ox = 0; ox < out_w_; ++ox)
          for (int oy = 0; oy < out_h_; ++oy)
            grad_b_[oc] += grad_out.maps.at(bi, oc, ox, oy);
        for (int ic = 0; ic < in_c_; ++ic)
          for (int kx = 0; kx < k_; ++kx)
            for (int ky = 0; ky < k_; ++ky) {
              const double wv = wt(oc, ic, kx, ky);
              double gw_acc = 0.0;
              for (int ox = 0; ox < out_w_; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= in_w_) continue;
                for (int oy = 0; oy < out_h_; ++oy) {
                  const int iy = oy * stride_ - pad_ + ky;
                  if (iy < 0 || iy >= in_h_) continue;
                  const double go = grad_out.maps.at(bi, oc, ox, oy);
                  gw_acc += go * cached_in_.at(bi, ic, ix, iy);
                  grad_in.maps.at(bi, ic, ix, iy) += go * wv;
                }
              }
              gw(oc, ic, kx, ky) += gw_acc;
            }
      }
  }

  std::vector<Network::ParamView> params() override {
    return {{&weights_, &grad_w_}, {&bias_, &grad_b_}};
  }

 private:
  int in_c_, in_w_, in_h_, out_c_, k_, stride_, pad_;
  int out_w_, out_h_;
  std::vector<double> weights_, bias_, grad_w_, grad_b_;
  FeatureMapBatch cached_in_;
};

class ReluLayer : public Layer {
 public:
  void forward(const Activation& in, Activation& out, Mode) override {
    out = in;
    auto clamp_all = [](std::vector<double>& v) {
      for (double& x : v)
        if (x < 0.0) x = 0.0;
    };
    if (out.spatial)
      clamp_all(out.maps.values());
    else
      clamp_all(out.dense.v);
    cached_out_ = out;
  }

  void backward(const Activation& grad_out, Activation& grad_in) override {
    grad_in = grad_out;
    if (grad_in.spatial) {
      for (std::size_t i = 0; i < grad_in.maps.values().size(); ++i)
        if (cached_out_.maps.values()[i] <= 0.0) grad_in.maps.values()[i] = 0.0;
    } else {
      for (std::size_t i = 0; i < grad_in.dense.v.size(); ++i)
        if (cached_out_.dense.v[i] <= 0.0) grad_in.dense.v[i] = 0.0;
    }
  }

 private:
  Activation cached_out_;
};

class MaxPoolLayer : public Layer {
 public:
  MaxPoolLayer(int in_c, int in_w, int in_h, int k)
      : c_(in_c), in_w_(in_w), in_h_(in_h), k_(k), out_w_(in_w / k), out_h_(in_h / k) {
    if (k < 1 || out_w_ < 1 || out_h_ < 1)
      throw std::invalid_argument("maxpool: window does not fit input");
  }

  int out_w() const { return out_w_; }
  int out_h() const { return out_h_; }

  void forward(const Activation& in, Activation& out, Mode) override {
    const int b = in.maps.batch();
    out.spatial = true;
    out.maps = FeatureMapBatch(b, c_, out_w_, out_h_);
    argmax_.assign(static_cast<std::size_t>(b) * c_ * out_w_ * out_h_, 0);
    std::size_t slot = 0;
    for (int bi = 0; bi < b; ++bi)
      for (int c = 0; c < c_; ++c)
        for (int ox = 0; ox < out_w_; ++ox)
          for (int oy = 0; oy < out_h_; ++oy, ++slot) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_idx = 0;
            for (int dx = 0; dx < k_; ++dx)
              for (int dy = 0; dy < k_; ++dy) {
                const std::size_t idx = in.maps.index(bi, c, ox * k_ + dx, oy * k_ + dy);
                const double v = in.maps.values()[idx];
                if (v > best) {
                  best = v;
                  best_idx = idx;
                }
              }
            out.maps.at(bi, c, ox, oy) = best;
            argmax_[slot] = best_idx;
          }
  }

  void backward(const Activation& grad_out, Activation& grad_in) override {
    const int b = grad_out.maps.batch();
    grad_in.spatial = true;
    grad_in.maps = FeatureMapBatch(b, c_, in_w_, in_h_);
    std::size_t slot = 0;
    for (int bi = 0; bi < b; ++bi)
      for (int c = 0; c < c_; ++c)
        for (int ox = 0; ox < out_w_; ++ox)
          for (int oy = 0; oy < out_h_; ++oy, ++slot)
            grad_in.maps.values()[argmax_[slot]] += grad_out.maps.at(bi, c, ox, oy);
  }

 private:
  int c_, in_w_, in_h_, k_, out_w_, out_h_;
  std::vector<std::size_t> argmax_;
};

class SlotLayer : public Layer {
 public:
  void set_mask(std::optional<DropMask> mask) { mask_ = std::move(mask); }

  void forward(const Activation& in, Activation& out, Mode) override {
    out.spatial = true;
    out.maps = mask_ ? apply_mask(in.maps, *mask_) : in.maps;
  }

  void backward(const Activation& grad_out, Activation& grad_in) override {
    grad_in.spatial = true;
    grad_in.maps = mask_ ? mask_gradient(grad_out.maps, *mask_) : grad_out.maps;
  }

 private:
  std::optional<DropMask> mask_;
};

class FlattenLayer : public Layer {
 public:
  FlattenLayer(int c, int w, int h) : c_(c), w_(w), h_(h) {}

  void forward(const Activation& in, Activation& out, Mode) override {
    const int b = in.maps.batch();
    out.spatial = false;
    out.dense = Matrix(b, c_ * w_ * h_);
    out.dense.v = in.maps.values();
  }

  void backward(const Activation& grad_out, Activation& grad_in) override {
    grad_in.spatial = true;
    grad_in.maps = FeatureMapBatch(grad_out.dense.rows, c_, w_, h_);
    grad_in.maps.values() = grad_out.dense.v;
  }

 private:
  int c_, w_, h_;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(int in_f, int out_f) : in_f_(in_f), out_f_(out_f) {
    if (in_f < 1 || out_f < 1) throw std::invalid_argument("dense: bad feature counts");
    weights_.assign(static_cast<std::size_t>(out_f_) * in_f_, 0.0);
    bias_.assign(out_f_, 0.0);
    grad_w_.assign(weights_.size(), 0.0);
    grad_b_.assign(bias_.size(), 0.0);
  }

  void init(RandomSource& rng) override {
    const double limit = std::sqrt(6.0 / in_f_);
    for (auto& w : weights_) w = rng.uniform(-limit, limit);
    std::fill(bias_.begin(), bias_.end(), 0.0);
  }

  void forward(const Activation& in, Activation& out, Mode) override {
    cached_in_ = in.dense;
    const int b = in.dense.rows;
    out.spatial = false;
    out.dense = Matrix(b, out_f_);
    for (int bi = 0; bi < b; ++bi)
      for (int o = 0; o < out_f_; ++o) {
        double acc = bias_[o];
        const double* wrow = weights_.data() + static_cast<std::size_t>(o) * in_f_;
        const double* irow = in.dense.v.data() + static_cast<std::size_t>(bi) * in_f_;
        for (int i = 0; i < in_f_; ++i) acc += wrow[i] * irow[i];
        out.dense.at(bi, o) = acc;
      }
  }

  void backward(const Activation& grad_out, Activation& grad_in) override {
    const int b = grad_out.dense.rows;
    grad_in.spatial = false;
    grad_in.dense = Matrix(b, in_f_);
    for (int bi = 0; bi < b; ++bi) {
      const double* irow = cached_in_.v.data() + static_cast<std::size_t>(bi) * in_f_;
      double* grow = grad_in.dense.v.data() + static_cast<std::size_t>(bi) * in_f_;
      for (int o = 0; o < out_f_; ++o) {
        const double go = grad_out.dense.at(bi, o);
        grad_b_[o] += go;
        const double* wrow = weights_.data() + static_cast<std::size_t>(o) * in_f_;
        double* gw = grad_w_.data() + static_cast<std::size_t>(o) * in_f_;
        for (int i = 0; i < in_f_; ++i) {
          gw[i] += go * irow[i];
          grow[i] += go * wrow[i];
        }
      }
    }
  }

  std::vector<Network::ParamView> params() override {
    return {{&weights_, &grad_w_}, {&bias_, &grad_b_}};
  }

 private:
  int in_f_, out_f_;
  std::vector<double> weights_, bias_, grad_w_, grad_b_;
  Matrix cached_in_;
};

}  // namespace

Network::Network(int in_channels, int in_w, int in_h, int classes,
                 const std::vector<LayerSpec>& specs)
    : in_c_(in_channels), in_w_(in_w), in_h_(in_h), classes_(classes), specs_(specs) {
  if (in_channels < 1 || in_w < 1 || in_h < 1 || classes < 2)
    throw std::invalid_argument("Network: bad input shape");

  Shape shape{true, in_channels, in_w, in_h, 0};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& spec = specs[i];
    switch (spec.kind) {
      case LayerKind::Conv: {
        if (!shape.spatial) throw std::invalid_argument("Network: conv after flatten");
        auto layer = std::make_unique<ConvLayer>(shape.c, shape.w, shape.h, spec);
        shape = {true, layer->out_c(), layer->out_w(), layer->out_h(), 0};
        if (first_conv_index_ < 0) first_conv_index_ = static_cast<int>(i);
        layers_.push_back(std::move(layer));
        break;
      }
      case LayerKind::Relu:
        layers_.push_back(std::make_unique<ReluLayer>());
        break;
      case LayerKind::MaxPool: {
        if (!shape.spatial) throw std::invalid_argument("Network: maxpool after flatten");
        auto layer = std::make_unique<MaxPoolLayer>(shape.c, shape.w, shape.h, spec.pool);
        shape = {true, shape.c, layer->out_w(), layer->out_h(), 0};
        layers_.push_back(std::move(layer));
        break;
      }
      case LayerKind::RegularizerSlot: {
        if (!shape.spatial) throw std::invalid_argument("Network: slot after flatten");
        if (slot_index_ >= 0) throw std::invalid_argument("Network: more than one slot");
        if (first_conv_index_ < 0 || static_cast<int>(i) != first_conv_index_ + 1)
          throw std::invalid_argument("Network: slot must directly follow the first conv");
        slot_c_ = shape.c;
        slot_w_ = shape.w;
        slot_h_ = shape.h;
        slot_index_ = static_cast<int>(i);
        layers_.push_back(std::make_unique<SlotLayer>());
        break;
      }
      case LayerKind::Flatten:
        if (!shape.spatial) throw std::invalid_argument("Network: flatten twice");
        layers_.push_back(std::make_unique<FlattenLayer>(shape.c, shape.w, shape.h));
        shape = {false, 0, 0, 0, shape.c * shape.w * shape.h};
        break;
      case LayerKind::Dense:
        if (shape.spatial) throw std::invalid_argument("Network: dense before flatten");
        layers_.push_back(std::make_unique<DenseLayer>(shape.features, spec.out_features));
        shape = {false, 0, 0, 0, spec.out_features};
        break;
    }
  }
  if (slot_index_ < 0) throw std::invalid_argument("Network: missing regularizer slot");
  if (shape.spatial || shape.features != classes)
    throw std::invalid_argument("Network: final layer must produce one logit per class");
}

Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

void Network::init_params(RandomSource& rng) {
  for (auto& layer : layers_) layer->init(rng);
}

Matrix Network::forward(const FeatureMapBatch& input, Mode mode) {
  if (input.channels() != in_c_ || input.width() != in_w_ || input.height() != in_h_)
    throw std::invalid_argument("Network::forward: input shape mismatch");
  Activation act;
  act.spatial = true;
  act.maps = input;
  Activation next;
  for (auto& layer : layers_) {
    layer->forward(act, next, mode);
    std::swap(act, next);
  }
  return act.dense;
}

double Network::loss(const Matrix& logits, const std::vector<int>& labels) const {
  if (logits.rows != static_cast<int>(labels.size()))
    throw std::invalid_argument("loss: label count mismatch");
  double total = 0.0;
  for (int b = 0; b < logits.rows; ++b) {
    double mx = logits.at(b, 0);
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(b, j));
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(b, j) - mx);
    total += std::log(sum) + mx - logits.at(b, labels[b]);
  }
  return total / logits.rows;
}

double Network::backward(const Matrix& logits, const std::vector<int>& labels) {
  const double loss_value = loss(logits, labels);
  Activation grad;
  grad.spatial = false;
  grad.dense = Matrix(logits.rows, logits.cols);
  for (int b = 0; b < logits.rows; ++b) {
    double mx = logits.at(b, 0);
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(b, j));
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(b, j) - mx);
    for (int j = 0; j < logits.cols; ++j) {
      const double softmax = std::exp(logits.at(b, j) - mx) / sum;
      grad.dense.at(b, j) = (softmax - (j == labels[b] ? 1.0 : 0.0)) / logits.rows;
    }
  }
  Activation next;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    (*it)->backward(grad, next);
    std::swap(grad, next);
  }
  return loss_value;
}

void Network::zero_grad() {
  for (auto view : parameters()) std::fill(view.grads->begin(), view.grads->end(), 0.0);
}

FeatureMapBatch Network::first_conv_activations(const FeatureMapBatch& input) {
  Activation act;
  act.spatial = true;
  act.maps = input;
  Activation next;
  for (int i = 0; i <= first_conv_index_; ++i) {
    layers_[i]->forward(act, next, Mode::Inference);
    std::swap(act, next);
  }
  return act.maps;
}

void Network::set_slot_mask(std::optional<DropMask> mask) {
  static_cast<SlotLayer*>(layers_[slot_index_].get())->set_mask(std::move(mask));
}

int Network::slot_channels() const { return slot_c_; }
int Network::slot_width() const { return slot_w_; }
int Network::slot_height() const { return slot_h_; }

std::vector<Network::ParamView> Network::parameters() {
  std::vector<ParamView> out;
  for (auto& layer : layers_) {
    auto views = layer->params();
    out.insert(out.end(), views.begin(), views.end());
  }
  return out;
}

std::vector<LayerSpec> make_arch(const std::string& name, int classes) {
  if (name == "lenet5")
    return {LayerSpec::conv(6, 5),  LayerSpec::regularizer_slot(),
            LayerSpec::relu(),      LayerSpec::maxpool(2),
            LayerSpec::conv(16, 5), LayerSpec::relu(),
            LayerSpec::maxpool(2),  LayerSpec::flatten(),
            LayerSpec::dense(120),  LayerSpec::relu(),
            LayerSpec::dense(84),   LayerSpec::relu(),
            LayerSpec::dense(classes)};
  if (name == "tiny")
    return {LayerSpec::conv(6, 5), LayerSpec::regularizer_slot(), LayerSpec::relu(),
            LayerSpec::maxpool(4), LayerSpec::flatten(),          LayerSpec::dense(64),
            LayerSpec::relu(),     LayerSpec::dense(classes)};
  throw std::invalid_argument("make_arch: unknown architecture " + name);
}

void OptimizerState::init_for(Network& net) {
  velocity.clear();
  for (auto view : net.parameters()) velocity.emplace_back(view.values->size(), 0.0);
}

double lr_schedule(int epoch, const OptimizerState& opt) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: epoch must be >= 0");
  double lr = opt.lr;
  for (int milestone : opt.milestones)
    if (epoch >= milestone) lr *= opt.decay_factor;
  return lr;
}

void sgd_momentum_step(Network& net, OptimizerState& opt, double lr) {
  auto views = net.parameters();
  if (views.size() != opt.velocity.size())
    throw StateError("sgd_momentum_step: optimizer not initialized for this network");
  for (std::size_t p = 0; p < views.size(); ++p) {
    auto& theta = *views[p].values;
    auto& grad = *views[p].grads;
    auto& vel = opt.velocity[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + opt.weight_decay * theta[i];
      vel[i] = opt.momentum * vel[i] - lr * g;
      theta[i] += vel[i];
    }
  }
}

RegKind reg_kind_from_string(const std::string& name) {
  if (name == "none") return RegKind::None;
  if (name == "dropout") return RegKind::Dropout;
  if (name == "spatialdropout") return RegKind::SpatialDropout;
  if (name == "dropblock") return RegKind::DropBlock;
  if (name == "dropcluster") return RegKind::DropCluster;
  throw std::invalid_argument("unknown regularizer: " + name);
}

std::string to_string(RegKind kind) {
  switch (kind) {
    case RegKind::None: return "none";
    case RegKind::Dropout: return "dropout";
    case RegKind::SpatialDropout: return "spatialdropout";
    case RegKind::DropBlock: return "dropblock";
    case RegKind::DropCluster: return "dropcluster";
  }
  return "?";
}

namespace {

FeatureMapBatch gather_batch(const FeatureMapBatch& images, const std::vector<int>& order,
                             int begin, int count) {
  FeatureMapBatch out(count, images.channels(), images.width(), images.height());
  const std::size_t image_size =
      static_cast<std::size_t>(images.channels()) * images.width() * images.height();
  for (int i = 0; i < count; ++i) {
    const double* src = images.values().data() + order[begin + i] * image_size;
    std::copy(src, src + image_size, out.values().data() + i * image_size);
  }
  return out;
}

std::optional<DropMask> training_mask(const TrainConfig& cfg, Network& net,
                                      const std::optional<ClusterState>& state,
                                      RandomSource& rng) {
  const int t = net.slot_channels(), w = net.slot_width(), h = net.slot_height();
  switch (cfg.regularizer) {
    case RegKind::None: return std::nullopt;
    case RegKind::Dropout: return dropout_mask(t, w, h, cfg.p, rng);
    case RegKind::SpatialDropout: return spatial_dropout_mask(t, w, h, cfg.p, rng);
    case RegKind::DropBlock: return dropblock_mask(t, w, h, cfg.p, cfg.block_size, rng);
    case RegKind::DropCluster: {
      if (!state) return std::nullopt;  // inactive until the first recomputation epoch
      RegularizerConfig rc{cfg.p, cfg.n_clusters, cfg.s, Mode::Training,
                           cfg.normalize_at_inference};
      return build_mask(*state, rc, rng);
    }
  }
  return std::nullopt;
}

std::optional<DropMask> inference_mask(const TrainConfig& cfg,
                                       const std::optional<ClusterState>& state) {
  if (cfg.regularizer != RegKind::DropCluster || !state) return std::nullopt;
  RegularizerConfig rc{cfg.p, cfg.n_clusters, cfg.s, Mode::Inference, cfg.normalize_at_inference};
  RandomSource unused(0);  // inference mask construction draws nothing
  return build_mask(*state, rc, unused);
}

}  // namespace

std::pair<double, double> evaluate(Network& net, const LabeledImageSet& test_set, int batch_size,
                                   const TrainConfig& cfg,
                                   const std::optional<ClusterState>& state,
                                   const ChannelStats* normalize) {
  net.set_slot_mask(inference_mask(cfg, state));
  const int n = test_set.size();
  const int top_k = std::min(5, test_set.class_count);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  int hit1 = 0, hit5 = 0;
  for (int begin = 0; begin < n; begin += batch_size) {
    const int count = std::min(batch_size, n - begin);
    FeatureMapBatch batch = gather_batch(test_set.images, order, begin, count);
    if (normalize)
      for (int i = 0; i < count; ++i) normalize_image(batch, i, *normalize);
    const Matrix logits = net.forward(batch, Mode::Inference);
    for (int i = 0; i < count; ++i) {
      const int label = test_set.labels[begin + i];
      const double own = logits.at(i, label);
      int better = 0;
      for (int j = 0; j < logits.cols; ++j)
        if (logits.at(i, j) > own) ++better;
      if (better == 0) ++hit1;
      if (better < top_k) ++hit5;
    }
  }
  net.set_slot_mask(std::nullopt);
  return {double(hit1) / n, double(hit5) / n};
}

TrainResult train(Network& net, const LabeledImageSet& train_set, const LabeledImageSet& test_set,
                  const TrainConfig& cfg) {
  if (train_set.size() < 1 || test_set.size() < 1)
    throw std::invalid_argument("train: datasets must be non-empty");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("train: bad config");

  TrainConfig c = cfg;
  if (c.milestones.empty())
    c.milestones = {std::max(1, (c.epochs * 3) / 5), std::max(1, (c.epochs * 4) / 5)};
  const int window = c.final_window > 0 ? std::min(c.final_window, c.epochs)
                                        : std::max(1, c.epochs / 5);

  RandomSource root(c.seed);
  RandomSource init_rng = root.child(0);
  RandomSource shuffle_rng = root.child(1);
  RandomSource augment_rng = root.child(2);
  RandomSource mask_rng = root.child(3);
  RandomSource cluster_rng = root.child(4);

  net.init_params(init_rng);

  TrainResult result;
  if (c.augment) result.stats = compute_channel_stats(train_set);
  const ChannelStats* stats = c.augment ? &result.stats : nullptr;

  OptimizerState opt;
  opt.lr = c.lr;
  opt.momentum = c.momentum;
  opt.weight_decay = c.weight_decay;
  opt.decay_factor = c.lr_decay;
  opt.milestones = c.milestones;
  opt.init_for(net);

  std::optional<ClusterState> cluster_state;
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t image_size = static_cast<std::size_t>(train_set.images.channels()) *
                                 train_set.images.width() * train_set.images.height();

  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, opt);
    shuffle_rng.shuffle(order);

    if (c.regularizer == RegKind::DropCluster && schedule_should_recompute(epoch, c.s)) {
      const int count = std::min(c.batch_size, train_set.size());
      FeatureMapBatch batch = gather_batch(train_set.images, order, 0, count);
      if (c.augment)
        for (int i = 0; i < count; ++i)
          augment_into(train_set.images, order[i], sample_augment_draw(cluster_rng), stats, batch,
                       i);
      const FeatureMapBatch acts = net.first_conv_activations(batch);
      cluster_state = compute_clusters(acts, c.n_clusters, c.rena_max_iter);
      cluster_state->set_epoch_computed(epoch);
    }
    if (c.regularizer == RegKind::DropCluster && epoch >= c.s && !cluster_state)
      throw StateError("train: cluster state missing after the first recomputation epoch");

    double loss_sum = 0.0;
    int batches = 0;
    for (int begin = 0; begin < train_set.size(); begin += c.batch_size) {
      const int count = std::min(c.batch_size, train_set.size() - begin);
      FeatureMapBatch input(count, train_set.images.channels(), train_set.images.width(),
                            train_set.images.height());
      std::vector<int> labels(count);
      for (int i = 0; i < count; ++i) {
        const int idx = order[begin + i];
        labels[i] = train_set.labels[idx];
        if (c.augment) {
          augment_into(train_set.images, idx, sample_augment_draw(augment_rng), stats, input, i);
        } else {
          const double* src = train_set.images.values().data() + idx * image_size;
          std::copy(src, src + image_size, input.values().data() + i * image_size);
        }
      }

      net.set_slot_mask(training_mask(c, net, cluster_state, mask_rng));
      const Matrix logits = net.forward(input, Mode::Training);
      net.zero_grad();
      loss_sum += net.backward(logits, labels);
      sgd_momentum_step(net, opt, lr);
      ++batches;
    }
    net.set_slot_mask(std::nullopt);

    const auto [top1, top5] = evaluate(net, test_set, c.batch_size, c, cluster_state, stats);
    EpochRecord rec{epoch, lr, loss_sum / batches, top1, top5};
    result.metrics.epochs.push_back(rec);
    if (c.on_epoch) c.on_epoch(epoch, lr, rec.train_loss, top1, top5);
  }

  result.metrics.window = window;
  double acc1 = 0.0, acc5 = 0.0;
  for (int i = c.epochs - window; i < c.epochs; ++i) {
    acc1 += result.metrics.epochs[i].top1;
    acc5 += result.metrics.epochs[i].top5;
  }
  result.metrics.final_top1 = acc1 / window;
  result.metrics.final_top5 = acc5 / window;
  result.optimizer = std::move(opt);
  result.cluster_state = std::move(cluster_state);
  return result;
}

}  // namespace dropcluster
