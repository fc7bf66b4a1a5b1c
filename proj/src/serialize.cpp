#include "dropcluster/serialize.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dropcluster/errors.hpp"

namespace dropcluster {

namespace {

constexpr std::uint32_t kClusterMagic = 0x44434C53;  // "DCLS"
constexpr std::uint32_t kCheckpointMagic = 0x44434B50;  // "DCKP"
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ostream& os, const void* data, std::size_t size) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

void read_bytes(std::istream& is, void* data, std::size_t size) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  if (static_cast<std::size_t>(is.gcount()) != size)
    throw FormatError("unexpected end of stream");
}

void write_f64_vec(std::ostream& os, const std::vector<double>& v) {
  write_u64(os, v.size());
  for (double x : v) write_f64(os, x);
}

std::vector<double> read_f64_vec(std::istream& is) {
  std::vector<double> v(read_u64(is));
  for (double& x : v) x = read_f64(is);
  return v;
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 8);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  read_bytes(is, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  read_bytes(is, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& is) {
  const std::uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void save_cluster_state(const ClusterState& state, std::ostream& os) {
  write_u32(os, kClusterMagic);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(state.channels()));
  write_u32(os, static_cast<std::uint32_t>(state.n_clusters()));
  write_u32(os, static_cast<std::uint32_t>(state.width()));
  write_u32(os, static_cast<std::uint32_t>(state.height()));
  write_u32(os, static_cast<std::uint32_t>(state.epoch_computed()));
  write_bytes(os, state.raw_membership().data(), state.raw_membership().size());
  write_u32(os, static_cast<std::uint32_t>(state.unstructured().size()));
  for (int c : state.unstructured()) write_u32(os, static_cast<std::uint32_t>(c));
}

ClusterState load_cluster_state(std::istream& is) {
  if (read_u32(is) != kClusterMagic) throw FormatError("not a cluster state blob");
  if (read_u32(is) != kVersion) throw FormatError("unsupported cluster state version");
  const int t = static_cast<int>(read_u32(is));
  const int n = static_cast<int>(read_u32(is));
  const int w = static_cast<int>(read_u32(is));
  const int h = static_cast<int>(read_u32(is));
  const int epoch = static_cast<int>(read_u32(is));
  ClusterState state(t, n, w, h);
  state.set_epoch_computed(epoch);
  read_bytes(is, state.raw_membership().data(), state.raw_membership().size());
  const std::uint32_t n_unstructured = read_u32(is);
  for (std::uint32_t i = 0; i < n_unstructured; ++i)
    state.raw_unstructured().push_back(static_cast<int>(read_u32(is)));
  return state;
}

Checkpoint Checkpoint::capture(Network& net, const TrainResult& result, const TrainConfig& cfg,
                               const std::string& arch) {
  Checkpoint ckpt;
  ckpt.arch = arch;
  ckpt.in_channels = net.in_channels();
  ckpt.in_w = net.in_width();
  ckpt.in_h = net.in_height();
  ckpt.classes = net.classes();
  for (auto view : net.parameters()) ckpt.params.push_back(*view.values);
  ckpt.velocity = result.optimizer.velocity;
  ckpt.stats = result.stats;
  ckpt.regularizer = cfg.regularizer;
  ckpt.p = cfg.p;
  ckpt.n_clusters = cfg.n_clusters;
  ckpt.s = cfg.s;
  ckpt.block_size = cfg.block_size;
  ckpt.normalize_at_inference = cfg.normalize_at_inference;
  ckpt.epochs_trained = cfg.epochs;
  ckpt.seed = cfg.seed;
  ckpt.cluster_state = result.cluster_state;
  return ckpt;
}

Network Checkpoint::build_network() const {
  Network net(in_channels, in_w, in_h, classes, make_arch(arch, classes));
  auto views = net.parameters();
  if (views.size() != params.size())
    throw FormatError("checkpoint parameter count does not match architecture");
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].values->size() != params[i].size())
      throw FormatError("checkpoint parameter tensor size mismatch");
    *views[i].values = params[i];
  }
  return net;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::invalid_argument("save_checkpoint: cannot open " + path);
  write_u32(os, kCheckpointMagic);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(ckpt.arch.size()));
  write_bytes(os, ckpt.arch.data(), ckpt.arch.size());
  write_u32(os, static_cast<std::uint32_t>(ckpt.in_channels));
  write_u32(os, static_cast<std::uint32_t>(ckpt.in_w));
  write_u32(os, static_cast<std::uint32_t>(ckpt.in_h));
  write_u32(os, static_cast<std::uint32_t>(ckpt.classes));

  write_u32(os, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) write_f64_vec(os, p);
  write_u32(os, static_cast<std::uint32_t>(ckpt.velocity.size()));
  for (const auto& v : ckpt.velocity) write_f64_vec(os, v);
  write_f64_vec(os, ckpt.stats.mean);
  write_f64_vec(os, ckpt.stats.stddev);

  write_u32(os, static_cast<std::uint32_t>(ckpt.regularizer));
  write_f64(os, ckpt.p);
  write_u32(os, static_cast<std::uint32_t>(ckpt.n_clusters));
  write_u32(os, static_cast<std::uint32_t>(ckpt.s));
  write_u32(os, static_cast<std::uint32_t>(ckpt.block_size));
  write_u32(os, ckpt.normalize_at_inference ? 1 : 0);
  write_u32(os, static_cast<std::uint32_t>(ckpt.epochs_trained));
  write_u64(os, ckpt.seed);

  write_u32(os, ckpt.cluster_state ? 1 : 0);
  if (ckpt.cluster_state) save_cluster_state(*ckpt.cluster_state, os);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("load_checkpoint: cannot open " + path);
  if (read_u32(is) != kCheckpointMagic) throw FormatError("not a checkpoint file");
  if (read_u32(is) != kVersion) throw FormatError("unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.arch.resize(read_u32(is));
  read_bytes(is, ckpt.arch.data(), ckpt.arch.size());
  ckpt.in_channels = static_cast<int>(read_u32(is));
  ckpt.in_w = static_cast<int>(read_u32(is));
  ckpt.in_h = static_cast<int>(read_u32(is));
  ckpt.classes = static_cast<int>(read_u32(is));

  ckpt.params.resize(read_u32(is));
  for (auto& p : ckpt.params) p = read_f64_vec(is);
  ckpt.velocity.resize(read_u32(is));
  for (auto& v : ckpt.velocity) v = read_f64_vec(is);
  ckpt.stats.mean = read_f64_vec(is);
  ckpt.stats.stddev = read_f64_vec(is);

  ckpt.regularizer = static_cast<RegKind>(read_u32(is));
  ckpt.p = read_f64(is);
  ckpt.n_clusters = static_cast<int>(read_u32(is));
  ckpt.s = static_cast<int>(read_u32(is));
  ckpt.block_size = static_cast<int>(read_u32(is));
  ckpt.normalize_at_inference = read_u32(is) != 0;
  ckpt.epochs_trained = static_cast<int>(read_u32(is));
  ckpt.seed = read_u64(is);

  if (read_u32(is) != 0) ckpt.cluster_state = load_cluster_state(is);
  return ckpt;
}

void write_ppm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw std::invalid_argument("write_ppm: buffer size mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::invalid_argument("write_ppm: cannot open " + path);
  os << "P6\n" << width << " " << height << "\n255\n";
  write_bytes(os, rgb.data(), rgb.size());
}

std::vector<std::uint8_t> render_cluster_map(const ClusterState& state, int channel) {
  if (channel < 0 || channel >= state.channels())
    throw std::out_of_range("render_cluster_map: bad channel");
  const int w = state.width(), h = state.height();
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3, 0);

  if (state.is_unstructured(channel)) {
    for (std::size_t i = 0; i < rgb.size(); i += 3) {
      rgb[i] = 20;
      rgb[i + 1] = 20;
      rgb[i + 2] = 80;
    }
    return rgb;
  }

  const int n = state.n_clusters();
  for (int x = 0; x < w; ++x)
    for (int y = 0; y < h; ++y) {
      int cluster = 0;
      for (int c = 0; c < n; ++c)
        if (state.membership(channel, c, x, y)) {
          cluster = c;
          break;
        }
      // evenly spaced hues, full saturation
      const double hue = 360.0 * cluster / n;
      const double hp = hue / 60.0;
      const double f = hp - std::floor(hp);
      const double q = 1.0 - f;
      double r = 0, g = 0, b = 0;
      switch (static_cast<int>(hp) % 6) {
        case 0: r = 1; g = f; b = 0; break;
        case 1: r = q; g = 1; b = 0; break;
        case 2: r = 0; g = 1; b = f; break;
        case 3: r = 0; g = q; b = 1; break;
        case 4: r = f; g = 0; b = 1; break;
        case 5: r = 1; g = 0; b = q; break;
      }
      // image rows are the x axis of the feature map
      const std::size_t px = (static_cast<std::size_t>(x) * h + y) * 3;
      rgb[px] = static_cast<std::uint8_t>(std::lround(255 * r));
      rgb[px + 1] = static_cast<std::uint8_t>(std::lround(255 * g));
      rgb[px + 2] = static_cast<std::uint8_t>(std::lround(255 * b));
    }
  return rgb;
}

}  // namespace dropcluster
