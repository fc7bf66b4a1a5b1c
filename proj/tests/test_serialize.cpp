#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dropcluster/data.hpp"
#include "dropcluster/errors.hpp"
#include "dropcluster/serialize.hpp"

using namespace dropcluster;
namespace fs = std::filesystem;

TEST_CASE("binary primitives roundtrip and detect truncation") {
  std::stringstream ss;
  write_u32(ss, 0xDEADBEEFu);
  write_u64(ss, 0x0123456789ABCDEFull);
  write_f64(ss, -3.14159e42);
  CHECK(read_u32(ss) == 0xDEADBEEFu);
  CHECK(read_u64(ss) == 0x0123456789ABCDEFull);
  CHECK(read_f64(ss) == -3.14159e42);

  std::stringstream truncated;
  truncated.put(1);
  CHECK_THROWS_AS(read_u32(truncated), FormatError);
}

TEST_CASE("ClusterState: save/load roundtrip") {
  ClusterState state(3, 4, 5, 6);
  state.set_epoch_computed(42);
  RandomSource rng(1);
  for (int x = 0; x < 5; ++x)
    for (int y = 0; y < 6; ++y) {
      state.set_membership(0, static_cast<int>(rng.uniform_int(4)), x, y, true);
      state.set_membership(2, static_cast<int>(rng.uniform_int(4)), x, y, true);
    }
  state.mark_unstructured(1);

  std::stringstream ss;
  save_cluster_state(state, ss);
  const ClusterState loaded = load_cluster_state(ss);
  CHECK(loaded.channels() == 3);
  CHECK(loaded.n_clusters() == 4);
  CHECK(loaded.width() == 5);
  CHECK(loaded.height() == 6);
  CHECK(loaded.epoch_computed() == 42);
  CHECK(loaded.unstructured() == std::vector<int>{1});
  CHECK(loaded.raw_membership() == state.raw_membership());
}

TEST_CASE("checkpoint: roundtrip rebuilds an identical network") {
  const std::string path = (fs::temp_directory_path() / "dc_ckpt_test.bin").string();

  RandomSource data_rng(2);
  const LabeledImageSet train_set = synthetic_labeled_set(30, 3, 1, 12, 12, 0.05, data_rng);
  RandomSource test_rng(3);
  const LabeledImageSet test_set = synthetic_labeled_set(10, 3, 1, 12, 12, 0.05, test_rng);

  Network net(1, 12, 12, 3, make_arch("tiny", 3));
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 10;
  cfg.lr = 0.05;
  cfg.seed = 4;
  cfg.s = 2;
  cfg.n_clusters = 6;
  cfg.regularizer = RegKind::DropCluster;
  const TrainResult result = train(net, train_set, test_set, cfg);
  REQUIRE(result.cluster_state.has_value());

  const Checkpoint ckpt = Checkpoint::capture(net, result, cfg, "tiny");
  save_checkpoint(ckpt, path);
  const Checkpoint loaded = load_checkpoint(path);
  std::remove(path.c_str());

  CHECK(loaded.arch == "tiny");
  CHECK(loaded.classes == 3);
  CHECK(loaded.regularizer == RegKind::DropCluster);
  CHECK(loaded.params == ckpt.params);
  CHECK(loaded.velocity == ckpt.velocity);
  REQUIRE(loaded.cluster_state.has_value());
  CHECK(loaded.cluster_state->raw_membership() == result.cluster_state->raw_membership());

  Network rebuilt = loaded.build_network();
  FeatureMapBatch probe(2, 1, 12, 12, 0.3);
  const Matrix a = net.forward(probe, Mode::Inference);
  const Matrix b = rebuilt.forward(probe, Mode::Inference);
  CHECK(a.v == b.v);
}

TEST_CASE("checkpoint: refuses foreign files") {
  const std::string path = (fs::temp_directory_path() / "dc_ckpt_bad.bin").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("ppm writer: emits a valid P6 header and payload") {
  const std::string path = (fs::temp_directory_path() / "dc_test.ppm").string();
  std::vector<std::uint8_t> rgb(2 * 3 * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<std::uint8_t>(i);
  write_ppm(path, 3, 2, rgb);

  std::ifstream in(path, std::ios::binary);
  std::string magic, dims1, dims2, maxval;
  in >> magic >> dims1 >> dims2 >> maxval;
  CHECK(magic == "P6");
  CHECK(dims1 == "3");
  CHECK(dims2 == "2");
  CHECK(maxval == "255");
  in.get();  // the single whitespace after the header
  std::vector<std::uint8_t> payload(rgb.size());
  in.read(reinterpret_cast<char*>(payload.data()), payload.size());
  CHECK(payload == rgb);
  std::remove(path.c_str());
}

TEST_CASE("render_cluster_map: single cluster is a single color") {
  ClusterState state(1, 1, 4, 4);
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y) state.set_membership(0, 0, x, y, true);
  const auto rgb = render_cluster_map(state, 0);
  for (std::size_t i = 3; i < rgb.size(); i += 3) {
    CHECK(rgb[i] == rgb[0]);
    CHECK(rgb[i + 1] == rgb[1]);
    CHECK(rgb[i + 2] == rgb[2]);
  }
}

TEST_CASE("render_cluster_map: planted two-block channel shows two regions") {
  RandomSource rng(5);
  const PlantedBatch planted = synthetic_planted(4, 1, 6, 6, 2, 0.0, rng);
  const ClusterState state = compute_clusters(planted.data, 2);
  REQUIRE(state.unstructured().empty());
  const auto rgb = render_cluster_map(state, 0);

  std::set<std::array<std::uint8_t, 3>> colors;
  std::map<std::array<std::uint8_t, 3>, std::set<int>> blocks_for_color;
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y) {
      const std::size_t px = (static_cast<std::size_t>(x) * 6 + y) * 3;
      const std::array<std::uint8_t, 3> color{rgb[px], rgb[px + 1], rgb[px + 2]};
      colors.insert(color);
      blocks_for_color[color].insert(planted.pixel_labels[x * 6 + y]);
    }
  CHECK(colors.size() == 2);
  // each rendered color covers exactly one planted block
  for (const auto& [color, blocks] : blocks_for_color) CHECK(blocks.size() == 1);
}

TEST_CASE("render_cluster_map: unstructured channel is a uniform dark field") {
  ClusterState state(2, 3, 4, 4);
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y) state.set_membership(0, 0, x, y, true);
  state.mark_unstructured(1);
  const auto rgb = render_cluster_map(state, 1);
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    CHECK(rgb[i] == 20);
    CHECK(rgb[i + 1] == 20);
    CHECK(rgb[i + 2] == 80);
  }
}
