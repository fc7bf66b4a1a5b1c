// Drives the built CLI binary end to end through std::system, checking exit
// codes, CSV schemas, and reproducibility.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kCli = DROPCLUSTER_CLI_PATH;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

// small, fast experiment shared by the tests
std::string base_args(const std::string& out_dir, const std::string& extra = "") {
  return "--set synthetic_train_n=60 --set synthetic_test_n=30 --set epochs=2 "
         "--set batch_size=20 --set lr=0.05 --set seed=11 --set out_dir=" +
         out_dir + (extra.empty() ? "" : " " + extra);
}

}  // namespace

TEST_CASE("cli: train writes metrics with the pinned header plus a final row") {
  TempDir dir("dc_cli_train");
  REQUIRE(run("train " + base_args(dir.str())) == 0);

  const auto lines = lines_of(slurp(dir.path / "metrics.csv"));
  REQUIRE(lines.size() == 4);  // header + 2 epochs + final
  CHECK(lines[0] == "epoch,lr,train_loss,top1,top5");
  CHECK(lines[1].rfind("0,", 0) == 0);
  CHECK(lines[3].rfind("final,", 0) == 0);
  CHECK(fs::exists(dir.path / "checkpoint.bin"));
}

TEST_CASE("cli: identical config and seed reproduce byte-identical CSVs") {
  TempDir a("dc_cli_rep_a");
  TempDir b("dc_cli_rep_b");
  REQUIRE(run("train " + base_args(a.str())) == 0);
  REQUIRE(run("train " + base_args(b.str())) == 0);
  CHECK(slurp(a.path / "metrics.csv") == slurp(b.path / "metrics.csv"));
}

TEST_CASE("cli: train honors a config file with flag overrides on top") {
  TempDir dir("dc_cli_config");
  const fs::path cfg_path = dir.path / "exp.cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "# tiny experiment\n"
        << "synthetic_train_n = 60\n"
        << "synthetic_test_n = 30\n"
        << "epochs = 5\n"
        << "batch_size = 20\n"
        << "seed = 11\n"
        << "out_dir = " << dir.str() << "\n";
  }
  // override epochs down to 1 from the command line
  REQUIRE(run("train --config " + cfg_path.string() + " --set epochs=1") == 0);
  const auto lines = lines_of(slurp(dir.path / "metrics.csv"));
  CHECK(lines.size() == 3);  // header + 1 epoch + final
}

TEST_CASE("cli: stratified train fraction shrinks the training set") {
  TempDir dir("dc_cli_frac");
  REQUIRE(run("train " + base_args(dir.str(), "--set train_fraction=0.2 --set epochs=1")) == 0);
  CHECK(fs::exists(dir.path / "metrics.csv"));
}

TEST_CASE("cli: bad config is a nonzero exit") {
  TempDir dir("dc_cli_bad");
  CHECK(run("train --set nonsense_key=1") != 0);
  CHECK(run("train " + base_args(dir.str(), "--set regularizer=zzz")) != 0);
}

TEST_CASE("cli: cluster-viz requires a cluster state") {
  TempDir dir("dc_cli_nostate");
  REQUIRE(run("train " + base_args(dir.str())) == 0);  // regularizer=none
  CHECK(run("cluster-viz --checkpoint " + (dir.path / "checkpoint.bin").string() +
            " --set out_dir=" + dir.str()) != 0);
}

TEST_CASE("cli: dropcluster pipeline produces maps, tendency report, corruption table") {
  TempDir dir("dc_cli_pipeline");
  const std::string train_args = base_args(
      dir.str(),
      "--set regularizer=dropcluster --set epochs=3 --set s=2 --set n_clusters=15");
  REQUIRE(run("train " + train_args) == 0);
  const std::string ckpt = (dir.path / "checkpoint.bin").string();

  SUBCASE("cluster-viz renders one image per channel") {
    REQUIRE(run("cluster-viz --checkpoint " + ckpt + " --set out_dir=" + dir.str()) == 0);
    for (int ch = 0; ch < 6; ++ch) {
      char name[64];
      std::snprintf(name, sizeof(name), "clusters_channel_%02d.ppm", ch);
      CHECK(fs::exists(dir.path / name));
    }
    const std::string ppm = slurp(dir.path / "clusters_channel_00.ppm");
    CHECK(ppm.rfind("P6\n28 28\n255\n", 0) == 0);
  }

  SUBCASE("tendency-report emits the per-channel CSV and histogram") {
    REQUIRE(run("tendency-report --checkpoint " + ckpt + " " + base_args(dir.str())) == 0);
    const auto tendency = lines_of(slurp(dir.path / "tendency.csv"));
    REQUIRE(tendency.size() == 7);  // header + 6 channels
    CHECK(tendency[0] == "channel,mean_spatial_hopkins");
    const auto hist = lines_of(slurp(dir.path / "tendency_histogram.csv"));
    CHECK(hist[0] == "bin_lo,bin_hi,count");
    CHECK(hist.size() == 11);  // header + 10 bins
    int total = 0;
    for (std::size_t i = 1; i < hist.size(); ++i)
      total += std::stoi(hist[i].substr(hist[i].rfind(',') + 1));
    CHECK(total == 6);
  }

  SUBCASE("corrupt-eval walks kinds x severities plus the clean row") {
    REQUIRE(run("corrupt-eval --checkpoint " + ckpt + " " +
                base_args(dir.str(), "--set severities=1,3")) == 0);
    const auto rows = lines_of(slurp(dir.path / "corrupt_eval.csv"));
    CHECK(rows[0] == "kind,severity,top1,top5");
    CHECK(rows[1].rfind("clean,0,", 0) == 0);
    REQUIRE(rows.size() == 2 + 4 * 2);  // header + clean + 4 kinds x 2 severities
    CHECK(rows[2].rfind("gaussian,1,", 0) == 0);
    CHECK(rows.back().rfind("defocus,3,", 0) == 0);

    // the clean row evaluates the final weights, so it matches the last
    // per-epoch accuracy from training
    const auto metrics = lines_of(slurp(dir.path / "metrics.csv"));
    const std::string& last_epoch = metrics[metrics.size() - 2];
    const std::string epoch_accs = last_epoch.substr(last_epoch.rfind(',', last_epoch.rfind(',') - 1) + 1);
    CHECK(rows[1] == "clean,0," + epoch_accs);
  }

  SUBCASE("reruns of analysis commands are byte-identical") {
    TempDir other("dc_cli_pipeline_b");
    REQUIRE(run("tendency-report --checkpoint " + ckpt + " " + base_args(dir.str())) == 0);
    REQUIRE(run("tendency-report --checkpoint " + ckpt + " " + base_args(other.str())) == 0);
    CHECK(slurp(dir.path / "tendency.csv") == slurp(other.path / "tendency.csv"));
  }
}

TEST_CASE("cli: environment variable overrides the output directory") {
  TempDir dir("dc_cli_env");
  TempDir env_dir("dc_cli_env_target");
  const std::string cmd = "DROPCLUSTER_OUT_DIR=" + env_dir.str() + " " + kCli + " train " +
                          base_args(dir.str(), "--set epochs=1") + " > /dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(env_dir.path / "metrics.csv"));
  CHECK_FALSE(fs::exists(dir.path / "metrics.csv"));
}
