#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "a2j/data_synth.hpp"
#include "cli.hpp"

using namespace a2j;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "a2j_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::string& s) {
  return std::size_t(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST(Cli, NoArgumentsPrintsUsageAndFails) {
  const auto r = cli({});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("synth"), std::string::npos);
  EXPECT_NE(r.err.find("ablate"), std::string::npos);
}

TEST(Cli, HelpAndVersionSucceed) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"train", "--help"}).code, 0);
  const auto v = cli({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find("0.1.0"), std::string::npos);
}

TEST(Cli, UnknownFlagIsAUsageError) {
  const auto r = cli({"train", "--no-such-flag", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no-such-flag"), std::string::npos);
}

TEST(Cli, AnchorsPrintsThe256Stride16Grid) {
  const auto dir = temp_dir("anchors");
  const auto r = cli({"anchors", "--image-size", "256", "--stride", "16", "--out-dir", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 769u);
  EXPECT_EQ(r.out.substr(0, 10), "x,y,depth\n");
  EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
}

TEST(Cli, AnchorsAcceptsNegativeDepthListAndFile) {
  const auto dir = temp_dir("anchors_file");
  const auto csv = dir / "a.csv";
  const auto r = cli({"anchors", "--depths", "-50,50", "--out", csv.string(), "--out-dir", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(read(csv)), 1u + 16 * 2);
  EXPECT_EQ(cli({"anchors", "--depths", "a,b", "--out-dir", dir.string()}).code, 1);
  EXPECT_EQ(cli({"anchors", "--stride", "7", "--out-dir", dir.string()}).code, 1);
}

TEST(Cli, InvalidKnobValueNamesTheKey) {
  const auto dir = temp_dir("bad_value");
  const auto r = cli({"train", "--learning-rate", "-3", "--out-dir", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
  const auto cfg = dir / "bad.cfg";
  std::ofstream(cfg) << "epochs=2\nwidth_of_doom=3\n";
  const auto r2 = cli({"train", "--config", cfg.string(), "--out-dir", dir.string()});
  EXPECT_EQ(r2.code, 1);
  EXPECT_NE(r2.err.find("width_of_doom"), std::string::npos) << r2.err;
}

TEST(Cli, FlagsOverrideConfigFileOverrideDefaults) {
  const auto dir = temp_dir("precedence");
  const auto cfg = dir / "synth.cfg";
  std::ofstream(cfg) << "# test config\nimage_size=32\noverlap=0.3\n";
  const auto data = dir / "d.bin";
  const auto r = cli({"synth", "--config", cfg.string(), "--overlap", "0.1", "--count", "3", "--seed", "5",
                      "--out", data.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ds = read_dataset(data);
  EXPECT_EQ(ds.records.size(), 3u);
  EXPECT_EQ(ds.image_size, 32u);
  const std::string man = read(data.string() + ".manifest.txt");
  EXPECT_NE(man.find("overlap=0.1  # flag"), std::string::npos) << man;
  EXPECT_NE(man.find("image_size=32  # file"), std::string::npos) << man;
  EXPECT_NE(man.find("single_hand="), std::string::npos);
  EXPECT_NE(man.find("# default"), std::string::npos);
  // The same seed through the library gives the same file contents.
  SyntheticHandConfig sc;
  sc.image_size = 32;
  sc.overlap_probability = 0.1;
  EXPECT_EQ(make_dataset(sc, 3, 5).records, ds.records);
}

TEST(Cli, ManifestReproducesARun) {
  const auto dir = temp_dir("manifest");
  const std::vector<std::string> knobs{"--train-samples", "6", "--eval-samples", "2", "--epochs", "1",
                                       "--d-model", "16", "--ffn-dim", "32", "--batch-size", "3"};
  auto first = knobs;
  first.insert(first.begin(), "train");
  first.insert(first.end(), {"--out-dir", (dir / "a").string()});
  ASSERT_EQ(cli(first).code, 0);
  const auto again = cli({"train", "--config", (dir / "a" / "manifest.txt").string(), "--out-dir",
                          (dir / "b").string()});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(read(dir / "a" / "train_log.csv"), read(dir / "b" / "train_log.csv"));
  EXPECT_EQ(read(dir / "a" / "checkpoint.bin"), read(dir / "b" / "checkpoint.bin"));

  const auto ev = cli({"eval", "--checkpoint", (dir / "a" / "checkpoint.bin").string(), "--out-dir",
                       (dir / "eval").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(read(dir / "eval" / "metrics.txt").find("mpjpe_all="), std::string::npos);

  const auto inf = cli({"infer", "--checkpoint", (dir / "a" / "checkpoint.bin").string(), "--limit", "1",
                        "--out-dir", (dir / "infer").string()});
  ASSERT_EQ(inf.code, 0) << inf.err;
  EXPECT_EQ(count_lines(read(dir / "infer" / "joints.csv")), 1u + 42);
  EXPECT_EQ(count_lines(read(dir / "infer" / "anchor_weights.csv")), 1u + 42 * 48);
}

TEST(Cli, MissingCheckpointIsAnError) {
  const auto dir = temp_dir("missing");
  const auto r = cli({"eval", "--checkpoint", (dir / "nope.bin").string(), "--out-dir", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nope.bin"), std::string::npos);
}
