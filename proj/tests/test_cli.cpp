#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "sacrf/io.hpp"
#include "sacrf/model.hpp"

namespace fs = std::filesystem;
using namespace sacrf;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "sacrf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sacrf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }
  void write(const std::string& rel, const std::string& text) const {
    std::ofstream(dir_ / rel) << text;
  }

  fs::path dir_;
};

const fs::path kGolden = fs::path(SACRF_TEST_DATA_DIR) / "golden";

}  // namespace

TEST_F(CliTest, ZeroKernelInferenceReturnsInputBitForBit) {
  ASSERT_EQ(run({"gen-data", "--instance", "--zero-kernels", "--scales", "3", "--channels", "4",
                 "--size", "7x9", "--seed", "2", "--out", path("inst")})
                .code,
            0);
  const Result r = run({"infer", "--features", path("inst/features"), "--kernels",
                        path("inst/kernels"), "--out", path("out")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("out/y_ref.ten")), slurp(path("inst/features/x_2.ten")));
}

TEST_F(CliTest, ConfigManifestEchoesDefaults) {
  const Result r = run({"infer", "--features", (kGolden / "features").string(), "--kernels",
                        (kGolden / "kernels").string(), "--out", path("out")});
  ASSERT_EQ(r.code, 0) << r.err;
  const KeyValues kv = load_key_values(path("out/config.txt"));
  EXPECT_EQ(kv.at("iterations"), "3");
  EXPECT_EQ(kv.at("update_intermediate_scales"), "false");
}

TEST_F(CliTest, GoldenInstanceMatchesOracleFiles) {
  const Result r = run({"infer", "--features", (kGolden / "features").string(), "--kernels",
                        (kGolden / "kernels").string(), "--out", path("out")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* name : {"y_ref.ten", "a_0.ten", "a_1.ten"}) {
    const Tensor got = load_ten(path(std::string("out/") + name));
    const Tensor want = load_ten(kGolden / "expected" / name);
    ASSERT_EQ(got.shape(), want.shape()) << name;
    EXPECT_LE(max_abs_diff(got, want), 1e-12) << name;
  }
}

TEST_F(CliTest, InferenceConfigFileIsApplied) {
  write("cfg.txt", "# one pass\niterations = 1\n");
  const Result r = run({"infer", "--features", (kGolden / "features").string(), "--kernels",
                        (kGolden / "kernels").string(), "--config", path("cfg.txt"), "--out",
                        path("out")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_key_values(path("out/config.txt")).at("iterations"), "1");
  EXPECT_GT(max_abs_diff(load_ten(path("out/y_ref.ten")),
                         load_ten(kGolden / "expected" / "y_ref.ten")),
            1e-6);
  write("bad.txt", "iterations = 3\nsmoothing = 2\n");
  EXPECT_EQ(run({"infer", "--features", (kGolden / "features").string(), "--kernels",
                 (kGolden / "kernels").string(), "--config", path("bad.txt"), "--out",
                 path("out2")})
                .code,
            2);
}

TEST_F(CliTest, InferWithDecoderWritesDepth) {
  ToyConfig c;
  c.channels = 2;
  c.scales = 3;
  ToyModel(c, 1).save(path("model"));
  const Result r = run({"infer", "--features", (kGolden / "features").string(), "--kernels",
                        (kGolden / "kernels").string(), "--decoder", path("model"), "--out",
                        path("out")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Tensor depth = load_ten(path("out/depth.ten"));
  EXPECT_EQ(depth.shape(), (Shape{1, 20, 24}));
  const Tensor pgm = load_depth_pgm(path("out/depth.pgm"));
  EXPECT_LE(max_abs_diff(depth, pgm), 0.0005 + 1e-12);
}

TEST_F(CliTest, InferRejectsBadInputs) {
  EXPECT_EQ(run({"infer", "--features", path("nope"), "--kernels", path("nope"), "--out",
                 path("o")})
                .code,
            2);
  ASSERT_EQ(run({"gen-data", "--instance", "--scales", "3", "--channels", "2", "--size", "4",
                 "--out", path("a")})
                .code,
            0);
  ASSERT_EQ(run({"gen-data", "--instance", "--scales", "3", "--channels", "3", "--size", "4",
                 "--out", path("b")})
                .code,
            0);
  const Result r = run({"infer", "--features", path("a/features"), "--kernels",
                        path("b/kernels"), "--out", path("o")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error"), std::string::npos);
  fs::remove(path("a/features/x_1.ten"));
  EXPECT_EQ(run({"infer", "--features", path("a/features"), "--kernels", path("a/kernels"),
                 "--out", path("o")})
                .code,
            2);
}

TEST_F(CliTest, UnknownFlagsAndCommandsAreRejected) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"fly"}).code, 2);
  EXPECT_EQ(run({"bench", "--sizes", "", "--turbo"}).code, 2);
  EXPECT_EQ(run({"metrics", "--pred", "a", "--gt", "b", "--verbose"}).code, 2);
  EXPECT_EQ(run({"bench", "--threads", "0", "--sizes", ""}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, MetricsOnIdenticalMaps) {
  save_ten(path("d.ten"), Tensor::full({1, 3, 4}, 2.5));
  const Result r = run({"metrics", "--pred", path("d.ten"), "--gt", path("d.ten")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream is(r.out);
  std::string header, values;
  std::getline(is, header);
  std::getline(is, values);
  std::istringstream vs(values);
  std::vector<std::string> cells;
  for (std::string c; vs >> c;) cells.push_back(c);
  EXPECT_EQ(cells, (std::vector<std::string>{"0.0000", "0.0000", "0.0000", "1.0000", "1.0000",
                                             "1.0000"}));
}

TEST_F(CliTest, MetricsOnConstantPair) {
  save_ten(path("p.ten"), Tensor::full({1, 2, 2}, 1.3));
  save_ten(path("g.ten"), Tensor::full({1, 2, 2}, 1.0));
  const Result r = run({"metrics", "--pred", path("p.ten"), "--gt", path("g.ten"), "--csv",
                        path("m.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream is(r.out);
  std::string line;
  std::getline(is, line);
  std::getline(is, line);
  std::istringstream vs(line);
  std::string rel, rms, lg, d1, d2;
  vs >> rel >> rms >> lg >> d1 >> d2;
  EXPECT_EQ(rel, "0.3000");
  EXPECT_EQ(d1, "0.0000");
  EXPECT_EQ(d2, "1.0000");
  EXPECT_EQ(slurp(path("m.csv")).substr(0, 34), "rel,rms,log10,delta1,delta2,delta3");
}

TEST_F(CliTest, MetricsErrors) {
  save_ten(path("a.ten"), Tensor::full({1, 2, 2}, 1.0));
  save_ten(path("b.ten"), Tensor::full({1, 2, 3}, 1.0));
  Result r = run({"metrics", "--pred", path("a.ten"), "--gt", path("b.ten")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("1x2x3"), std::string::npos) << r.err;
  Tensor bad = Tensor::full({1, 2, 2}, 1.0);
  bad[3] = -2.0;
  save_ten(path("bad.ten"), bad);
  r = run({"metrics", "--pred", path("bad.ten"), "--gt", path("a.ten")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("pixel 3"), std::string::npos) << r.err;
  EXPECT_EQ(run({"metrics", "--pred", path("missing.ten"), "--gt", path("a.ten")}).code, 2);
}

TEST_F(CliTest, MetricsReadsPgm) {
  Tensor d = Tensor::full({1, 2, 2}, 1.5);
  save_depth_pgm(path("d.pgm"), d);
  save_ten(path("d.ten"), d);
  const Result r = run({"metrics", "--pred", path("d.pgm"), "--gt", path("d.ten")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1.0000"), std::string::npos);
}

TEST_F(CliTest, BenchSchema) {
  Result r = run({"bench", "--sizes", ""});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string header =
      "threads,size,scales,channels,iterations,repeats,method,median_ms_per_iteration\n";
  EXPECT_EQ(r.out, header);
  for (const char* repeats : {"1", "3"}) {
    r = run({"bench", "--sizes", "8,16", "--channels", "2", "--repeats", repeats, "--out",
             path("b.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string csv = slurp(path("b.csv"));
    EXPECT_EQ(csv.substr(0, header.size()), header);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_NE(csv.find(",meanfield,"), std::string::npos);
    EXPECT_NE(csv.find(",gaussian5,"), std::string::npos);
    EXPECT_NE(csv.find(std::string("1,16x16,3,2,3,") + repeats + ","), std::string::npos);
  }
}

TEST_F(CliTest, EnergyCommand) {
  ASSERT_EQ(run({"gen-data", "--instance", "--zero-kernels", "--scales", "2", "--channels", "2",
                 "--size", "4", "--out", path("z")})
                .code,
            0);
  Result r = run({"energy", "--features", path("z/features"), "--kernels", path("z/kernels")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("total = 0\n"), std::string::npos) << r.out;

  const Result inf = run({"infer", "--features", (kGolden / "features").string(), "--kernels",
                          (kGolden / "kernels").string(), "--out", path("o")});
  ASSERT_EQ(inf.code, 0);
  r = run({"energy", "--features", (kGolden / "features").string(), "--kernels",
           (kGolden / "kernels").string(), "--latent", path("o"), "--attention", path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Result direct = run({"energy", "--features", (kGolden / "features").string(),
                             "--kernels", (kGolden / "kernels").string()});
  EXPECT_EQ(r.out, direct.out);
  EXPECT_EQ(run({"energy", "--features", (kGolden / "features").string(), "--kernels",
                 (kGolden / "kernels").string(), "--latent", path("o")})
                .code,
            2);
}

TEST_F(CliTest, GradCheckCommand) {
  Result r = run({"grad-check", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  r = run({"grad-check", "--model", "--intermediate"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("dec.out.w"), std::string::npos);
}

TEST_F(CliTest, GenDataTrainAndDivergence) {
  ASSERT_EQ(run({"gen-data", "--count", "2", "--size", "8x8", "--seed", "5", "--out",
                 path("data")})
                .code,
            0);
  write("cfg.txt", "scales = 2\nchannels = 2\ndownsample_levels = 1\nepochs = 3\nlr = 1e-4\n");
  Result r = run({"train", "--data", path("data"), "--config", path("cfg.txt"), "--out",
                  path("run")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("run/model/manifest.txt")));
  const std::string loss = slurp(path("run/loss.csv"));
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 5);
  const Result again = run({"train", "--data", path("data"), "--config", path("cfg.txt"),
                            "--out", path("run2")});
  EXPECT_EQ(slurp(path("run2/loss.csv")), loss);

  write("hot.txt", "scales = 2\nchannels = 2\ndownsample_levels = 1\nepochs = 200\nlr = 10\n");
  r = run({"train", "--data", path("data"), "--config", path("hot.txt"), "--out", path("hot")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;

  write("typo.txt", "chanels = 2\n");
  EXPECT_EQ(run({"train", "--data", path("data"), "--config", path("typo.txt"), "--out",
                 path("t")})
                .code,
            2);
}

TEST_F(CliTest, AblateWritesTable) {
  write("abl.txt",
        "train_count = 1\ntest_count = 1\nheight = 8\nwidth = 8\nscales = 2\nchannels = 2\n"
        "downsample_levels = 1\nepochs = 1\nlr = 1e-4\n");
  const Result r = run({"ablate", "--config", path("abl.txt"), "--seeds", "0,1", "--out",
                        path("abl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(path("abl/ablation.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
  EXPECT_NE(r.out.find("median rms"), std::string::npos);
}
