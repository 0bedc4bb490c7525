#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cli.hpp"
#include "julesz/fixtures.hpp"
#include "julesz/generators.hpp"
#include "julesz/image_io.hpp"
#include "julesz/key_value.hpp"

namespace fs = std::filesystem;
using julesz::cli::kExitFailure;
using julesz::cli::kExitOk;
using julesz::cli::kExitUsage;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("julesz_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir / "content");
    julesz::save_png(julesz::fixtures::checker_noise(16), dir / "style.png");
    const auto corpus = julesz::fixtures::content_corpus(16);
    for (std::size_t i = 0; i < 2; ++i) {
      julesz::save_png(corpus[i], dir / "content" / ("c" + std::to_string(i) + ".png"));
    }
    std::ofstream(dir / "small.cfg") << "noise_dim=4\nhidden=8\nwidth=4\nbase_channels=2\n"
                                        "eval_samples=4\nbatch_size=2\n";
  }
  void TearDown() override { fs::remove_all(dir); }

  int run(const std::vector<std::string>& args) {
    out.str("");
    err.str("");
    return julesz::cli::run(args, out, err);
  }

  std::vector<std::string> train_texture(const fs::path& where, const std::string& iters = "5") {
    return {"train-texture", "--style", (dir / "style.png").string(), "--config", (dir / "small.cfg").string(),
            "--size", "16", "--iters", iters, "--lambda", "0.01", "--out", where.string()};
  }

  std::vector<std::string> train_style(const fs::path& where) {
    return {"train-style", "--style", (dir / "style.png").string(), "--content-dir",
            (dir / "content").string(), "--config", (dir / "small.cfg").string(), "--size", "16",
            "--iters", "4", "--out", where.string()};
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path dir;
  std::ostringstream out, err;
};

}  // namespace

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}), kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), kExitUsage);
  EXPECT_EQ(run({"train-texture", "--out", dir.string()}), kExitUsage);
  EXPECT_EQ(run({"train-texture", "--style", (dir / "nope.png").string(), "--out", dir.string()}), kExitUsage);
  EXPECT_EQ(run({"train-texture", "--style", (dir / "style.png").string(), "--out", (dir / "o").string(),
                 "--set", "bogus=1"}),
            kExitUsage);
  EXPECT_EQ(run({"train-texture", "--style", (dir / "style.png").string(), "--out", (dir / "o").string(),
                 "--norm", "layer"}),
            kExitUsage);
  EXPECT_EQ(run({"train-texture", "--style", (dir / "style.png").string(), "--out", (dir / "o").string(),
                 "--temp", "0"}),
            kExitUsage);
}

TEST_F(CliTest, HelpIsSuccess) {
  EXPECT_EQ(run({"--help"}), kExitOk);
  EXPECT_NE(out.str().find("train-texture"), std::string::npos);
  EXPECT_EQ(run({"--version"}), kExitOk);
}

TEST_F(CliTest, TrainTextureWritesArtifactsAndSamples) {
  const auto run_dir = dir / "tex";
  ASSERT_EQ(run(train_texture(run_dir)), kExitOk) << err.str();
  for (const char* f : {"params.bin", "report.csv", "samples.png", "target.bin", "manifest.txt"}) {
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  }
  const auto manifest = julesz::read_key_values(run_dir / "manifest.txt");
  EXPECT_EQ(manifest.at("command"), "train-texture");
  EXPECT_EQ(manifest.at("config.lambda"), "0.01");
  EXPECT_EQ(manifest.at("input.style.fnv1a"), julesz::file_digest(dir / "style.png"));

  const auto sample_dir = dir / "samples";
  ASSERT_EQ(run({"sample", "--params", (run_dir / "params.bin").string(), "--n", "3", "--out",
                 sample_dir.string()}),
            kExitOk)
      << err.str();
  EXPECT_TRUE(fs::exists(sample_dir / "sample_002.png"));
  EXPECT_TRUE(fs::exists(sample_dir / "grid.png"));
  EXPECT_NE(out.str().find("diversity_metric"), std::string::npos);
  EXPECT_EQ(julesz::load_png(sample_dir / "sample_000.png").dim(2), 16u);
}

TEST_F(CliTest, TrainStyleAndSampleWithContent) {
  const auto run_dir = dir / "sty";
  ASSERT_EQ(run(train_style(run_dir)), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(run_dir / "stylized.png"));
  const auto params = (run_dir / "params.bin").string();
  EXPECT_EQ(run({"sample", "--params", params, "--out", (dir / "s").string()}), kExitUsage);
  EXPECT_EQ(run({"sample", "--params", params, "--content", (dir / "content" / "c0.png").string(), "--n", "2",
                 "--out", (dir / "s").string()}),
            kExitOk)
      << err.str();
}

TEST_F(CliTest, EmptyContentDirIsAnError) {
  fs::create_directories(dir / "empty");
  EXPECT_NE(run({"train-style", "--style", (dir / "style.png").string(), "--content-dir",
                 (dir / "empty").string(), "--out", (dir / "o").string()}),
            kExitOk);
}

TEST_F(CliTest, CorruptedParamsFail) {
  std::ofstream(dir / "bad.bin") << "garbage";
  EXPECT_EQ(run({"sample", "--params", (dir / "bad.bin").string(), "--out", (dir / "s").string()}),
            kExitFailure);
  EXPECT_FALSE(err.str().empty());
}

TEST_F(CliTest, GradcheckExitCodes) {
  EXPECT_EQ(run({"gradcheck", "--only", "gram", "--only", "linear"}), kExitOk) << out.str();
  EXPECT_NE(out.str().find("gram"), std::string::npos);
  EXPECT_EQ(run({"gradcheck", "--only", "conv2d", "--tol", "1e-15"}), kExitFailure);
  EXPECT_NE(err.str().find("worst offender"), std::string::npos);
  EXPECT_EQ(run({"gradcheck", "--only", "no_such_layer"}), kExitUsage);
}

TEST_F(CliTest, ReportMergesRuns) {
  ASSERT_EQ(run(train_texture(dir / "a", "4")), kExitOk) << err.str();
  ASSERT_EQ(run(train_texture(dir / "b", "6")), kExitOk) << err.str();
  ASSERT_EQ(run({"report", "--csv", (dir / "a" / "report.csv").string(), "--csv",
                 (dir / "b" / "report.csv").string(), "--out", (dir / "r").string()}),
            kExitOk)
      << err.str();
  const auto merged = slurp(dir / "r" / "merged.csv");
  EXPECT_EQ(merged.rfind("run,iteration,", 0), 0u);
  // Header plus 4 + 6 rows (log_every 1).
  EXPECT_EQ(std::count(merged.begin(), merged.end(), '\n'), 11);
  EXPECT_TRUE(fs::exists(dir / "r" / "report.dat"));
}

TEST_F(CliTest, ReplayReproducesArtifacts) {
  ASSERT_EQ(run(train_texture(dir / "first")), kExitOk) << err.str();
  ASSERT_EQ(run({"replay", "--manifest", (dir / "first" / "manifest.txt").string(), "--out",
                 (dir / "second").string()}),
            kExitOk)
      << err.str();
  for (const char* f : {"report.csv", "params.bin", "target.bin"}) {
    EXPECT_EQ(slurp(dir / "first" / f), slurp(dir / "second" / f)) << f;
  }
  // A changed input is detected.
  julesz::save_png(julesz::fixtures::stripe_noise(16), dir / "style.png");
  EXPECT_NE(run({"replay", "--manifest", (dir / "first" / "manifest.txt").string(), "--out",
                 (dir / "third").string()}),
            kExitOk);
}
