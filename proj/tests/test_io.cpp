#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "julesz/errors.hpp"
#include "julesz/fixtures.hpp"
#include "julesz/image_io.hpp"
#include "julesz/key_value.hpp"
#include "julesz/report.hpp"
#include "oracles.hpp"

using namespace julesz;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("julesz_io_" + name); }

}  // namespace

TEST(Png, FixturesRoundTripExactly) {
  const auto path = temp_file("checker.png");
  const auto img = fixtures::checker_noise(16);
  save_png(img, path);
  const auto back = load_png(path);
  EXPECT_EQ(back.shape(), (Shape{1, 3, 16, 16}));
  EXPECT_EQ(oracle::max_abs_diff(back, img), 0.0);
  fs::remove(path);
}

TEST(Png, SaveClampsAndRounds) {
  const auto path = temp_file("clamp.png");
  save_png(Tensor({3, 1, 2}, {-1.0, 2.0, 0.5, 0.5, 0.1 / 255.0, 254.6 / 255.0}), path);
  const auto back = load_png(path);
  const std::vector<double> expect{0.0, 1.0, 128.0 / 255.0, 128.0 / 255.0, 0.0, 1.0};
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(back.values()[i], expect[i], 1e-15);
  fs::remove(path);
}

TEST(Png, BadFilesFail) {
  const auto path = temp_file("bad.png");
  std::ofstream(path) << "not a png";
  EXPECT_THROW(load_png(path), FormatError);
  fs::remove(path);
  EXPECT_ANY_THROW(load_png(temp_file("missing.png")));
}

TEST(Png, TileGrid) {
  const auto batch = Tensor::zeros({5, 3, 4, 4});
  const auto grid = tile_grid(batch, 3);
  // 2 rows, 3 columns, 1-pixel gutters.
  EXPECT_EQ(grid.shape(), (Shape{1, 3, 2 * 4 + 1, 3 * 4 + 2}));
}

TEST(Fixtures, ContentCorpusDiffers) {
  const auto c = fixtures::content_corpus(16);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_GT(oracle::max_abs_diff(c[0], c[1]), 0.1);
  EXPECT_EQ(oracle::max_abs_diff(fixtures::checker_noise(16, 3), fixtures::checker_noise(16, 3)), 0.0);
}

TEST(ReportCsv, RoundTrip) {
  TrainReport r;
  r.records.push_back({0, 1.0 / 3.0, 0.0, -2.5, 1e-17, 0.0});
  r.records.push_back({10, 0.125, 7.0, 3.0, -1.0, 12.5});
  const auto path = temp_file("report.csv");
  write_report_csv(r, path);
  EXPECT_EQ(read_report_csv(path), r.records);
  std::ofstream(path, std::ios::app) << "11,1,2,3\n";
  EXPECT_THROW(read_report_csv(path), FormatError);
  fs::remove(path);
}

TEST(KeyValue, ParseAndFormat) {
  const auto kv = parse_key_values("# comment\n a = 1 \n\nb=two words\n", "test");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "two words");
  EXPECT_EQ(parse_key_values(format_key_values(kv), "again"), kv);
  EXPECT_THROW(parse_key_values("a=1\na=2\n", "dup"), FormatError);
  EXPECT_THROW(parse_key_values("novalue\n", "missing"), FormatError);
  EXPECT_THROW(parse_key_values("=3\n", "empty"), FormatError);
}

TEST(KeyValue, DigestTracksContent) {
  const auto path = temp_file("digest.txt");
  std::ofstream(path) << "abc";
  const auto d1 = file_digest(path);
  EXPECT_EQ(d1.size(), 16u);
  // FNV-1a 64 of "abc".
  EXPECT_EQ(d1, "e71fa2190541574b");
  std::ofstream(path) << "abd";
  EXPECT_NE(file_digest(path), d1);
  fs::remove(path);
}
