#include <gtest/gtest.h>

#include <cmath>

#include "julesz/errors.hpp"
#include "julesz/fixtures.hpp"
#include "julesz/ops.hpp"
#include "julesz/trainer.hpp"
#include "oracles.hpp"

using namespace julesz;

namespace {

TrainConfig small_texture() {
  TrainConfig cfg;
  cfg.out_size = 16;
  cfg.noise_dim = 4;
  cfg.hidden = 8;
  cfg.width = 4;
  cfg.batch_size = 3;
  cfg.iterations = 12;
  cfg.eval_samples = 4;
  cfg.lambda = 0.05;
  return cfg;
}

TrainConfig small_stylizer() {
  auto cfg = TrainConfig::stylization_defaults();
  cfg.out_size = 16;
  cfg.base_channels = 2;
  cfg.batch_size = 4;
  cfg.noise_per_content = 2;
  cfg.iterations = 8;
  cfg.eval_samples = 3;
  cfg.lambda = 0.05;
  return cfg;
}

std::vector<Tensor> small_corpus() {
  auto c = fixtures::content_corpus(16);
  return {c[0], c[1], c[2]};
}

bool same_params(const GeneratorParams& a, const GeneratorParams& b) {
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (oracle::max_abs_diff(a.tensors[i].tensor, b.tensors[i].tensor) != 0.0) return false;
  }
  return a.tensors.size() == b.tensors.size();
}

}  // namespace

TEST(SgdStep, HandExample) {
  const auto theta = Tensor({2}, {1.0, 2.0}, true);
  sum(theta * Tensor({2}, {0.5, -1.0})).backward();
  const std::vector<Tensor> params{theta};
  sgd_step(params, 0.1);
  EXPECT_DOUBLE_EQ(theta.values()[0], 0.95);
  EXPECT_DOUBLE_EQ(theta.values()[1], 2.1);
  zero_grads(params);
  sgd_step(params, 0.1);
  EXPECT_DOUBLE_EQ(theta.values()[0], 0.95);
}

TEST(SgdStep, NonFiniteGradientLeavesEverythingUntouched) {
  FiniteCheckScope off(false);
  const auto a = Tensor({1}, {1.0}, true);
  const auto b = Tensor({1}, {1.0}, true);
  sum(a * 2.0 + b * 1e308 * 10.0).backward();
  const std::vector<Tensor> params{a, b};
  EXPECT_THROW(sgd_step(params, 0.1), NumericError);
  EXPECT_EQ(a.values()[0], 1.0);
  EXPECT_EQ(b.values()[0], 1.0);
}

TEST(DiversityMetric, ClosedForms) {
  // Two samples that differ by c in every coordinate: distance c sqrt(D).
  const Tensor two({2, 4}, {0, 0, 0, 0, 0.3, 0.3, 0.3, 0.3});
  EXPECT_NEAR(diversity_metric(two), 0.3, 1e-15);
  // Three points on a line at 0, 1, 3 (D = 1): mean of 1, 3, 2.
  EXPECT_NEAR(diversity_metric(Tensor({3, 1}, {0, 1, 3})), 2.0, 1e-15);
  EXPECT_EQ(diversity_metric(Tensor::full({5, 3}, 0.7)), 0.0);
  EXPECT_THROW(diversity_metric(Tensor({1, 3}, {0, 0, 0})), std::invalid_argument);
}

TEST(PatchBrightness, ClosedForm) {
  // Left half black, right half white: tile means 0, 1 alternate, variance 1/4.
  std::vector<double> v(3 * 16 * 16);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 8; j < 16; ++j) v[(c * 16 + i) * 16 + j] = 1.0;
  EXPECT_NEAR(patch_brightness_variance(Tensor({1, 3, 16, 16}, v)), 0.25, 1e-15);
  EXPECT_EQ(patch_brightness_variance(Tensor::full({2, 3, 16, 16}, 0.4)), 0.0);
  EXPECT_THROW(patch_brightness_variance(Tensor::zeros({1, 3, 12, 12})), ShapeError);
}

TEST(TrainConfig, FieldsRoundTrip) {
  TrainConfig cfg;
  cfg.temperature = 0.1;
  cfg.norm = NormKind::batch;
  cfg.seed = 123456789012345ULL;
  cfg.clamp_output = true;
  TrainConfig back;
  for (const auto& [k, v] : cfg.to_fields()) back.set_field(k, v);
  EXPECT_EQ(back.to_fields(), cfg.to_fields());
  EXPECT_EQ(back.temperature, 0.1);
  EXPECT_THROW(back.set_field("temprature", "1"), std::invalid_argument);
  EXPECT_THROW(back.set_field("batch_size", "-1"), std::invalid_argument);
  EXPECT_THROW(back.set_field("lambda", "1x"), std::invalid_argument);
  EXPECT_THROW(back.set_field("grad_normalize", "yes"), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  auto bad = cfg;
  bad.temperature = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.batch_size = 1;
  bad.lambda = 0.1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.batch_size = 3;
  bad.noise_per_content = 2;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.out_size = 10;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(TrainTexture, DeterministicGivenSeed) {
  const auto ref = fixtures::checker_noise(16);
  const auto cfg = small_texture();
  const auto a = train_texture(cfg, ref);
  const auto b = train_texture(cfg, ref);
  EXPECT_EQ(a.report, b.report);
  EXPECT_TRUE(same_params(a.params, b.params));
  auto other = cfg;
  other.seed = 1;
  EXPECT_FALSE(same_params(a.params, train_texture(other, ref).params));
}

TEST(TrainTexture, LoggedObjectiveMatchesRecomputation) {
  const auto ref = fixtures::checker_noise(16);
  auto cfg = small_texture();
  cfg.log_every = 3;
  const FilterBank bank(cfg.bank_seed);
  const auto target = make_style_target(ref, bank);
  std::size_t checked = 0;
  const auto result = train_texture(cfg, ref, [&](const IterationContext& ctx) {
    if (!ctx.record) return;
    const auto images = forward_texture(*ctx.params, ctx.noise).detach();
    const auto nn = oracle::nearest_neighbours(images);
    double mean_log = 0.0;
    for (double r : nn.rho) mean_log += std::log(r) / static_cast<double>(nn.rho.size());
    const double style = style_loss(images, target, bank).item();
    EXPECT_NEAR(ctx.record->objective, style / cfg.temperature - cfg.lambda * mean_log, 1e-10);
    EXPECT_NEAR(ctx.record->style, style, 1e-12);
    ++checked;
  });
  EXPECT_EQ(checked, 5u);  // iterations 0, 3, 6, 9 and the last
  EXPECT_EQ(result.report.records.size(), 5u);
  EXPECT_EQ(result.report.records.back().iteration, 11u);
}

TEST(TrainTexture, ReducesTheStyleLoss) {
  const auto ref = fixtures::checker_noise(16);
  auto cfg = small_texture();
  cfg.lambda = 0.0;
  cfg.iterations = 60;
  const auto r = train_texture(cfg, ref).report;
  EXPECT_LT(r.final_style, 0.5 * r.initial_style);
}

TEST(TrainStylizer, LoggedObjectiveMatchesRecomputation) {
  const auto ref = fixtures::checker_noise(16);
  const auto cfg = small_stylizer();
  const auto corpus = small_corpus();
  const FilterBank bank(cfg.bank_seed);
  const auto target = make_style_target(ref, bank);
  std::size_t checked = 0;
  train_stylizer(cfg, ref, corpus, [&](const IterationContext& ctx) {
    ASSERT_TRUE(ctx.record);
    ASSERT_EQ(ctx.group_size, 2u);
    const auto images = forward_stylized(*ctx.params, ctx.content, ctx.noise).detach();
    double expect = 0.0;
    for (std::size_t m = 0; m < 2; ++m) {
      const auto group = slice(images, 2 * m, 2 * m + 2);
      const auto nn = oracle::nearest_neighbours(group);
      for (double r : nn.rho) expect -= cfg.lambda * std::log(r) / 4.0;
    }
    expect += style_loss(images, target, bank).item() / cfg.temperature;
    expect += cfg.alpha * content_loss(images, ctx.content, bank).item();
    EXPECT_NEAR(ctx.record->objective, expect, 1e-10);
    ++checked;
  });
  EXPECT_EQ(checked, cfg.iterations);
}

TEST(TrainStylizer, EpochsVisitEveryContentImage) {
  const auto ref = fixtures::checker_noise(16);
  auto cfg = small_stylizer();
  cfg.batch_size = 2;
  cfg.noise_per_content = 1;
  cfg.lambda = 0.0;
  cfg.iterations = 3;
  const auto corpus = fixtures::content_corpus(16);
  std::vector<int> hits(4, 0);
  train_stylizer(cfg, ref, corpus, [&](const IterationContext& ctx) {
    if (ctx.iteration >= 2) return;
    for (std::size_t n = 0; n < 2; ++n) {
      const auto row = slice(ctx.content, n, n + 1);
      for (std::size_t i = 0; i < 4; ++i) hits[i] += oracle::max_abs_diff(row, corpus[i]) == 0.0;
    }
  });
  EXPECT_EQ(hits, (std::vector<int>{1, 1, 1, 1}));
}

TEST(TrainStylizer, ConstantContentWithoutContentWeightIsTextureTraining) {
  const auto ref = fixtures::checker_noise(16);
  auto cfg = small_stylizer();
  cfg.alpha = 0.0;
  cfg.noise_per_content = cfg.batch_size;
  const std::vector<Tensor> flat{Tensor::full({3, 16, 16}, 0.5)};
  const auto stylized = train_stylizer(cfg, ref, flat);
  const auto initial = build_generator(cfg.stylizer_descriptor(), derive_seed(cfg.seed, streams::init));
  const auto textured = train_texture(cfg, ref, initial);
  ASSERT_EQ(stylized.report.records.size(), textured.report.records.size());
  for (std::size_t i = 0; i < textured.report.records.size(); ++i) {
    EXPECT_NEAR(stylized.report.records[i].objective, textured.report.records[i].objective, 1e-12);
  }
  EXPECT_TRUE(same_params(stylized.params, textured.params));
}

TEST(TrainStylizer, RejectsMismatchedCorpus) {
  const auto ref = fixtures::checker_noise(16);
  const auto cfg = small_stylizer();
  EXPECT_THROW(train_stylizer(cfg, ref, std::vector<Tensor>{}), std::invalid_argument);
  const std::vector<Tensor> wrong{Tensor::full({3, 32, 32}, 0.5)};
  EXPECT_THROW(train_stylizer(cfg, ref, wrong), ShapeError);
}

TEST(OptimizeDirect, LowersTheObjectiveAndHonoursInit) {
  const auto ref = fixtures::checker_noise(16);
  TrainConfig cfg;
  cfg.iterations = 30;
  cfg.learning_rate = 2.0;
  const auto r = optimize_direct(cfg, ref);
  EXPECT_LT(r.report.records.back().objective, r.report.records.front().objective);
  EXPECT_EQ(r.image.shape(), (Shape{1, 3, 16, 16}));

  // Starting at the reference with no content term is a fixed point.
  const auto at_ref = optimize_direct(cfg, ref, ref);
  EXPECT_NEAR(at_ref.report.final_style, 0.0, 1e-20);
  EXPECT_THROW(optimize_direct(cfg, ref, std::nullopt, fixtures::checker_noise(32)), ShapeError);
}

TEST(GenerateSamples, ShapesAndSeeds) {
  const auto g = build_stylizer(NormKind::instance, 1, 1, 2, 1);
  const auto c = fixtures::content_corpus(16)[0];
  const auto a = generate_samples(g, 3, 5, 16, c);
  EXPECT_EQ(a.shape(), (Shape{3, 3, 16, 16}));
  EXPECT_EQ(oracle::max_abs_diff(a, generate_samples(g, 3, 5, 16, c)), 0.0);
  EXPECT_GT(oracle::max_abs_diff(a, generate_samples(g, 3, 6, 16, c)), 0.0);
  EXPECT_THROW(generate_samples(g, 3, 5, 16), std::invalid_argument);
}
