#include <gtest/gtest.h>

#include <cmath>

#include "julesz/errors.hpp"
#include "julesz/layers.hpp"
#include "julesz/ops.hpp"
#include "julesz/random.hpp"
#include "oracles.hpp"

using namespace julesz;

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Autodiff gradient of sum(f(x) * r) against oracle central differences.
void expect_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x0,
                     double tol = 1e-6) {
  Rng rng(17);
  const auto probe = normal_tensor(f(x0).shape(), rng);
  const auto x = x0.detach(true);
  sum(f(x) * probe).backward();
  const auto fd = oracle::central_difference(
      [&](const std::vector<double>& v) { return oracle::inner(f(Tensor(x0.shape(), v)), probe); },
      std::vector<double>(x0.values().begin(), x0.values().end()), 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    EXPECT_NEAR(x.grad()[i], fd[i], tol * std::max(1.0, std::abs(fd[i]))) << "index " << i;
  }
}

}  // namespace

TEST(Conv2d, MatchesOracle) {
  Rng rng(5);
  for (int t = 0; t < 25; ++t) {
    const std::size_t k = pick(rng, 1, 4), stride = pick(rng, 1, 3), pad = pick(rng, 0, k - 1);
    const auto x = normal_tensor({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, k, 9), pick(rng, k, 9)}, rng);
    const auto w = normal_tensor({pick(rng, 1, 4), x.dim(1), k, k}, rng);
    const auto b = normal_tensor({w.dim(0)}, rng);
    EXPECT_LE(oracle::max_abs_diff(conv2d(x, {w, b}, stride, pad), oracle::conv2d(x, w, b, stride, pad)),
              1e-12);
  }
}

TEST(Conv2d, HandExample) {
  // 1x1x3x3 input, 2x2 all-ones kernel, no padding: sums of 2x2 windows.
  const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = conv2d(x, {Tensor::full({1, 1, 2, 2}, 1.0), Tensor({1}, {0.5})}, 1, 0);
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()),
            (std::vector<double>{12.5, 16.5, 24.5, 28.5}));
}

TEST(Conv2d, ShapeErrors) {
  const Tensor x = Tensor::zeros({1, 2, 4, 4});
  EXPECT_THROW(conv2d(x, {Tensor::zeros({1, 3, 3, 3}), {}}, 1, 1), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({2, 4, 4}), {Tensor::zeros({1, 2, 3, 3}), {}}, 1, 1), ShapeError);
  EXPECT_THROW(conv2d(x, {Tensor::zeros({1, 2, 7, 7}), {}}, 1, 0), ShapeError);
}

TEST(ConvTranspose2d, MatchesOracle) {
  Rng rng(6);
  for (int t = 0; t < 25; ++t) {
    const std::size_t k = pick(rng, 1, 4), stride = pick(rng, 1, 3), pad = pick(rng, 0, k / 2);
    const auto x = normal_tensor({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
    const auto w = normal_tensor({x.dim(1), pick(rng, 1, 4), k, k}, rng);
    const auto b = normal_tensor({w.dim(1)}, rng);
    if ((x.dim(2) - 1) * stride + k <= 2 * pad || (x.dim(3) - 1) * stride + k <= 2 * pad) continue;
    const auto y = conv_transpose2d(x, {w, b}, stride, pad);
    EXPECT_EQ(y.dim(2), conv_transpose2d_extent(x.dim(2), k, stride, pad));
    EXPECT_LE(oracle::max_abs_diff(y, oracle::conv_transpose2d(x, w, b, stride, pad)), 1e-12);
  }
}

TEST(ConvTranspose2d, IsTheAdjointOfConv2d) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = pick(rng, 1, 4), stride = pick(rng, 1, 3), pad = pick(rng, 0, k / 2);
    const std::size_t out = pick(rng, 2, 5);
    const std::size_t extent = (out - 1) * stride + k - 2 * pad;
    const auto w = normal_tensor({pick(rng, 1, 4), pick(rng, 1, 4), k, k}, rng);
    const auto x = normal_tensor({2, w.dim(1), extent, extent}, rng);
    const auto y = normal_tensor({2, w.dim(0), out, out}, rng);
    const double lhs = oracle::inner(conv2d(x, {w, {}}, stride, pad), y);
    const double rhs = oracle::inner(x, conv_transpose2d(y, {w, {}}, stride, pad));
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(Linear, HandExample) {
  const Tensor x({1, 2}, {1, 2});
  const Tensor w({3, 2}, {1, 0, 0, 1, 1, 1});
  const auto y = linear(x, {w, Tensor({3}, {0.5, 0, -1})});
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), (std::vector<double>{1.5, 2, 2}));
  EXPECT_THROW(linear(Tensor::zeros({1, 3}), {w, {}}), ShapeError);
}

TEST(Norms, MatchOracles) {
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    const auto x = normal_tensor({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 6), pick(rng, 2, 6)}, rng, 3.0, 1.0);
    EXPECT_LE(oracle::max_abs_diff(instance_norm(x, 1e-5), oracle::instance_norm(x, 1e-5)), 1e-12);
    EXPECT_LE(oracle::max_abs_diff(batch_norm(x, 1e-5), oracle::batch_norm(x, 1e-5)), 1e-12);
  }
}

TEST(Norms, BatchNormOfOneImageIsInstanceNorm) {
  Rng rng(10);
  for (int t = 0; t < 10; ++t) {
    const auto x = normal_tensor({1, pick(rng, 1, 5), pick(rng, 2, 8), pick(rng, 2, 8)}, rng, 2.0, -1.0);
    EXPECT_LE(oracle::max_abs_diff(batch_norm(x), instance_norm(x)), 1e-12);
  }
}

TEST(Norms, InstanceNormDecomposesOverTheBatch) {
  Rng rng(11);
  const auto a = normal_tensor({1, 3, 5, 5}, rng);
  const auto b = normal_tensor({1, 3, 5, 5}, rng, 4.0, 2.0);
  const std::vector<Tensor> parts{a, b};
  const auto joint = instance_norm(concat(parts, 0));
  EXPECT_LE(oracle::max_abs_diff(slice(joint, 0, 1), instance_norm(a)), 1e-15);
  EXPECT_LE(oracle::max_abs_diff(slice(joint, 1, 2), instance_norm(b)), 1e-15);
}

TEST(Norms, InstanceNormInvariantToPerPlaneAffine) {
  Rng rng(12);
  const auto x = normal_tensor({2, 2, 4, 4}, rng);
  EXPECT_LE(oracle::max_abs_diff(instance_norm(x * 3.0 + 7.0, 1e-14), instance_norm(x, 1e-14)), 1e-10);
}

TEST(Norms, Gradients) {
  Rng rng(13);
  const auto x = normal_tensor({2, 2, 3, 3}, rng, 1.5, 0.2);
  expect_gradient([](const Tensor& t) { return instance_norm(t); }, x);
  expect_gradient([](const Tensor& t) { return batch_norm(t); }, x);
}

TEST(ScaleBias, HandExampleAndGradients) {
  const Tensor y({1, 2, 1, 2}, {1, 2, 3, 4});
  const auto out = scale_bias(y, Tensor({2}, {2, -1}), Tensor({2}, {0.5, 1}));
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()),
            (std::vector<double>{2.5, 4.5, -2, -3}));
  Rng rng(14);
  const auto s = normal_tensor({2}, rng), b = normal_tensor({2}, rng);
  expect_gradient([&](const Tensor& t) { return scale_bias(t, s, b); }, y);
  expect_gradient([&](const Tensor& t) { return scale_bias(y, t, b); }, s);
  EXPECT_THROW(scale_bias(y, Tensor::zeros({3}), b), ShapeError);
}

TEST(ConvGradients, MatchCentralDifferences) {
  Rng rng(15);
  const auto x = normal_tensor({1, 2, 5, 5}, rng);
  const auto w = normal_tensor({3, 2, 3, 3}, rng);
  const auto wt = normal_tensor({2, 3, 4, 4}, rng);
  expect_gradient([&](const Tensor& t) { return conv2d(t, {w, {}}, 2, 1); }, x);
  expect_gradient([&](const Tensor& t) { return conv2d(x, {t, {}}, 1, 1); }, w);
  expect_gradient([&](const Tensor& t) { return conv_transpose2d(t, {wt, {}}, 2, 1); }, x);
  expect_gradient([&](const Tensor& t) { return conv_transpose2d(x, {t, {}}, 2, 1); }, wt);
}

TEST(NormKind, ParseAndPrint) {
  for (const auto k : {NormKind::none, NormKind::instance, NormKind::batch}) {
    EXPECT_EQ(parse_norm_kind(to_string(k)), k);
  }
  EXPECT_ANY_THROW(parse_norm_kind("layer"));
}

TEST(Extents, ClosedForms) {
  EXPECT_EQ(conv2d_extent(32, 3, 1, 1), 32u);
  EXPECT_EQ(conv2d_extent(32, 3, 2, 1), 16u);
  EXPECT_EQ(conv_transpose2d_extent(4, 4, 2, 1), 8u);
}
