#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "julesz/errors.hpp"
#include "julesz/generators.hpp"
#include "julesz/ops.hpp"
#include "julesz/random.hpp"
#include "oracles.hpp"

using namespace julesz;
namespace fs = std::filesystem;

namespace {

bool bitwise_equal(const GeneratorParams& a, const GeneratorParams& b) {
  if (!(a.descriptor == b.descriptor) || a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const auto& x = a.tensors[i];
    const auto& y = b.tensors[i];
    if (x.name != y.name || x.tensor.shape() != y.tensor.shape()) return false;
    if (!std::equal(x.tensor.values().begin(), x.tensor.values().end(), y.tensor.values().begin())) return false;
  }
  return true;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("julesz_" + name); }

}  // namespace

TEST(Generators, TextureParameterCountByHand) {
  const auto g = build_texture_net(4, 8, NormKind::instance, 1, 8, 4);
  // fc1 4*8+8, fc2 8*64+64, one up stage 4*4*16 + scale/shift 8, rgb 3*4*9+3.
  EXPECT_EQ(g.parameter_count(), 991u);
  EXPECT_EQ(expected_parameter_count(g.descriptor), 991u);
}

TEST(Generators, StylizerParameterCountByHand) {
  const auto g = build_stylizer(NormKind::instance, 1, 1, 2, 1);
  // 4->2 conv 72+4, 2->4 conv 72+8, one block 2*(144+8), 4->2 up 128+4, 2->3 up 96+3.
  EXPECT_EQ(g.parameter_count(), 691u);
}

TEST(Generators, CountsAgreeAcrossArchitectures) {
  for (const auto norm : {NormKind::none, NormKind::instance, NormKind::batch}) {
    for (std::size_t out : {8u, 16u, 32u}) {
      const auto g = build_texture_net(6, out, norm, 2, 10, 5);
      EXPECT_EQ(g.parameter_count(), expected_parameter_count(g.descriptor));
    }
    for (std::size_t k : {0u, 2u}) {
      const auto g = build_stylizer(norm, k, 3, 4, 2);
      EXPECT_EQ(g.parameter_count(), expected_parameter_count(g.descriptor));
    }
  }
}

TEST(Generators, DeterministicBySeed) {
  EXPECT_TRUE(bitwise_equal(build_stylizer(NormKind::batch, 1, 9, 4, 1), build_stylizer(NormKind::batch, 1, 9, 4, 1)));
  EXPECT_FALSE(bitwise_equal(build_stylizer(NormKind::batch, 1, 9, 4, 1), build_stylizer(NormKind::batch, 1, 10, 4, 1)));
}

TEST(Generators, OutputShapes) {
  Rng rng(1);
  const auto t = build_texture_net(4, 16, NormKind::instance, 1, 8, 4);
  EXPECT_EQ(forward_texture(t, sample_noise(t.descriptor, 3, rng)).shape(), (Shape{3, 3, 16, 16}));
  EXPECT_THROW(forward_texture(t, Tensor::zeros({3, 5})), ShapeError);

  const auto s = build_stylizer(NormKind::instance, 2, 1, 2, 1);
  const auto x0 = Tensor::full({2, 3, 12, 12}, 0.5);
  EXPECT_EQ(forward_stylized(s, x0, sample_noise(s.descriptor, 2, rng, 12)).dim(1), 3u);
  EXPECT_THROW(forward_stylized(s, Tensor::zeros({1, 3, 10, 10}), Tensor::zeros({1, 2, 10, 10})), ShapeError);
  EXPECT_THROW(forward_stylized(s, x0, Tensor::zeros({2, 1, 12, 12})), ShapeError);
  EXPECT_THROW(forward_texture(s, Tensor::zeros({1, 4})), std::invalid_argument);
}

TEST(Generators, InvalidArchitecturesRejected) {
  EXPECT_THROW(build_texture_net(4, 12, NormKind::instance, 1), std::invalid_argument);
  EXPECT_THROW(build_texture_net(0, 8, NormKind::instance, 1), std::invalid_argument);
}

TEST(Generators, NoDeadParameters) {
  Rng rng(2);
  std::vector<GeneratorParams> nets{build_texture_net(4, 8, NormKind::instance, 3, 8, 4),
                                    build_texture_net(4, 8, NormKind::batch, 3, 8, 4),
                                    build_texture_net(4, 8, NormKind::none, 3, 8, 4),
                                    build_stylizer(NormKind::instance, 1, 3, 2, 1),
                                    build_stylizer(NormKind::batch, 1, 3, 2, 1),
                                    build_stylizer(NormKind::none, 0, 3, 2, 1)};
  for (auto& g : nets) {
    Tensor y;
    if (g.descriptor.kind == GeneratorKind::texture) {
      y = forward_texture(g, sample_noise(g.descriptor, 3, rng));
    } else {
      const auto x0 = normal_tensor({3, 3, 8, 8}, rng, 0.2, 0.5);
      y = forward_stylized(g, x0, g.descriptor.noise_channels ? sample_noise(g.descriptor, 3, rng, 8) : Tensor());
    }
    const auto w = normal_tensor(y.shape(), rng);
    sum(square(y * w)).backward();
    for (const auto& t : g.tensors) {
      double l1 = 0.0;
      for (double v : t.tensor.grad()) l1 += std::abs(v);
      EXPECT_GT(l1, 0.0) << t.name << " of " << g.descriptor.canonical();
    }
  }
}

TEST(Generators, InstanceNormalizedActivations) {
  Rng rng(3);
  const auto g = build_texture_net(4, 16, NormKind::instance, 4, 8, 4);
  std::size_t seen = 0;
  const auto probe = [&](const std::string&, const Tensor& a) {
    ++seen;
    const auto C = a.dim(1), P = a.dim(2) * a.dim(3);
    for (std::size_t n = 0; n < a.dim(0); ++n)
      for (std::size_t c = 0; c < C; ++c) {
        double m = 0.0;
        for (std::size_t p = 0; p < P; ++p) m += a.values()[(n * C + c) * P + p];
        EXPECT_NEAR(m / static_cast<double>(P), 0.0, 1e-12);
      }
  };
  forward_texture(g, sample_noise(g.descriptor, 2, rng), probe);
  EXPECT_EQ(seen, 2u);
}

TEST(Generators, DescriptorRoundTrip) {
  GeneratorDescriptor d;
  d.kind = GeneratorKind::stylizer;
  d.norm = NormKind::batch;
  d.eps = 1e-3;
  d.noise_channels = 2;
  d.residual_blocks = 5;
  EXPECT_EQ(GeneratorDescriptor::parse(d.canonical()), d);
  EXPECT_THROW(GeneratorDescriptor::parse("kind=texture"), FormatError);
  EXPECT_THROW(GeneratorDescriptor::parse(d.canonical() + ";extra=1"), FormatError);
}

TEST(Generators, SaveLoadRoundTripIsBitwise) {
  const auto path = temp_file("params_roundtrip.bin");
  Rng rng(4);
  auto g = build_stylizer(NormKind::instance, 1, 5, 2, 1);
  for (auto& t : g.tensors)
    for (auto& v : t.tensor.mutable_values()) v = normal_values(1, rng, 1e3)[0];
  save_params(g, path);
  EXPECT_TRUE(bitwise_equal(load_params(path), g));
  EXPECT_TRUE(bitwise_equal(load_params(path, &g.descriptor), g));
  auto other = g.descriptor;
  other.residual_blocks = 2;
  EXPECT_THROW(load_params(path, &other), FormatError);
  fs::remove(path);
}

TEST(Generators, CorruptedParameterFilesFail) {
  const auto path = temp_file("params_corrupt.bin");
  const auto g = build_texture_net(4, 8, NormKind::batch, 6, 8, 4);
  save_params(g, path);
  const auto size = fs::file_size(path);

  fs::resize_file(path, size - 1);
  EXPECT_THROW(load_params(path), FormatError);

  save_params(g, path);
  std::ofstream(path, std::ios::app | std::ios::binary) << '\0';
  EXPECT_THROW(load_params(path), FormatError);

  save_params(g, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  EXPECT_THROW(load_params(path), FormatError);
  EXPECT_ANY_THROW(load_params(temp_file("does_not_exist.bin")));
  fs::remove(path);
}

TEST(Generators, NamedAccess) {
  const auto g = build_texture_net(4, 8, NormKind::instance, 1, 8, 4);
  EXPECT_EQ(g.at("fc1.weight").shape(), (Shape{8, 4}));
  EXPECT_THROW(g.at("nope"), std::out_of_range);
  EXPECT_EQ(g.trainable().size(), g.tensors.size());
}
