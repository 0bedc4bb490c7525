#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "julesz/layers.hpp"
#include "julesz/random.hpp"
#include "julesz/tensor.hpp"

namespace julesz {

enum class GeneratorKind { texture, stylizer };

/// Architecture of a generator. Serialized as canonical `key=value;...` text in
/// parameter files.
struct GeneratorDescriptor {
  GeneratorKind kind = GeneratorKind::texture;
  NormKind norm = NormKind::instance;
  double eps = kDefaultNormEps;
  // texture net
  std::size_t noise_dim = 32;
  std::size_t hidden = 64;
  std::size_t width = 16;  // channels of the 4x4 seed and of every upsampling stage
  std::size_t out_size = 32;
  // stylizer
  std::size_t noise_channels = 1;
  std::size_t base_channels = 16;  // down path 16 -> 32, residual blocks at 32
  std::size_t residual_blocks = 3;

  std::string canonical() const;
  static GeneratorDescriptor parse(const std::string& text);

  bool operator==(const GeneratorDescriptor&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Every trainable tensor of a generator, in a stable order, plus its
/// architecture.
struct GeneratorParams {
  GeneratorDescriptor descriptor;
  std::vector<NamedTensor> tensors;

  const Tensor& at(const std::string& name) const;
  std::size_t parameter_count() const;
  std::vector<Tensor> trainable() const;
};

/// Closed-form parameter count of an architecture.
std::size_t expected_parameter_count(const GeneratorDescriptor& d);

/// Linear(noise_dim -> hidden), ReLU, linear(hidden -> width*4*4), reshape to
/// width x 4 x 4, then one [conv_transpose2d(k4, s2) -> norm -> scale_bias ->
/// ReLU] stage per doubling and a final 3x3 conv to RGB. He-style init.
GeneratorParams build_texture_net(std::size_t noise_dim, std::size_t out_size, NormKind norm,
                                  std::uint64_t seed, std::size_t hidden = 64,
                                  std::size_t width = 16);
GeneratorParams build_generator(const GeneratorDescriptor& d, std::uint64_t seed);

/// Residual stylizer g(x0, z): input is x0 concatenated with `noise_channels`
/// planes of noise; two stride-2 3x3 convs (3+k -> 16 -> 32), residual blocks
/// at 32, two stride-2 transposed convs (32 -> 16 -> 3). Normalization after
/// every conv except the output.
GeneratorParams build_stylizer(NormKind norm, std::size_t noise_channels, std::uint64_t seed,
                               std::size_t base_channels = 16, std::size_t residual_blocks = 3);

/// Called with (layer name, post-normalization activation) during a forward.
using ActivationProbe = std::function<void(const std::string&, const Tensor&)>;

/// z: N x noise_dim -> N x 3 x out_size x out_size.
Tensor forward_texture(const GeneratorParams& g, const Tensor& z,
                       const ActivationProbe& probe = {});

/// x0: N x 3 x H x W, z: N x noise_channels x H x W (undefined when there are
/// no noise channels). H and W must be multiples of 4.
Tensor forward_stylized(const GeneratorParams& g, const Tensor& x0, const Tensor& z,
                        const ActivationProbe& probe = {});

/// Noise batch for either kind; `extent` is the stylizer's spatial size.
Tensor sample_noise(const GeneratorDescriptor& d, std::size_t n, Rng& rng,
                    std::size_t extent = 0);

/// Parameter file: magic, version, descriptor text, then named tensors as
/// little-endian doubles.
void save_params(const GeneratorParams& g, const std::filesystem::path& path);

/// Reads a parameter file. When `expected` is given, the stored descriptor must
/// equal it. Nothing is returned unless the whole file validates.
GeneratorParams load_params(const std::filesystem::path& path,
                            const GeneratorDescriptor* expected = nullptr);

}  // namespace julesz
