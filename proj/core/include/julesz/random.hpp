#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "julesz/tensor.hpp"

namespace julesz {

using Rng = std::mt19937_64;

/// Independent stream seed from a run seed and a stream tag (splitmix64 mix).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream tags used by the trainer.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t noise = 2;
inline constexpr std::uint64_t data = 3;
inline constexpr std::uint64_t eval = 4;
inline constexpr std::uint64_t pixels = 5;
}  // namespace streams

inline std::vector<double> normal_values(std::size_t n, Rng& rng, double stddev = 1.0,
                                         double mean = 0.0) {
  std::normal_distribution<double> dist(mean, stddev);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

inline Tensor normal_tensor(Shape shape, Rng& rng, double stddev = 1.0, double mean = 0.0,
                            bool requires_grad = false) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), normal_values(n, rng, stddev, mean), requires_grad);
}

}  // namespace julesz
