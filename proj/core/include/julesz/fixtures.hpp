#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "julesz/tensor.hpp"

namespace julesz::fixtures {

// Procedural images used by tests and the bundled data/ directory. All values
// sit on 8-bit levels, so a PNG round trip reproduces them exactly.

/// Two-tone 4-pixel checkerboard with per-pixel noise; flat lighting.
Tensor checker_noise(std::size_t size = 32, std::uint64_t seed = 0);

/// Diagonal two-tone stripes of period 8 with per-pixel noise.
Tensor stripe_noise(std::size_t size = 32, std::uint64_t seed = 1);

/// Four content images with deliberately different contrast and brightness.
std::vector<Tensor> content_corpus(std::size_t size = 32);

/// Writes checker_noise.png, stripe_noise.png and content/content_<i>.png.
void write_all(const std::filesystem::path& dir);

}  // namespace julesz::fixtures
