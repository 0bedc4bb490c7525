#include "julesz/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "julesz/image_io.hpp"
#include "julesz/random.hpp"

namespace julesz::fixtures {

namespace {

using Rgb = std::array<double, 3>;

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

Tensor paint(std::size_t size, const std::function<Rgb(std::size_t, std::size_t)>& pixel) {
  std::vector<double> values(3 * size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const auto rgb = pixel(y, x);
      for (std::size_t c = 0; c < 3; ++c) values[(c * size + y) * size + x] = quantize(rgb[c]);
    }
  }
  return Tensor({1, 3, size, size}, std::move(values));
}

Rgb noisy(const Rgb& base, Rng& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  const double shared = n(rng);
  return {base[0] + shared + 0.3 * n(rng), base[1] + shared + 0.3 * n(rng),
          base[2] + shared + 0.3 * n(rng)};
}

}  // namespace

Tensor checker_noise(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  const Rgb dark{0.22, 0.18, 0.14}, light{0.82, 0.74, 0.58};
  return paint(size, [&](std::size_t y, std::size_t x) {
    return noisy(((y / 4) + (x / 4)) % 2 == 0 ? dark : light, rng, 0.06);
  });
}

Tensor stripe_noise(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  const Rgb a{0.15, 0.30, 0.62}, b{0.90, 0.80, 0.35};
  return paint(size, [&](std::size_t y, std::size_t x) {
    return noisy((x + y) % 8 < 4 ? a : b, rng, 0.06);
  });
}

std::vector<Tensor> content_corpus(std::size_t size) {
  const double s = static_cast<double>(size);
  const double c = (s - 1.0) / 2.0;
  std::vector<Tensor> out;
  // High-contrast disc.
  out.push_back(paint(size, [&](std::size_t y, std::size_t x) {
    const double r = std::hypot(y - c, x - c);
    return r < s * 0.3 ? Rgb{0.92, 0.85, 0.80} : Rgb{0.08, 0.10, 0.18};
  }));
  // Low-contrast diagonal ramp.
  out.push_back(paint(size, [&](std::size_t y, std::size_t x) {
    const double t = (static_cast<double>(x) + static_cast<double>(y)) / (2.0 * (s - 1.0));
    return Rgb{0.42 + 0.12 * t, 0.48 + 0.10 * t, 0.45 + 0.08 * t};
  }));
  // Dark, mid-contrast rectangles.
  out.push_back(paint(size, [&](std::size_t y, std::size_t x) {
    const bool a = y > s * 0.15 && y < s * 0.55 && x > s * 0.1 && x < s * 0.6;
    const bool b = y > s * 0.45 && y < s * 0.9 && x > s * 0.5 && x < s * 0.9;
    if (a) return Rgb{0.45, 0.20, 0.15};
    if (b) return Rgb{0.15, 0.35, 0.25};
    return Rgb{0.12, 0.12, 0.14};
  }));
  // Bright, low-contrast rings.
  out.push_back(paint(size, [&](std::size_t y, std::size_t x) {
    const double r = std::hypot(y - c, x - c);
    const double w = 0.06 * std::cos(r * 0.9);
    return Rgb{0.80 + w, 0.82 + w, 0.76 + w};
  }));
  return out;
}

void write_all(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "content");
  save_png(checker_noise(), dir / "checker_noise.png");
  save_png(stripe_noise(), dir / "stripe_noise.png");
  const auto corpus = content_corpus();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    save_png(corpus[i], dir / "content" / ("content_" + std::to_string(i) + ".png"));
  }
}

}  // namespace julesz::fixtures
