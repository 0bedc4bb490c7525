#include "julesz/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "julesz/errors.hpp"

namespace julesz {

Tensor load_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError(path.string() + ": cannot decode PNG (" + image.message + ")");
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": cannot decode PNG (" + message + ")");
  }
  const std::size_t H = image.height, W = image.width;
  std::vector<double> values(3 * H * W);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        values[(c * H + y) * W + x] = buffer[(y * W + x) * 3 + c] / 255.0;
      }
    }
  }
  return Tensor({1, 3, H, W}, std::move(values));
}

void save_png(const Tensor& image, const std::filesystem::path& path) {
  const bool batched = image.rank() == 4;
  if (!((image.rank() == 3 && image.dim(0) == 3) ||
        (batched && image.dim(0) == 1 && image.dim(1) == 3))) {
    throw ShapeError("save_png: expected 3 x H x W or 1 x 3 x H x W, got " + shape_str(image.shape()));
  }
  const std::size_t H = image.dim(batched ? 2 : 1), W = image.dim(batched ? 3 : 2);
  const auto v = image.values();
  std::vector<png_byte> buffer(3 * H * W);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double clamped = std::clamp(v[(c * H + y) * W + x], 0.0, 1.0);
        buffer[(y * W + x) * 3 + c] = static_cast<png_byte>(std::lround(clamped * 255.0));
      }
    }
  }
  png_image out;
  std::memset(&out, 0, sizeof out);
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(W);
  out.height = static_cast<png_uint_32>(H);
  out.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error(path.string() + ": cannot write PNG (" + out.message + ")");
  }
}

Tensor tile_grid(const Tensor& batch, std::size_t columns) {
  if (batch.rank() != 4 || batch.dim(1) != 3 || columns == 0) {
    throw ShapeError("tile_grid: expected N x 3 x H x W, got " + shape_str(batch.shape()));
  }
  const auto N = batch.dim(0), H = batch.dim(2), W = batch.dim(3);
  const auto cols = std::min(columns, N);
  const auto rows = (N + cols - 1) / cols;
  const auto GH = rows * (H + 1) - 1, GW = cols * (W + 1) - 1;
  std::vector<double> grid(3 * GH * GW, 1.0);
  const auto v = batch.values();
  for (std::size_t n = 0; n < N; ++n) {
    const auto oy = (n / cols) * (H + 1), ox = (n % cols) * (W + 1);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          grid[(c * GH + oy + y) * GW + ox + x] = v[((n * 3 + c) * H + y) * W + x];
        }
      }
    }
  }
  return Tensor({1, 3, GH, GW}, std::move(grid));
}

}  // namespace julesz
