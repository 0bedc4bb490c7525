#pragma once

#include <filesystem>

#include "julesz/tensor.hpp"

namespace julesz {

/// Reads an 8-bit PNG (any color type, converted to RGB) as a 1 x 3 x H x W
/// tensor with values in [0, 1]. Throws FormatError naming the file if it
/// cannot be decoded.
Tensor load_png(const std::filesystem::path& path);

/// Writes a 3 x H x W or 1 x 3 x H x W image as 8-bit RGB. Values are clamped
/// to [0, 1] and rounded to the nearest level.
void save_png(const Tensor& image, const std::filesystem::path& path);

/// Tiles an N x 3 x H x W batch into a grid with `columns` images per row and
/// a 1-pixel white gutter; returns a 1 x 3 x H' x W' image.
Tensor tile_grid(const Tensor& batch, std::size_t columns);

}  // namespace julesz
