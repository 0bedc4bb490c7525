#pragma once

#include <cstddef>
#include <string>

#include "julesz/tensor.hpp"

namespace julesz {

/// Trainable (or frozen) tensors of one layer.
///
/// Convolutions hold kernels O x I x k x k, transposed convolutions I x O x k x k
/// (the layout of the conv2d they are the adjoint of), linear layers O x I.
/// For normalization layers `weight` is the per-channel scale s and `bias` the
/// shift b.
struct LayerParams {
  Tensor weight;
  Tensor bias;
};

enum class NormKind { none, instance, batch };

const char* to_string(NormKind kind);
NormKind parse_norm_kind(const std::string& text);  // "in", "bn", "none"

inline constexpr double kDefaultNormEps = 1e-5;

std::size_t conv2d_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t padding);
std::size_t conv_transpose2d_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                    std::size_t padding);

/// Cross-correlation with zero padding, x: N x I x H x W. The bias may be
/// undefined.
Tensor conv2d(const Tensor& x, const LayerParams& p, std::size_t stride, std::size_t padding);

/// Adjoint of conv2d with the same kernel: output extent (H - 1) * stride -
/// 2 * padding + k.
Tensor conv_transpose2d(const Tensor& x, const LayerParams& p, std::size_t stride,
                        std::size_t padding);

/// x W^T + b for x: N x I.
Tensor linear(const Tensor& x, const LayerParams& p);

/// Standardizes each (image, channel) plane over its H x W pixels with the
/// population variance. Gradients flow through the mean and the variance.
Tensor instance_norm(const Tensor& x, double eps = kDefaultNormEps);

/// Standardizes each channel over the whole batch and its pixels. Always uses
/// the statistics of the batch it is given.
Tensor batch_norm(const Tensor& x, double eps = kDefaultNormEps);

/// s[c] * y + b[c] per channel of an N x C x H x W tensor.
Tensor scale_bias(const Tensor& y, const Tensor& s, const Tensor& b);

Tensor normalize(const Tensor& x, NormKind kind, double eps = kDefaultNormEps);

}  // namespace julesz
