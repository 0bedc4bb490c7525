#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "julesz/layers.hpp"
#include "julesz/tensor.hpp"

namespace julesz {

/// One frozen conv + ReLU stage of a filter bank.
struct FilterStage {
  LayerParams conv;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

/// Architecture of the default filter bank.
struct FilterBankOptions {
  std::vector<std::size_t> channels{8, 16, 16, 16};
  std::vector<std::size_t> strides{1, 2, 2, 2};
  std::size_t kernel = 3;
  std::vector<std::size_t> taps{0, 1, 2, 3};
  std::size_t content_tap = 1;
};

/// Fixed, seed-deterministic stack of convolution + ReLU stages. The
/// activations at the tap points are the filter responses whose Gram matrices
/// characterize a texture.
class FilterBank {
 public:
  using Options = FilterBankOptions;

  static constexpr std::uint64_t kDefaultSeed = 7;

  /// Weights ~ N(0, 1) / sqrt(fan-in), zero biases.
  explicit FilterBank(std::uint64_t seed = kDefaultSeed, const Options& options = Options{});

  /// Bank with caller-supplied stages, for tests and experiments.
  FilterBank(std::vector<FilterStage> stages, std::vector<std::size_t> taps,
             std::size_t content_tap, std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::size_t tap_count() const { return taps_.size(); }
  const std::vector<std::size_t>& taps() const { return taps_; }
  std::size_t content_tap() const { return content_tap_; }
  std::size_t tap_channels(std::size_t tap) const;
  const std::vector<FilterStage>& stages() const { return stages_; }

  /// Smallest square input extent that leaves every stage with >= 1 pixel.
  std::size_t min_input_extent() const;

  /// Activations at each tap point for x: N x 3 x H x W.
  std::vector<Tensor> responses(const Tensor& x) const;

  /// Activation at the content tap only (stops after that stage).
  Tensor content_response(const Tensor& x) const;

 private:
  void check_input(const Tensor& x) const;

  std::uint64_t seed_ = 0;
  std::vector<FilterStage> stages_;
  std::vector<std::size_t> taps_;
  std::size_t content_tap_ = 0;
};

}  // namespace julesz
