#include "julesz/filter_bank.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "julesz/errors.hpp"
#include "julesz/ops.hpp"
#include "julesz/random.hpp"

namespace julesz {

FilterBank::FilterBank(std::uint64_t seed, const Options& options)
    : seed_(seed), taps_(options.taps), content_tap_(options.content_tap) {
  if (options.channels.size() != options.strides.size() || options.channels.empty()) {
    throw std::invalid_argument("filter bank: channels and strides must be non-empty and aligned");
  }
  Rng rng(seed);
  std::size_t in_channels = 3;
  const auto k = options.kernel;
  for (std::size_t s = 0; s < options.channels.size(); ++s) {
    const auto out_channels = options.channels[s];
    const auto fan_in = in_channels * k * k;
    FilterStage stage;
    stage.conv.weight = normal_tensor({out_channels, in_channels, k, k}, rng,
                                      1.0 / std::sqrt(static_cast<double>(fan_in)));
    stage.conv.bias = Tensor::zeros({out_channels});
    stage.stride = options.strides[s];
    stage.padding = k / 2;
    stages_.push_back(std::move(stage));
    in_channels = out_channels;
  }
  if (taps_.empty()) throw std::invalid_argument("filter bank: at least one tap point");
  for (auto t : taps_) {
    if (t >= stages_.size()) throw std::invalid_argument("filter bank: tap out of range");
  }
  if (content_tap_ >= stages_.size()) {
    throw std::invalid_argument("filter bank: content tap out of range");
  }
}

FilterBank::FilterBank(std::vector<FilterStage> stages, std::vector<std::size_t> taps,
                       std::size_t content_tap, std::uint64_t seed)
    : seed_(seed), stages_(std::move(stages)), taps_(std::move(taps)), content_tap_(content_tap) {
  if (stages_.empty() || taps_.empty()) {
    throw std::invalid_argument("filter bank: needs at least one stage and one tap point");
  }
  for (auto t : taps_) {
    if (t >= stages_.size()) throw std::invalid_argument("filter bank: tap out of range");
  }
  if (content_tap_ >= stages_.size()) {
    throw std::invalid_argument("filter bank: content tap out of range");
  }
}

std::size_t FilterBank::tap_channels(std::size_t tap) const {
  return stages_.at(taps_.at(tap)).conv.weight.dim(0);
}

std::size_t FilterBank::min_input_extent() const {
  // Walk backwards from a 1-pixel output through each stage.
  std::size_t extent = 1;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    const auto k = it->conv.weight.dim(2);
    const auto needed = (extent - 1) * it->stride + k;
    extent = needed > 2 * it->padding ? needed - 2 * it->padding : 1;
  }
  return extent;
}

void FilterBank::check_input(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != stages_.front().conv.weight.dim(1)) {
    throw ShapeError("filter bank: expected N x " +
                     std::to_string(stages_.front().conv.weight.dim(1)) + " x H x W input, got " +
                     shape_str(x.shape()));
  }
  const auto minimum = min_input_extent();
  if (x.dim(2) < minimum || x.dim(3) < minimum) {
    throw ShapeError("filter bank: input " + shape_str(x.shape()) +
                     " too small, spatial extent must be >= " + std::to_string(minimum));
  }
}

std::vector<Tensor> FilterBank::responses(const Tensor& x) const {
  check_input(x);
  const auto last = *std::max_element(taps_.begin(), taps_.end());
  std::vector<Tensor> by_stage;
  Tensor h = x;
  for (std::size_t s = 0; s <= last; ++s) {
    h = relu(conv2d(h, stages_[s].conv, stages_[s].stride, stages_[s].padding));
    by_stage.push_back(h);
  }
  std::vector<Tensor> out;
  out.reserve(taps_.size());
  for (auto t : taps_) out.push_back(by_stage[t]);
  return out;
}

Tensor FilterBank::content_response(const Tensor& x) const {
  check_input(x);
  Tensor h = x;
  for (std::size_t s = 0; s <= content_tap_; ++s) {
    h = relu(conv2d(h, stages_[s].conv, stages_[s].stride, stages_[s].padding));
  }
  return h;
}

}  // namespace julesz
