#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "julesz/filter_bank.hpp"
#include "julesz/generators.hpp"
#include "julesz/julesz_loss.hpp"
#include "julesz/layers.hpp"
#include "julesz/report.hpp"
#include "julesz/tensor.hpp"

namespace julesz {

/// Hyper-parameters of every training loop. Each field maps to one key of the
/// flat key=value config format (see to_fields / set_field).
struct TrainConfig {
  double temperature = 10.0;
  double lambda = 0.0;
  double alpha = 0.5;
  std::size_t batch_size = 4;
  std::size_t noise_per_content = 1;  // stylizer: outputs sharing one content image
  double learning_rate = 3.0;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;
  std::uint64_t bank_seed = FilterBank::kDefaultSeed;
  NormKind norm = NormKind::instance;
  bool grad_normalize = true;
  bool clamp_output = false;
  std::size_t out_size = 32;
  std::size_t log_every = 1;
  std::size_t noise_dim = 32;
  std::size_t hidden = 64;
  std::size_t width = 16;
  std::size_t noise_channels = 1;
  std::size_t base_channels = 16;
  std::size_t eval_samples = 16;
  double eps = kDefaultNormEps;
  bool check_finite = true;
  bool record_timing = false;

  /// Defaults above are tuned for texture training; this variant for the
  /// stylizer uses plain gradients, a smaller step and batches of 2.
  static TrainConfig stylization_defaults();

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  ObjectiveConfig objective() const;
  GeneratorDescriptor texture_descriptor() const;
  GeneratorDescriptor stylizer_descriptor() const;

  std::map<std::string, std::string> to_fields() const;
  /// Throws std::invalid_argument for unknown keys or unparsable values.
  void set_field(const std::string& key, const std::string& value);
};

struct TrainResult {
  GeneratorParams params;
  TrainReport report;
};

/// Everything a hook needs to recompute the objective of one iteration. The
/// hook runs after backward and before the parameter update.
struct IterationContext {
  std::size_t iteration = 0;
  const GeneratorParams* params = nullptr;
  Tensor content;  // undefined for texture nets
  Tensor noise;
  std::size_t group_size = 0;
  const IterationRecord* record = nullptr;  // null on unlogged iterations
};

using IterationHook = std::function<void(const IterationContext&)>;

/// theta <- theta - lr * grad for every tensor that has a gradient. Throws
/// NumericError before touching anything if a gradient is not finite.
void sgd_step(std::span<const Tensor> params, double lr);
void zero_grads(std::span<const Tensor> params);

/// Builds the style target and a texture net from `cfg`, then runs SGD on the
/// Julesz objective.
TrainResult train_texture(const TrainConfig& cfg, const Tensor& reference,
                          const IterationHook& hook = {});

/// Texture training of a given generator. A stylizer-kind generator is fed a
/// flat 0.5 canvas as its content image.
TrainResult train_texture(const TrainConfig& cfg, const Tensor& reference, GeneratorParams initial,
                          const IterationHook& hook = {});

/// SGD on the stylization objective over minibatches drawn from `corpus`
/// (each 3 x H x W or 1 x 3 x H x W) with fresh noise.
TrainResult train_stylizer(const TrainConfig& cfg, const Tensor& reference,
                           std::span<const Tensor> corpus, const IterationHook& hook = {});

struct DirectResult {
  Tensor image;
  TrainReport report;
};

/// Gradient descent on the pixels of one image for L(x)/T (+ alpha L_cont(x,
/// content) when a content image is given), with x clamped to [0, 1] inside the
/// losses when clamp_output is set. Without an init image it starts
/// from N(0.5, 0.25^2) noise drawn from the seed.
DirectResult optimize_direct(const TrainConfig& cfg, const Tensor& reference,
                             const std::optional<Tensor>& init = std::nullopt,
                             const std::optional<Tensor>& content = std::nullopt);

/// Mean pairwise Euclidean distance of the samples divided by sqrt(D).
double diversity_metric(const Tensor& samples);

/// Variance of per-tile mean brightness over `tile` x `tile` tiles, averaged
/// over the batch.
double patch_brightness_variance(const Tensor& images, std::size_t tile = 8);

/// Evaluates a trained generator on fresh noise; stylizers use `content`
/// repeated for every sample.
Tensor generate_samples(const GeneratorParams& g, std::size_t n, std::uint64_t seed,
                        std::size_t out_size, const Tensor& content = {});

}  // namespace julesz
