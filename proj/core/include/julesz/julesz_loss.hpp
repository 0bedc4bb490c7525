#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "julesz/filter_bank.hpp"
#include "julesz/tensor.hpp"

namespace julesz {

/// Per-tap Gram matrices of a reference texture (the target statistics).
struct StyleTarget {
  std::uint64_t bank_seed = 0;
  std::vector<Tensor> grams;  // C_l x C_l each
};

/// G[n,c,c'] = (1/HW) sum_u a[n,c,u] a[n,c',u] for a: N x C x H x W.
Tensor gram(const Tensor& a);

/// Target statistics of a 1 x 3 x H x W (or 3 x H x W) reference image.
StyleTarget make_style_target(const Tensor& reference, const FilterBank& bank);

void save_style_target(const StyleTarget& target, const std::filesystem::path& path);
StyleTarget load_style_target(const std::filesystem::path& path);

/// Sum over taps of ||G_l(x_n) - target_l||_F^2, one value per image: shape [N].
Tensor style_loss_per_sample(const Tensor& x, const StyleTarget& target, const FilterBank& bank);

/// Batch mean of style_loss_per_sample.
Tensor style_loss(const Tensor& x, const StyleTarget& target, const FilterBank& bank);

/// Mean squared difference of the content-tap activations of x and x0.
Tensor content_loss(const Tensor& x, const Tensor& x0, const FilterBank& bank);

/// Nearest neighbour of every batch element by Euclidean distance over the
/// flattened image. Ties go to the smallest index.
struct DiversityStats {
  std::vector<double> rho;
  std::vector<std::size_t> nearest;
};

inline constexpr double kRhoFloor = 1e-8;

/// Neighbours are searched within consecutive groups of `group_size` elements
/// (0 means the whole batch).
DiversityStats nn_distances(const Tensor& batch, std::size_t group_size = 0);

/// ln(max(rho_i, floor)) per element, differentiable in the batch; shape [N].
/// A floored element contributes no gradient.
Tensor log_nn_distances(const Tensor& batch, std::size_t group_size = 0,
                        double floor = kRhoFloor);

struct EntropyEstimate {
  Tensor value;             // (D/N) sum_i ln rho_i, additive constant dropped
  bool degenerate = false;  // every rho at the floor
};

EntropyEstimate entropy_estimate(const Tensor& batch, double floor = kRhoFloor);

/// Rescales v to unit L1 norm; a zero vector is returned unchanged.
std::vector<double> normalize_l1(std::span<const double> v);

/// Identity in the forward pass. In the backward pass the gradient arriving for
/// each batch element is rescaled to L1 norm `weight` (zero stays zero). The
/// objectives pass their own 1/(N T) factor as the weight so the temperature
/// keeps its meaning.
Tensor grad_normalize_hook(const Tensor& x, double weight = 1.0);

struct ObjectiveConfig {
  double temperature = 10.0;
  double lambda = 0.0;
  double alpha = 0.0;
  bool grad_normalize = false;
  bool clamp_output = false;  // style and content see images clamped to [0, 1]
  double rho_floor = kRhoFloor;
};

/// Objective value together with the terms it was assembled from.
struct ObjectiveTerms {
  Tensor objective;
  Tensor images;
  double style = 0.0;      // batch mean style loss
  double content = 0.0;    // content loss (0 without content)
  double diversity = 0.0;  // mean ln rho (0 when not computed)
};

using TextureGenerator = std::function<Tensor(const Tensor& z)>;
using StylizationGenerator = std::function<Tensor(const Tensor& x0, const Tensor& z)>;

/// (1/N) sum_i [ L(g(z_i)) / T - lambda ln rho_i ]. rho is measured on the raw
/// generator output.
ObjectiveTerms julesz_objective(const Tensor& z, const TextureGenerator& g,
                                const StyleTarget& target, const FilterBank& bank,
                                const ObjectiveConfig& cfg);

/// Same objective evaluated on already generated images.
ObjectiveTerms julesz_objective_from_images(const Tensor& images, const StyleTarget& target,
                                            const FilterBank& bank, const ObjectiveConfig& cfg,
                                            std::size_t group_size = 0);

/// (1/N) sum_i [ L(x_i) / T + alpha L_cont(x_i, x0_i) - lambda ln rho_i ], with
/// x = g(x0, z) and rho_i taken among outputs that share a content image.
/// Shared content images must be adjacent in groups of `group_size`.
ObjectiveTerms stylization_objective(const Tensor& x0, const Tensor& z,
                                     const StylizationGenerator& g, const StyleTarget& target,
                                     const FilterBank& bank, const ObjectiveConfig& cfg,
                                     std::size_t group_size);

}  // namespace julesz
