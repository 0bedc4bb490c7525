#include "julesz/julesz_loss.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "julesz/errors.hpp"
#include "julesz/ops.hpp"

namespace julesz {

namespace {

constexpr char kTargetMagic[4] = {'J', 'Z', 'S', 'T'};
constexpr std::uint32_t kTargetVersion = 1;

// Per-sample squared Frobenius distance between G[n] and a fixed matrix.
Tensor squared_distance_to(const Tensor& g, const Tensor& target) {
  const auto N = g.dim(0);
  const auto M = g.size() / N;
  if (target.size() != M) {
    throw ShapeError("style loss: statistic " + shape_str(g.shape()) +
                     " does not match target " + shape_str(target.shape()));
  }
  const auto gv = g.values();
  const auto tv = target.values();
  std::vector<double> out(N, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      const double d = gv[n * M + i] - tv[i];
      acc += d * d;
    }
    out[n] = acc;
  }
  return make_result("squared_distance", Shape{N}, std::move(out), {g},
                     [N, M, target](detail::Node& self) {
                       const auto& gv = self.parents[0]->value;
                       const auto tv = target.values();
                       auto& gg = *parent_grad(self, 0);
                       for (std::size_t n = 0; n < N; ++n) {
                         for (std::size_t i = 0; i < M; ++i) {
                           gg[n * M + i] += 2.0 * self.grad[n] * (gv[n * M + i] - tv[i]);
                         }
                       }
                     });
}

Tensor as_batch(const Tensor& image) {
  if (image.rank() == 3) return reshape(image, Shape{1, image.dim(0), image.dim(1), image.dim(2)});
  if (image.rank() == 4 && image.dim(0) == 1) return image;
  throw ShapeError("expected a single 3 x H x W image, got " + shape_str(image.shape()));
}

double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

Tensor gram(const Tensor& a) {
  if (a.rank() != 4) throw ShapeError("gram: expected N x C x H x W, got " + shape_str(a.shape()));
  const auto N = a.dim(0), C = a.dim(1), S = a.dim(2) * a.dim(3);
  const double inv = 1.0 / static_cast<double>(S);
  const auto av = a.values();
  std::vector<double> out(N * C * C);
  for (std::size_t n = 0; n < N; ++n) {
    const double* base = av.data() + n * C * S;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t d = c; d < C; ++d) {
        double acc = 0.0;
        for (std::size_t u = 0; u < S; ++u) acc += base[c * S + u] * base[d * S + u];
        out[(n * C + c) * C + d] = acc * inv;
        out[(n * C + d) * C + c] = acc * inv;
      }
    }
  }
  return make_result("gram", Shape{N, C, C}, std::move(out), {a},
                     [N, C, S, inv](detail::Node& self) {
                       const auto& av = self.parents[0]->value;
                       auto& ga = *parent_grad(self, 0);
                       const auto& gg = self.grad;
                       for (std::size_t n = 0; n < N; ++n) {
                         for (std::size_t c = 0; c < C; ++c) {
                           for (std::size_t d = 0; d < C; ++d) {
                             const double w = (gg[(n * C + c) * C + d] + gg[(n * C + d) * C + c]) * inv;
                             if (w == 0.0) continue;
                             const double* src = av.data() + (n * C + d) * S;
                             double* dst = ga.data() + (n * C + c) * S;
                             for (std::size_t u = 0; u < S; ++u) dst[u] += w * src[u];
                           }
                         }
                       }
                     });
}

StyleTarget make_style_target(const Tensor& reference, const FilterBank& bank) {
  const auto x = as_batch(reference).detach();
  StyleTarget target;
  target.bank_seed = bank.seed();
  for (const auto& r : bank.responses(x)) {
    const auto g = gram(r);
    const auto C = g.dim(1);
    target.grams.emplace_back(Shape{C, C}, std::vector<double>(g.values().begin(), g.values().end()));
  }
  return target;
}

void save_style_target(const StyleTarget& target, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kTargetMagic, 4);
  binary::put_u32(out, kTargetVersion);
  binary::put_u64(out, target.bank_seed);
  binary::put_u32(out, static_cast<std::uint32_t>(target.grams.size()));
  for (const auto& g : target.grams) binary::put_u32(out, static_cast<std::uint32_t>(g.dim(0)));
  for (const auto& g : target.grams) {
    for (double v : g.values()) binary::put_f64(out, v);
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

StyleTarget load_style_target(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  binary::read_exact(in, magic, 4, "style target magic");
  if (!std::equal(magic, magic + 4, kTargetMagic)) {
    throw FormatError(path.string() + ": not a style target file");
  }
  if (const auto version = binary::get_u32(in, "version"); version != kTargetVersion) {
    throw FormatError(path.string() + ": unsupported style target version " +
                      std::to_string(version));
  }
  StyleTarget target;
  target.bank_seed = binary::get_u64(in, "bank seed");
  const auto taps = binary::get_u32(in, "tap count");
  if (taps == 0 || taps > 64) throw FormatError(path.string() + ": implausible tap count");
  std::vector<std::size_t> channels(taps);
  for (auto& c : channels) {
    c = binary::get_u32(in, "channel count");
    if (c == 0 || c > 4096) throw FormatError(path.string() + ": implausible channel count");
  }
  for (auto c : channels) {
    std::vector<double> values(c * c);
    for (auto& v : values) v = binary::get_f64(in, "gram values");
    target.grams.emplace_back(Shape{c, c}, std::move(values));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after style target");
  }
  return target;
}

Tensor style_loss_per_sample(const Tensor& x, const StyleTarget& target, const FilterBank& bank) {
  if (target.grams.size() != bank.tap_count()) {
    throw ShapeError("style loss: target has " + std::to_string(target.grams.size()) +
                     " taps, bank has " + std::to_string(bank.tap_count()));
  }
  const auto responses = bank.responses(x);
  Tensor total;
  for (std::size_t l = 0; l < responses.size(); ++l) {
    auto term = squared_distance_to(gram(responses[l]), target.grams[l]);
    total = total.defined() ? total + term : term;
  }
  return total;
}

Tensor style_loss(const Tensor& x, const StyleTarget& target, const FilterBank& bank) {
  return mean(style_loss_per_sample(x, target, bank));
}

Tensor content_loss(const Tensor& x, const Tensor& x0, const FilterBank& bank) {
  if (x.shape() != x0.shape()) {
    throw ShapeError("content loss: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(x0.shape()));
  }
  const auto diff = bank.content_response(x) - bank.content_response(x0);
  return mean(square(diff));
}

DiversityStats nn_distances(const Tensor& batch, std::size_t group_size) {
  if (batch.rank() < 1) throw ShapeError("nn_distances: expected a batch");
  const auto N = batch.dim(0);
  const auto group = group_size == 0 ? N : group_size;
  if (group < 2 || N % group != 0) {
    throw ShapeError("nn_distances: need groups of >= 2 elements, got N=" + std::to_string(N) +
                     " group=" + std::to_string(group));
  }
  const auto D = batch.size() / N;
  const auto v = batch.values();
  DiversityStats stats;
  stats.rho.assign(N, 0.0);
  stats.nearest.assign(N, 0);
  for (std::size_t start = 0; start < N; start += group) {
    for (std::size_t i = start; i < start + group; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_j = i;
      for (std::size_t j = start; j < start + group; ++j) {
        if (j == i) continue;
        double acc = 0.0;
        for (std::size_t k = 0; k < D; ++k) {
          const double d = v[i * D + k] - v[j * D + k];
          acc += d * d;
        }
        if (acc < best) {
          best = acc;
          best_j = j;
        }
      }
      stats.rho[i] = std::sqrt(best);
      stats.nearest[i] = best_j;
    }
  }
  return stats;
}

Tensor log_nn_distances(const Tensor& batch, std::size_t group_size, double floor) {
  if (!(floor > 0.0)) throw DomainError("log_nn_distances: floor must be positive");
  auto stats = nn_distances(batch, group_size);
  const auto N = batch.dim(0);
  const auto D = batch.size() / N;
  std::vector<double> out(N);
  for (std::size_t i = 0; i < N; ++i) out[i] = std::log(std::max(stats.rho[i], floor));
  return make_result("log_nn_distance", Shape{N}, std::move(out), {batch},
                     [stats = std::move(stats), N, D, floor](detail::Node& self) {
                       const auto& x = self.parents[0]->value;
                       auto& gx = *parent_grad(self, 0);
                       for (std::size_t i = 0; i < N; ++i) {
                         const double rho = stats.rho[i];
                         if (rho <= floor) continue;
                         const auto j = stats.nearest[i];
                         const double w = self.grad[i] / (rho * rho);
                         for (std::size_t k = 0; k < D; ++k) {
                           const double d = w * (x[i * D + k] - x[j * D + k]);
                           gx[i * D + k] += d;
                           gx[j * D + k] -= d;
                         }
                       }
                     });
}

EntropyEstimate entropy_estimate(const Tensor& batch, double floor) {
  const auto N = batch.dim(0);
  const auto D = batch.size() / N;
  const auto logs = log_nn_distances(batch, 0, floor);
  EntropyEstimate est;
  est.value = sum(logs) * (static_cast<double>(D) / static_cast<double>(N));
  const double log_floor = std::log(floor);
  est.degenerate = std::all_of(logs.values().begin(), logs.values().end(),
                               [log_floor](double v) { return v <= log_floor; });
  return est;
}

std::vector<double> normalize_l1(std::span<const double> v) {
  double norm = 0.0;
  for (double x : v) norm += std::abs(x);
  std::vector<double> out(v.begin(), v.end());
  if (norm > 0.0) {
    for (auto& x : out) x /= norm;
  }
  return out;
}

Tensor grad_normalize_hook(const Tensor& x, double weight) {
  if (x.rank() < 1) throw ShapeError("grad_normalize_hook: expected a batch");
  const auto N = x.dim(0);
  const auto D = x.size() / N;
  std::vector<double> values(x.values().begin(), x.values().end());
  return make_result("grad_normalize", x.shape(), std::move(values), {x},
                     [N, D, weight](detail::Node& self) {
                       auto& gx = *parent_grad(self, 0);
                       for (std::size_t n = 0; n < N; ++n) {
                         const auto rescaled = normalize_l1(
                             std::span<const double>(self.grad.data() + n * D, D));
                         for (std::size_t k = 0; k < D; ++k) gx[n * D + k] += weight * rescaled[k];
                       }
                     });
}

ObjectiveTerms julesz_objective_from_images(const Tensor& images, const StyleTarget& target,
                                            const FilterBank& bank, const ObjectiveConfig& cfg,
                                            std::size_t group_size) {
  if (!(cfg.temperature > 0.0)) throw DomainError("objective: temperature must be positive");
  if (cfg.lambda < 0.0) throw DomainError("objective: lambda must be >= 0");
  const auto N = images.dim(0);
  const auto group = group_size == 0 ? N : group_size;
  if (cfg.lambda > 0.0 && group < 2) {
    throw std::invalid_argument("objective: lambda > 0 requires at least 2 samples per group");
  }

  ObjectiveTerms terms;
  terms.images = images;
  const auto seen = cfg.clamp_output ? clamp(images, 0.0, 1.0) : images;
  const auto style_input =
      cfg.grad_normalize
          ? grad_normalize_hook(seen, 1.0 / (static_cast<double>(N) * cfg.temperature))
          : seen;
  const auto per_sample = style_loss_per_sample(style_input, target, bank);
  terms.style = mean_of(per_sample.values());
  terms.objective = mean(per_sample) / cfg.temperature;

  if (group >= 2 && N % group == 0) {
    if (cfg.lambda > 0.0) {
      const auto logs = log_nn_distances(images, group, cfg.rho_floor);
      const auto diversity = mean(logs);
      terms.diversity = diversity.item();
      terms.objective = terms.objective - diversity * cfg.lambda;
    } else {
      const auto stats = nn_distances(images, group);
      double acc = 0.0;
      for (double r : stats.rho) acc += std::log(std::max(r, cfg.rho_floor));
      terms.diversity = acc / static_cast<double>(N);
    }
  }
  return terms;
}

ObjectiveTerms julesz_objective(const Tensor& z, const TextureGenerator& g,
                                const StyleTarget& target, const FilterBank& bank,
                                const ObjectiveConfig& cfg) {
  if (cfg.lambda > 0.0 && z.dim(0) < 2) {
    throw std::invalid_argument("julesz objective: lambda > 0 requires a batch of >= 2");
  }
  return julesz_objective_from_images(g(z), target, bank, cfg, 0);
}

ObjectiveTerms stylization_objective(const Tensor& x0, const Tensor& z,
                                     const StylizationGenerator& g, const StyleTarget& target,
                                     const FilterBank& bank, const ObjectiveConfig& cfg,
                                     std::size_t group_size) {
  if (cfg.lambda > 0.0 && group_size < 2) {
    throw std::invalid_argument(
        "stylization objective: lambda > 0 requires >= 2 noise samples per content image");
  }
  if (x0.dim(0) % std::max<std::size_t>(group_size, 1) != 0) {
    throw ShapeError("stylization objective: batch not divisible by group size");
  }
  const auto images = g(x0, z);
  if (images.shape() != x0.shape()) {
    throw ShapeError("stylization objective: generator output " + shape_str(images.shape()) +
                     " does not match content " + shape_str(x0.shape()));
  }
  auto terms = julesz_objective_from_images(images, target, bank, cfg, group_size);
  if (cfg.alpha > 0.0) {
    const auto content =
        content_loss(cfg.clamp_output ? clamp(images, 0.0, 1.0) : images, x0, bank);
    terms.content = content.item();
    terms.objective = terms.objective + content * cfg.alpha;
  }
  return terms;
}

}  // namespace julesz
