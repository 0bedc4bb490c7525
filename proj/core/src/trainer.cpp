#include "julesz/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "julesz/errors.hpp"
#include "julesz/ops.hpp"
#include "julesz/random.hpp"

namespace julesz {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Tensor as_image_batch(const Tensor& image) {
  if (image.rank() == 3) {
    return Tensor(Shape{1, image.dim(0), image.dim(1), image.dim(2)},
                  std::vector<double>(image.values().begin(), image.values().end()));
  }
  if (image.rank() == 4 && image.dim(0) == 1) return image.detach();
  throw ShapeError("expected a single 3 x H x W image, got " + shape_str(image.shape()));
}

// Repeats row `index` of a batch `count` times into `out`.
void append_copies(std::vector<double>& out, const Tensor& image, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    out.insert(out.end(), image.values().begin(), image.values().end());
  }
}

struct Batch {
  Tensor content;  // undefined for texture nets
  Tensor noise;
  std::size_t group_size = 0;
};

using BatchSampler = std::function<Batch(std::size_t iteration)>;
using Objective = std::function<ObjectiveTerms(const GeneratorParams&, const Batch&)>;
using Evaluator = std::function<Tensor(const GeneratorParams&)>;

struct Loop {
  const TrainConfig& cfg;
  const StyleTarget& target;
  const FilterBank& bank;
  BatchSampler sample;
  Objective objective;
  Evaluator evaluate;
};

void evaluate_into(const Loop& loop, const GeneratorParams& g, double& diversity, double& style) {
  const auto images = loop.evaluate(g).detach();
  diversity = images.dim(0) >= 2 ? diversity_metric(images) : 0.0;
  const auto seen = loop.cfg.clamp_output ? clamp(images, 0.0, 1.0) : images;
  style = style_loss(seen, loop.target, loop.bank).item();
}

TrainResult run(const Loop& loop, GeneratorParams g, const IterationHook& hook) {
  const auto& cfg = loop.cfg;
  FiniteCheckScope finite(cfg.check_finite);
  TrainResult result;
  evaluate_into(loop, g, result.report.initial_diversity, result.report.initial_style);

  const auto params = g.trainable();
  const auto start = Clock::now();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    try {
      const auto batch = loop.sample(it);
      auto terms = loop.objective(g, batch);
      const double value = terms.objective.item();
      if (!std::isfinite(value)) throw NumericError("objective is not finite");
      zero_grads(params);
      terms.objective.backward();

      const bool logged = it % cfg.log_every == 0 || it + 1 == cfg.iterations;
      if (logged) {
        IterationRecord r;
        r.iteration = it;
        r.style = terms.style;
        r.content = terms.content;
        r.diversity = terms.diversity;
        r.objective = value;
        if (cfg.record_timing) {
          r.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        }
        result.report.records.push_back(r);
      }
      if (hook) {
        hook(IterationContext{it, &g, batch.content, batch.noise, batch.group_size,
                              logged ? &result.report.records.back() : nullptr});
      }
      sgd_step(params, cfg.learning_rate);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  if (cfg.record_timing) {
    result.report.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  }
  evaluate_into(loop, g, result.report.final_diversity, result.report.final_style);
  result.params = std::move(g);
  return result;
}

Tensor flat_canvas(std::size_t n, std::size_t extent) {
  return Tensor::full({n, 3, extent, extent}, 0.5);
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(alpha >= 0.0)) fail("alpha must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(eps > 0.0)) fail("eps must be > 0");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (lambda > 0.0 && batch_size < 2) fail("lambda > 0 requires batch_size >= 2");
  if (noise_per_content == 0 || batch_size % noise_per_content != 0) {
    fail("batch_size must be a multiple of noise_per_content");
  }
  if (log_every == 0) fail("log_every must be >= 1");
  if (out_size < 8 || out_size % 4 != 0) fail("out_size must be a multiple of 4 and >= 8");
}

TrainConfig TrainConfig::stylization_defaults() {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 2;
  cfg.grad_normalize = false;
  return cfg;
}

ObjectiveConfig TrainConfig::objective() const {
  ObjectiveConfig o;
  o.temperature = temperature;
  o.lambda = lambda;
  o.alpha = alpha;
  o.grad_normalize = grad_normalize;
  o.clamp_output = clamp_output;
  return o;
}

GeneratorDescriptor TrainConfig::texture_descriptor() const {
  GeneratorDescriptor d;
  d.kind = GeneratorKind::texture;
  d.norm = norm;
  d.eps = eps;
  d.noise_dim = noise_dim;
  d.hidden = hidden;
  d.width = width;
  d.out_size = out_size;
  return d;
}

GeneratorDescriptor TrainConfig::stylizer_descriptor() const {
  GeneratorDescriptor d;
  d.kind = GeneratorKind::stylizer;
  d.norm = norm;
  d.eps = eps;
  d.noise_channels = noise_channels;
  d.base_channels = base_channels;
  return d;
}

std::map<std::string, std::string> TrainConfig::to_fields() const {
  return {
      {"temperature", fmt(temperature)},
      {"lambda", fmt(lambda)},
      {"alpha", fmt(alpha)},
      {"batch_size", std::to_string(batch_size)},
      {"noise_per_content", std::to_string(noise_per_content)},
      {"learning_rate", fmt(learning_rate)},
      {"iterations", std::to_string(iterations)},
      {"seed", std::to_string(seed)},
      {"bank_seed", std::to_string(bank_seed)},
      {"norm", to_string(norm)},
      {"grad_normalize", grad_normalize ? "1" : "0"},
      {"clamp_output", clamp_output ? "1" : "0"},
      {"out_size", std::to_string(out_size)},
      {"log_every", std::to_string(log_every)},
      {"noise_dim", std::to_string(noise_dim)},
      {"hidden", std::to_string(hidden)},
      {"width", std::to_string(width)},
      {"noise_channels", std::to_string(noise_channels)},
      {"base_channels", std::to_string(base_channels)},
      {"eval_samples", std::to_string(eval_samples)},
      {"eps", fmt(eps)},
      {"check_finite", check_finite ? "1" : "0"},
      {"record_timing", record_timing ? "1" : "0"},
  };
}

void TrainConfig::set_field(const std::string& key, const std::string& value) {
  auto as_double = [&] {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      throw std::invalid_argument("config: '" + key + "' expects a number, got '" + value + "'");
    }
    return v;
  };
  auto as_size = [&] {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      if (!value.empty() && value[0] != '-') v = std::stoull(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      throw std::invalid_argument("config: '" + key + "' expects a non-negative integer, got '" +
                                  value + "'");
    }
    return static_cast<std::uint64_t>(v);
  };
  auto as_bool = [&] {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw std::invalid_argument("config: '" + key + "' expects 0/1, got '" + value + "'");
  };

  if (key == "temperature") temperature = as_double();
  else if (key == "lambda") lambda = as_double();
  else if (key == "alpha") alpha = as_double();
  else if (key == "batch_size") batch_size = as_size();
  else if (key == "noise_per_content") noise_per_content = as_size();
  else if (key == "learning_rate") learning_rate = as_double();
  else if (key == "iterations") iterations = as_size();
  else if (key == "seed") seed = as_size();
  else if (key == "bank_seed") bank_seed = as_size();
  else if (key == "norm") norm = parse_norm_kind(value);
  else if (key == "grad_normalize") grad_normalize = as_bool();
  else if (key == "clamp_output") clamp_output = as_bool();
  else if (key == "out_size") out_size = as_size();
  else if (key == "log_every") log_every = as_size();
  else if (key == "noise_dim") noise_dim = as_size();
  else if (key == "hidden") hidden = as_size();
  else if (key == "width") width = as_size();
  else if (key == "noise_channels") noise_channels = as_size();
  else if (key == "base_channels") base_channels = as_size();
  else if (key == "eval_samples") eval_samples = as_size();
  else if (key == "eps") eps = as_double();
  else if (key == "check_finite") check_finite = as_bool();
  else if (key == "record_timing") record_timing = as_bool();
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void zero_grads(std::span<const Tensor> params) {
  for (auto p : params) p.zero_grad();
}

void sgd_step(std::span<const Tensor> params, double lr) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto g = params[k].grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("sgd_step: non-finite gradient in parameter " + std::to_string(k) +
                           " at index " + std::to_string(i));
      }
    }
  }
  for (auto p : params) {
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto v = p.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

TrainResult train_texture(const TrainConfig& cfg, const Tensor& reference,
                          const IterationHook& hook) {
  cfg.validate();
  return train_texture(cfg, reference,
                       build_generator(cfg.texture_descriptor(), derive_seed(cfg.seed, streams::init)),
                       hook);
}

TrainResult train_texture(const TrainConfig& cfg, const Tensor& reference, GeneratorParams initial,
                          const IterationHook& hook) {
  cfg.validate();
  const FilterBank bank(cfg.bank_seed);
  const auto target = make_style_target(as_image_batch(reference), bank);
  const auto d = initial.descriptor;
  const auto extent = d.kind == GeneratorKind::texture ? d.out_size : cfg.out_size;
  const auto obj = cfg.objective();

  auto noise_rng = std::make_shared<Rng>(derive_seed(cfg.seed, streams::noise));
  Loop loop{cfg, target, bank,
            [&, noise_rng](std::size_t) {
              Batch b;
              b.noise = sample_noise(d, cfg.batch_size, *noise_rng, extent);
              if (d.kind == GeneratorKind::stylizer) b.content = flat_canvas(cfg.batch_size, extent);
              b.group_size = cfg.batch_size;
              return b;
            },
            [&](const GeneratorParams& g, const Batch& b) {
              const auto images = d.kind == GeneratorKind::texture
                                      ? forward_texture(g, b.noise)
                                      : forward_stylized(g, b.content, b.noise);
              return julesz_objective_from_images(images, target, bank, obj, b.group_size);
            },
            [&](const GeneratorParams& g) {
              return generate_samples(g, cfg.eval_samples, derive_seed(cfg.seed, streams::eval),
                                      extent, flat_canvas(1, extent));
            }};
  return run(loop, std::move(initial), hook);
}

TrainResult train_stylizer(const TrainConfig& cfg, const Tensor& reference,
                           std::span<const Tensor> corpus, const IterationHook& hook) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train_stylizer: empty content corpus");
  std::vector<Tensor> images;
  for (const auto& c : corpus) {
    auto img = as_image_batch(c);
    if (img.dim(2) != cfg.out_size || img.dim(3) != cfg.out_size) {
      throw ShapeError("train_stylizer: content image " + shape_str(img.shape()) +
                       " does not match out_size " + std::to_string(cfg.out_size));
    }
    images.push_back(img);
  }
  const FilterBank bank(cfg.bank_seed);
  const auto target = make_style_target(as_image_batch(reference), bank);
  const auto d = cfg.stylizer_descriptor();
  const auto obj = cfg.objective();
  const auto K = cfg.noise_per_content;
  const auto contents = cfg.batch_size / K;
  const auto extent = cfg.out_size;

  auto noise_rng = std::make_shared<Rng>(derive_seed(cfg.seed, streams::noise));
  auto data_rng = std::make_shared<Rng>(derive_seed(cfg.seed, streams::data));
  auto order = std::make_shared<std::vector<std::size_t>>();
  auto cursor = std::make_shared<std::size_t>(0);

  Loop loop{cfg, target, bank,
            [&, noise_rng, data_rng, order, cursor](std::size_t) {
              std::vector<double> content;
              for (std::size_t m = 0; m < contents; ++m) {
                if (*cursor == order->size()) {
                  order->resize(images.size());
                  std::iota(order->begin(), order->end(), 0);
                  std::shuffle(order->begin(), order->end(), *data_rng);
                  *cursor = 0;
                }
                append_copies(content, images[(*order)[(*cursor)++]], K);
              }
              Batch b;
              b.content = Tensor({cfg.batch_size, 3, extent, extent}, std::move(content));
              b.noise = sample_noise(d, cfg.batch_size, *noise_rng, extent);
              b.group_size = K;
              return b;
            },
            [&](const GeneratorParams& g, const Batch& b) {
              return stylization_objective(
                  b.content, b.noise,
                  [&g](const Tensor& x0, const Tensor& z) { return forward_stylized(g, x0, z); },
                  target, bank, obj, b.group_size);
            },
            [&](const GeneratorParams& g) {
              return generate_samples(g, cfg.eval_samples, derive_seed(cfg.seed, streams::eval),
                                      extent, images.front());
            }};
  return run(loop, build_generator(d, derive_seed(cfg.seed, streams::init)), hook);
}

DirectResult optimize_direct(const TrainConfig& cfg, const Tensor& reference,
                             const std::optional<Tensor>& init,
                             const std::optional<Tensor>& content) {
  cfg.validate();
  const auto ref = as_image_batch(reference);
  const FilterBank bank(cfg.bank_seed);
  const auto target = make_style_target(ref, bank);
  FiniteCheckScope finite(cfg.check_finite);

  Tensor x;
  if (init) {
    x = as_image_batch(*init).detach(true);
  } else {
    Rng rng(derive_seed(cfg.seed, streams::pixels));
    x = normal_tensor(ref.shape(), rng, 0.25, 0.5, true);
  }
  std::optional<Tensor> x0;
  if (content) {
    x0 = as_image_batch(*content);
    if (x0->shape() != x.shape()) throw ShapeError("optimize_direct: content/init shape mismatch");
  }

  DirectResult result;
  const auto start = Clock::now();
  const std::vector<Tensor> params{x};
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    try {
      const auto seen = cfg.clamp_output ? clamp(x, 0.0, 1.0) : x;
      const auto style = style_loss(seen, target, bank);
      auto objective = style / cfg.temperature;
      double content_value = 0.0;
      if (x0 && cfg.alpha > 0.0) {
        const auto c = content_loss(seen, *x0, bank);
        content_value = c.item();
        objective = objective + c * cfg.alpha;
      }
      const double value = objective.item();
      zero_grads(params);
      objective.backward();
      if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
        IterationRecord r{it, style.item(), content_value, 0.0, value, 0.0};
        if (cfg.record_timing) {
          r.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        }
        result.report.records.push_back(r);
      }
      sgd_step(params, cfg.learning_rate);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  result.report.final_style =
      style_loss(cfg.clamp_output ? clamp(x, 0.0, 1.0) : x, target, bank).item();
  result.image = x.detach();
  return result;
}

double diversity_metric(const Tensor& samples) {
  if (samples.rank() < 1 || samples.dim(0) < 2) {
    throw std::invalid_argument("diversity_metric: need at least 2 samples");
  }
  const auto N = samples.dim(0);
  const auto D = samples.size() / N;
  const auto v = samples.values();
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = i + 1; j < N; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        const double d = v[i * D + k] - v[j * D + k];
        acc += d * d;
      }
      total += std::sqrt(acc);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs) / std::sqrt(static_cast<double>(D));
}

double patch_brightness_variance(const Tensor& images, std::size_t tile) {
  const auto batch = images.rank() == 3 ? as_image_batch(images) : images;
  if (batch.rank() != 4 || tile == 0 || batch.dim(2) % tile != 0 || batch.dim(3) % tile != 0) {
    throw ShapeError("patch_brightness_variance: image extent must be a multiple of the tile");
  }
  const auto N = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
  const auto v = batch.values();
  const auto rows = H / tile, cols = W / tile;
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    std::vector<double> means;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < C; ++ch) {
          for (std::size_t i = 0; i < tile; ++i) {
            for (std::size_t j = 0; j < tile; ++j) {
              acc += v[((n * C + ch) * H + r * tile + i) * W + c * tile + j];
            }
          }
        }
        means.push_back(acc / static_cast<double>(C * tile * tile));
      }
    }
    const double mu = std::accumulate(means.begin(), means.end(), 0.0) /
                      static_cast<double>(means.size());
    double var = 0.0;
    for (double m : means) var += (m - mu) * (m - mu);
    total += var / static_cast<double>(means.size());
  }
  return total / static_cast<double>(N);
}

Tensor generate_samples(const GeneratorParams& g, std::size_t n, std::uint64_t seed,
                        std::size_t out_size, const Tensor& content) {
  Rng rng(seed);
  const auto& d = g.descriptor;
  if (d.kind == GeneratorKind::texture) return forward_texture(g, sample_noise(d, n, rng)).detach();
  if (!content.defined()) throw std::invalid_argument("generate_samples: stylizer needs a content image");
  const auto x0 = as_image_batch(content);
  if (x0.dim(2) != out_size || x0.dim(3) != out_size) {
    throw ShapeError("generate_samples: content extent does not match " + std::to_string(out_size));
  }
  std::vector<double> values;
  append_copies(values, x0, n);
  const Tensor batch({n, 3, out_size, out_size}, std::move(values));
  return forward_stylized(g, batch, sample_noise(d, n, rng, out_size)).detach();
}

}  // namespace julesz
