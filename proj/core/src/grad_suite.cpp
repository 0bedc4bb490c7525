#include "julesz/grad_suite.hpp"

#include <algorithm>
#include <stdexcept>

#include "julesz/filter_bank.hpp"
#include "julesz/generators.hpp"
#include "julesz/julesz_loss.hpp"
#include "julesz/layers.hpp"
#include "julesz/ops.hpp"
#include "julesz/random.hpp"

namespace julesz {

namespace {

Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Contracts y with fixed random weights so every output element matters.
Tensor probe(const Tensor& y, const Tensor& weights) { return sum(y * weights); }

}  // namespace

std::vector<GradCase> gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  auto normal = [&](Shape s) { return normal_tensor(std::move(s), rng); };
  auto pixels = [&](Shape s) { return uniform_tensor(std::move(s), rng, 0.05, 0.95); };

  std::vector<GradCase> cases;

  {
    const auto r = normal({2, 4, 4, 4});
    cases.push_back({"conv2d",
                     [r](const std::vector<Tensor>& in) {
                       return probe(conv2d(in[0], {in[1], in[2]}, 2, 1), r);
                     },
                     {normal({2, 3, 7, 7}), normal({4, 3, 3, 3}), normal({4})}});
  }
  {
    const auto r = normal({2, 3, 8, 8});
    cases.push_back({"conv_transpose2d",
                     [r](const std::vector<Tensor>& in) {
                       return probe(conv_transpose2d(in[0], {in[1], in[2]}, 2, 1), r);
                     },
                     {normal({2, 4, 4, 4}), normal({4, 3, 4, 4}), normal({3})}});
  }
  {
    const auto r = normal({3, 4});
    cases.push_back({"linear",
                     [r](const std::vector<Tensor>& in) {
                       return probe(linear(in[0], {in[1], in[2]}), r);
                     },
                     {normal({3, 5}), normal({4, 5}), normal({4})}});
  }
  {
    const auto r = normal({2, 4, 8, 8});
    cases.push_back({"instance_norm",
                     [r](const std::vector<Tensor>& in) { return probe(instance_norm(in[0]), r); },
                     {normal({2, 4, 8, 8})}});
  }
  {
    const auto r = normal({2, 4, 8, 8});
    cases.push_back({"batch_norm",
                     [r](const std::vector<Tensor>& in) { return probe(batch_norm(in[0]), r); },
                     {normal({2, 4, 8, 8})}});
  }
  {
    const auto r = normal({2, 4, 8, 8});
    cases.push_back({"scale_bias",
                     [r](const std::vector<Tensor>& in) {
                       return probe(scale_bias(in[0], in[1], in[2]), r);
                     },
                     {normal({2, 4, 8, 8}), normal({4}), normal({4})}});
  }
  {
    const auto r = normal({2, 4, 4});
    cases.push_back({"gram",
                     [r](const std::vector<Tensor>& in) { return probe(gram(in[0]), r); },
                     {normal({2, 4, 8, 8})}});
  }

  const auto bank = std::make_shared<FilterBank>();
  const auto target = std::make_shared<StyleTarget>(make_style_target(pixels({1, 3, 8, 8}), *bank));
  cases.push_back({"style_loss",
                   [bank, target](const std::vector<Tensor>& in) {
                     return style_loss(in[0], *target, *bank);
                   },
                   {pixels({2, 3, 8, 8})}});
  {
    const auto x0 = pixels({2, 3, 8, 8});
    cases.push_back({"content_loss",
                     [bank, x0](const std::vector<Tensor>& in) {
                       return content_loss(in[0], x0, *bank);
                     },
                     {pixels({2, 3, 8, 8})}});
  }
  cases.push_back({"entropy_estimate",
                   [](const std::vector<Tensor>& in) { return entropy_estimate(in[0]).value; },
                   {pixels({4, 3, 4, 4})}});

  ObjectiveConfig diverse;
  diverse.temperature = 10.0;
  diverse.lambda = 0.5;
  cases.push_back({"julesz_objective",
                   [bank, target, diverse](const std::vector<Tensor>& in) {
                     return julesz_objective(in[0], [](const Tensor& z) { return z; }, *target,
                                             *bank, diverse)
                         .objective;
                   },
                   {pixels({2, 3, 8, 8})}});
  {
    const auto x0 = pixels({2, 3, 8, 8});
    ObjectiveConfig cfg = diverse;
    cfg.alpha = 2.0;
    cases.push_back({"stylization_objective",
                     [bank, target, cfg, x0](const std::vector<Tensor>& in) {
                       return stylization_objective(
                                  x0, in[0],
                                  [](const Tensor& a, const Tensor& z) { return a + z; }, *target,
                                  *bank, cfg, 2)
                           .objective;
                     },
                     {uniform_tensor({2, 3, 8, 8}, rng, -0.2, 0.2)}});
  }

  // End to end through the generators: gradients with respect to every
  // parameter of tiny texture and stylizer networks.
  for (const auto norm : {NormKind::instance, NormKind::batch}) {
    auto g = build_texture_net(4, 8, norm, seed + 11, 8, 4);
    const auto z = normal({2, 4});
    std::vector<Tensor> params = g.trainable();
    const auto descriptor = g.descriptor;
    std::vector<std::string> names;
    for (const auto& t : g.tensors) names.push_back(t.name);
    cases.push_back(
        {std::string("texture_net_") + (norm == NormKind::instance ? "in" : "bn"),
         [bank, target, diverse, z, descriptor, names](const std::vector<Tensor>& in) {
           GeneratorParams p{descriptor, {}};
           for (std::size_t i = 0; i < in.size(); ++i) p.tensors.push_back({names[i], in[i]});
           return julesz_objective(z, [&p](const Tensor& noise) { return forward_texture(p, noise); },
                                   *target, *bank, diverse)
               .objective;
         },
         params});
  }
  {
    auto g = build_stylizer(NormKind::instance, 1, seed + 13, 2, 1);
    const auto x0 = pixels({2, 3, 8, 8});
    const auto z = normal({2, 1, 8, 8});
    ObjectiveConfig cfg = diverse;
    cfg.alpha = 1.0;
    const auto descriptor = g.descriptor;
    std::vector<std::string> names;
    for (const auto& t : g.tensors) names.push_back(t.name);
    cases.push_back(
        {"stylizer_in",
         [bank, target, cfg, x0, z, descriptor, names](const std::vector<Tensor>& in) {
           GeneratorParams p{descriptor, {}};
           for (std::size_t i = 0; i < in.size(); ++i) p.tensors.push_back({names[i], in[i]});
           return stylization_objective(
                      x0, z,
                      [&p](const Tensor& a, const Tensor& noise) { return forward_stylized(p, a, noise); },
                      *target, *bank, cfg, 2)
               .objective;
         },
         g.trainable()});
  }
  return cases;
}

std::vector<GradCheckReport> run_gradient_suite(const GradSuiteOptions& options,
                                                std::uint64_t seed) {
  auto cases = gradient_suite(seed);
  for (const auto& name : options.only) {
    const bool known = std::any_of(cases.begin(), cases.end(),
                                   [&](const GradCase& c) { return c.name == name; });
    if (!known) throw std::invalid_argument("unknown gradient check '" + name + "'");
  }
  std::vector<GradCheckReport> reports;
  for (const auto& c : cases) {
    if (!options.only.empty() &&
        std::find(options.only.begin(), options.only.end(), c.name) == options.only.end()) {
      continue;
    }
    auto r = grad_check(c.f, c.inputs, options.step, options.tolerance, options.floor);
    r.name = c.name;
    reports.push_back(r);
  }
  return reports;
}

}  // namespace julesz
