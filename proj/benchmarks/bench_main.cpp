#include <benchmark/benchmark.h>

#include "julesz/filter_bank.hpp"
#include "julesz/fixtures.hpp"
#include "julesz/generators.hpp"
#include "julesz/julesz_loss.hpp"
#include "julesz/layers.hpp"
#include "julesz/ops.hpp"
#include "julesz/random.hpp"

using namespace julesz;

namespace {

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(0);
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = normal_tensor({4, c, 32, 32}, rng);
  const auto w = normal_tensor({c, c, 3, 3}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, {w, {}}, 1, 1));
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(0);
  const auto c = static_cast<std::size_t>(state.range(0));
  auto x = normal_tensor({4, c, 32, 32}, rng, 1.0, 0.0, true);
  auto w = normal_tensor({c, c, 3, 3}, rng, 1.0, 0.0, true);
  for (auto _ : state) {
    sum(conv2d(x, {w, {}}, 1, 1)).backward();
    x.zero_grad();
    w.zero_grad();
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(8)->Arg(16);

void BM_Gram(benchmark::State& state) {
  Rng rng(0);
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto a = normal_tensor({4, c, 32, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(gram(a));
}
BENCHMARK(BM_Gram)->Arg(8)->Arg(16)->Arg(32);

void BM_NearestNeighbours(benchmark::State& state) {
  Rng rng(0);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto b = normal_tensor({n, 3, 32, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn_distances(b));
}
BENCHMARK(BM_NearestNeighbours)->Arg(4)->Arg(16)->Arg(64);

void BM_TextureObjectiveStep(benchmark::State& state) {
  const FilterBank bank;
  const auto target = make_style_target(fixtures::checker_noise(), bank);
  const auto g = build_texture_net(32, 32, NormKind::instance, 0);
  Rng rng(1);
  ObjectiveConfig cfg;
  cfg.lambda = 0.01;
  cfg.grad_normalize = true;
  const auto batch = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    const auto z = sample_noise(g.descriptor, batch, rng);
    auto terms = julesz_objective(z, [&](const Tensor& t) { return forward_texture(g, t); }, target, bank, cfg);
    terms.objective.backward();
  }
}
BENCHMARK(BM_TextureObjectiveStep)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
