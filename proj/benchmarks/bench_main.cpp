#include <random>

#include <benchmark/benchmark.h>

#include "pekar/coulomb.hpp"
#include "pekar/gibbs_sampler.hpp"
#include "pekar/pekar_sde.hpp"
#include "pekar/pekar_solver.hpp"

using namespace pekar;

namespace {

const PekarSolution& solution() {
  static const PekarSolution sol = scf_iterate(ScfConfig{});
  return sol;
}

}  // namespace

static void bm_hamiltonian(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto path = sample_wiener(8.0, 8.0 / static_cast<double>(m), 1);
  const auto mu = occupation_of(path);
  for (auto _ : state) benchmark::DoNotOptimize(hamiltonian(mu));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_hamiltonian)->RangeMultiplier(2)->Range(128, 2048)->Complexity(benchmark::oNSquared);

static void bm_kernel_sum(benchmark::State& state) {
  const auto path = sample_wiener(8.0, 8.0 / static_cast<double>(state.range(0)), 2);
  const PointColumns q(midpoints(path));
  const Vec3 p{0.3, -0.1, 0.2};
  for (auto _ : state) benchmark::DoNotOptimize(kernel_sum(q, 0, q.size(), p, 1e-4));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_kernel_sum)->Arg(512)->Arg(4096);

static void bm_mh_step(benchmark::State& state) {
  ChainConfig c;
  c.t = 8.0;
  c.h = 8.0 / static_cast<double>(state.range(0));
  c.record_shift = false;
  ChainState chain(sample_wiener(c.t, c.h, 3), 1.0, c.softening());
  std::mt19937_64 rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(mh_step(chain, c, rng));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_mh_step)->Arg(128)->Arg(512);

static void bm_em_step(benchmark::State& state) {
  const PekarTilt tilt(solution());
  std::mt19937_64 rng(5);
  Vec3 x{0.5, 0.2, -0.1};
  for (auto _ : state) {
    x = em_step(x, tilt, 1e-3, rng);
    benchmark::DoNotOptimize(x);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_em_step);

static void bm_scf(benchmark::State& state) {
  ScfConfig c;
  c.grid = make_grid(20.0, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scf_iterate(c).rho);
}
BENCHMARK(bm_scf)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
