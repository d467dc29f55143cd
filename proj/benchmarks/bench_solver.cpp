#include <benchmark/benchmark.h>

#include "gsc/data.hpp"
#include "gsc/rng.hpp"
#include "gsc/solver.hpp"

namespace {

using namespace gsc;

struct Fixture {
  PackingResult packing;
  RegularizerSpec spec;
  Eigen::VectorXd x;

  Fixture()
      : packing(build_low_coherence_dictionary(100, 300, GroupPartition::contiguous(300, 4), 9,
                                               0.0, 120)),
        spec(RegularizerSpec::uniform(GroupPartition::contiguous(300, 4), GroupNorm::l2(),
                                      0.45)),
        x(Eigen::VectorXd::Zero(100)) {
    Rng rng(3);
    Eigen::VectorXd code = Eigen::VectorXd::Zero(300);
    for (int g : rng.sample_without_replacement(75, 8)) {
      for (int idx = 4 * g; idx < 4 * g + 4; ++idx) code[idx] = rng.uniform(1.0, 2.0);
    }
    x = packing.dictionary.matrix() * code + 0.02 * rng.normal_vector(100);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void bm_prox_step(benchmark::State& state) {
  auto& f = fixture();
  Rng rng(5);
  const Eigen::VectorXd v = rng.normal_vector(300);
  for (auto _ : state) {
    benchmark::DoNotOptimize(prox_step(v, f.spec, 0.5));
  }
}
BENCHMARK(bm_prox_step);

void bm_solve_gbp(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_gbp(f.x, f.packing.dictionary, f.spec));
  }
}
BENCHMARK(bm_solve_gbp);

void bm_mutual_coherence(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(mutual_coherence(f.packing.dictionary));
  }
}
BENCHMARK(bm_mutual_coherence);

void bm_optimality_residual(benchmark::State& state) {
  auto& f = fixture();
  const SolveResult r = solve_gbp(f.x, f.packing.dictionary, f.spec);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        optimality_residual(r.code, f.x, f.packing.dictionary, f.spec));
  }
}
BENCHMARK(bm_optimality_residual);

}  // namespace

BENCHMARK_MAIN();
