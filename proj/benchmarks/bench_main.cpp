#include "benchmark/benchmark.h"

#include "lorwave/carleman.hpp"
#include "lorwave/hyperquadric.hpp"
#include "lorwave/wave.hpp"

using namespace lorwave;

namespace {

ModelPtr warped_model() {
  return make_model("warped", {{"dim", 3.0}, {"delta", 0.05}, {"k", 1.0}});
}

void BM_riemann_fd(benchmark::State& state) {
  const auto m = warped_model();
  const Vec4 x = {0.3, 0.7, -0.2, 0};
  for (auto _ : state) benchmark::DoNotOptimize(m->riemann(x));
}
BENCHMARK(BM_riemann_fd);

void BM_log_map(benchmark::State& state) {
  const auto m = warped_model();
  const Vec4 p = {0, 0, 0, 0};
  const Vec4 q = {0.4, 0.9, 0.3, 0};
  for (auto _ : state) benchmark::DoNotOptimize(log_map(*m, p, q, 1e-11));
}
BENCHMARK(BM_log_map);

void BM_radial_transport(benchmark::State& state) {
  const auto m = warped_model();
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  Direction omega{0.4, Vec4{0.6, 0.8, 0, 0}};
  const double radii[1] = {0.9};
  for (auto _ : state)
    benchmark::DoNotOptimize(geo.ray(omega, std::span<const double>(radii, 1)));
}
BENCHMARK(BM_radial_transport);

void BM_pc_assemble(benchmark::State& state) {
  const auto m = warped_model();
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  const double radii[1] = {0.9};
  const GeomPoint gp = geo.ray(Direction{0.4, Vec4{0.6, 0.8, 0, 0}},
                               std::span<const double>(radii, 1))[0];
  const PcParams pc{0.05, 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(pc_assemble(gp, pc));
}
BENCHMARK(BM_pc_assemble);

void BM_wave_sweep(benchmark::State& state) {
  WaveConfig wc;
  wc.model = make_model("minkowski", {{"dim", 2.0}});
  wc.nx[0] = int(state.range(0));
  wc.nt = 2 * int(state.range(0));
  wc.tau_minus = -0.5;
  wc.tau_plus = 0.5;
  wc.carleman.a = 4.0;
  const ControlProblem pb = build_problem(wc);
  const int nn = pb.nx[0];
  std::vector<double> y0(nn, 0.0), y1(nn, 0.0);
  for (int j = 1; j < nn - 1; ++j) y0[j] = std::sin(M_PI * (j * pb.dx[0]));
  BoundaryControl F;
  F.n_boundary = pb.n_boundary;
  F.nt_levels = pb.nt + 1;
  F.values.assign(std::size_t(pb.n_boundary) * (pb.nt + 1), 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(forward_solve(pb, F, y0, y1));
}
BENCHMARK(BM_wave_sweep)->Arg(128)->Arg(256);

void BM_hum_gramian(benchmark::State& state) {
  WaveConfig wc;
  wc.model = make_model("minkowski", {{"dim", 2.0}});
  wc.nx[0] = 128;
  wc.nt = 256;
  wc.tau_minus = -0.5;
  wc.tau_plus = 0.5;
  wc.carleman.a = 4.0;
  const ControlProblem pb = build_problem(wc);
  const int nn = pb.nx[0];
  TerminalPair mu;
  mu.pos.assign(nn, 0.0);
  mu.vel.assign(nn, 0.0);
  for (int j = 1; j < nn - 1; ++j) mu.pos[j] = std::sin(M_PI * j * pb.dx[0]);
  for (auto _ : state) benchmark::DoNotOptimize(hum_gramian_apply(pb, mu));
}
BENCHMARK(BM_hum_gramian);

}  // namespace

BENCHMARK_MAIN();
