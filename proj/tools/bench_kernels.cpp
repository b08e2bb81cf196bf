// Kernel benchmark: OpenMP-parallel paths against their serial references
// (matmul, mean-field transition, batched policy inference). Also verifies
// that both paths agree to close to machine precision.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "meanfleet/kernels.hpp"
#include "meanfleet/mfcore.hpp"
#include "meanfleet/policy.hpp"
#include "meanfleet/scenario.hpp"

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_ms(int reps, F&& fn) {
    fn();  // warm up
    const double t0 = now_ms();
    for (int r = 0; r < reps; ++r) fn();
    return (now_ms() - t0) / reps;
}

void bench_matmul() {
    const int m = 2048, k = 1253, n = 512;
    std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n),
        c1(static_cast<size_t>(m) * n), c2(static_cast<size_t>(m) * n);
    mf::Rng rng(1);
    for (double& v : a) v = rng.uniform(-1, 1);
    for (double& v : b) v = rng.uniform(-1, 1);

    const double serial =
        time_ms(3, [&] { mf::kernels::matmul_nn(a.data(), b.data(), c1.data(), m, k, n, false, false); });
    const double parallel =
        time_ms(3, [&] { mf::kernels::matmul_nn(a.data(), b.data(), c2.data(), m, k, n, false, true); });
    double max_diff = 0.0;
    for (size_t i = 0; i < c1.size(); ++i) max_diff = std::max(max_diff, std::abs(c1[i] - c2[i]));
    const double gflop = 2.0 * m * k * n / 1e9;
    std::printf("matmul %dx%dx%d        serial %8.2f ms (%.2f GF/s)   omp %8.2f ms (%.2f GF/s)   x%.2f   max|diff| %.1e\n",
                m, k, n, serial, gflop / serial * 1e3, parallel, gflop / parallel * 1e3,
                serial / parallel, max_diff);
}

void bench_mean_field_step() {
    const mf::CityGrid grid = mf::CityGrid::square(25);
    const int n = grid.n_zones();
    mf::ScenarioSpec spec = mf::ScenarioSpec::desk_city();
    spec.grid_m = 25;
    spec.operational_mask.assign(static_cast<size_t>(n), 1);
    spec.od_attraction.clear();
    const mf::DemandPattern demand = mf::build_demand(spec, grid);
    const mf::NoiseModel noise;
    const mf::TransitionCache cache(grid, noise);

    mf::Rng rng(2);
    mf::GridMeasure mu(n);
    for (int i = 0; i < n; ++i) mu[i] = rng.uniform(0, 1);
    mu.normalize();
    std::vector<double> p(static_cast<size_t>(n)), ux(static_cast<size_t>(n)),
        uy(static_cast<size_t>(n)), m(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        p[static_cast<size_t>(i)] = rng.uniform(0, 1);
        ux[static_cast<size_t>(i)] = rng.uniform(-0.3, 0.3);
        uy[static_cast<size_t>(i)] = rng.uniform(-0.3, 0.3);
        m[static_cast<size_t>(i)] = rng.uniform(0, 1);
    }

    mf::GridMeasure out_serial(n), out_omp(n);
    const double serial = time_ms(10, [&] {
        out_serial = mf::mean_field_step_serial(grid, mu, demand.od[0], p, ux, uy, m, cache);
    });
    const double parallel = time_ms(10, [&] {
        out_omp = mf::mean_field_step(grid, mu, demand.od[0], p, ux, uy, m, cache);
    });
    double max_diff = 0.0;
    for (int i = 0; i < n; ++i) max_diff = std::max(max_diff, std::abs(out_serial[i] - out_omp[i]));
    std::printf("mean_field_step M=25        serial %8.2f ms                 omp %8.2f ms                 x%.2f   max|diff| %.1e\n",
                serial, parallel, serial / parallel, max_diff);
}

void bench_policy_infer() {
    const int M = 25;
    mf::Rng rng(3);
    mf::PolicyNetConfig pc;
    pc.grid_m = M;
    pc.horizon = 18;
    mf::PolicyNet policy(pc, rng);

    const mf::CityGrid grid = mf::CityGrid::square(M);
    mf::GridMeasure mu(grid.n_zones());
    for (int i = 0; i < grid.n_zones(); ++i) mu[i] = rng.uniform(0, 1);
    mu.normalize();
    mf::GridMeasure deltabar = mu;

    std::vector<mf::Vec2> positions(18000);
    for (auto& s : positions) s = {rng.uniform(0, 1), rng.uniform(0, 1)};

    const double serial =
        time_ms(1, [&] { mf::policy_infer(policy, 3, mu, deltabar, positions, false); });
    const double parallel =
        time_ms(1, [&] { mf::policy_infer(policy, 3, mu, deltabar, positions, true); });
    std::printf("policy_infer 18k @ M=25     serial %8.2f ms                 omp %8.2f ms                 x%.2f\n",
                serial, parallel, serial / parallel);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled; both paths run serially\n");
#endif
    bench_matmul();
    bench_mean_field_step();
    bench_policy_infer();
    return 0;
}
