#include "meanfleet/mfcore.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mf {

namespace {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

AxisWeights axis_cdf_weights(double center, double sigma, int M) {
    AxisWeights out;
    out.w.assign(static_cast<size_t>(M), 0.0);
    center = clamp01(center);
    if (sigma <= 0.0) {
        int idx = static_cast<int>(center * M);
        if (idx >= M) idx = M - 1;
        out.w[static_cast<size_t>(idx)] = 1.0;
        out.total = 1.0;
        return out;
    }
    const double inv = 1.0 / sigma;
    double prev = normal_cdf((0.0 - center) * inv);
    for (int k = 0; k < M; ++k) {
        const double next = normal_cdf((static_cast<double>(k + 1) / M - center) * inv);
        out.w[static_cast<size_t>(k)] = next - prev;
        prev = next;
    }
    for (double v : out.w) out.total += v;
    return out;
}

GridMeasure gaussian_kernel(Vec2 center, double sigma, const CityGrid& grid) {
    const int M = grid.M();
    const AxisWeights ax = axis_cdf_weights(center.x, sigma, M);
    const AxisWeights ay = axis_cdf_weights(center.y, sigma, M);
    GridMeasure out(grid.n_zones());
    const double norm = 1.0 / (ax.total * ay.total);
    for (int iy = 0; iy < M; ++iy) {
        const double wy = ay.w[static_cast<size_t>(iy)] * norm;
        if (wy == 0.0) continue;
        double* row = out.mass.data() + static_cast<size_t>(iy) * M;
        for (int ix = 0; ix < M; ++ix) row[ix] = ax.w[static_cast<size_t>(ix)] * wy;
    }
    return out;
}

MeanFieldDecomposition decompose(const GridMeasure& mu, std::span<const double> p,
                                 std::span<const double> m) {
    const size_t n = mu.mass.size();
    if (p.size() != n || m.size() != n)
        throw std::invalid_argument("decompose: per-zone array size mismatch");
    constexpr double tol = 1e-9;
    MeanFieldDecomposition d;
    d.mu_r = GridMeasure(static_cast<int>(n));
    d.mu_m = GridMeasure(static_cast<int>(n));
    d.mu_c = GridMeasure(static_cast<int>(n));
    for (size_t i = 0; i < n; ++i) {
        if (p[i] < -tol || p[i] > 1.0 + tol || m[i] < -tol || m[i] > 1.0 + tol)
            throw std::invalid_argument("decompose: probability outside [0,1]");
        const double pi = clamp01(p[i]);
        const double mi = clamp01(m[i]);
        d.mu_r.mass[i] = pi * mu.mass[i];
        d.mu_m.mass[i] = mi * (1.0 - pi) * mu.mass[i];
        d.mu_c.mass[i] = (1.0 - mi) * (1.0 - pi) * mu.mass[i];
    }
    return d;
}

TransitionCache::TransitionCache(const CityGrid& grid, const NoiseModel& noise) : noise_(noise) {
    const int n = grid.n_zones();
    cruise_.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        const GridMeasure k = gaussian_kernel(grid.center(i), noise.sigma_c, grid);
        std::memcpy(cruise_.data() + static_cast<size_t>(i) * n, k.mass.data(),
                    sizeof(double) * static_cast<size_t>(n));
    }
    if (noise.sigma_m > 0.0) {
        has_smear_ = true;
        smear_.assign(static_cast<size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i) {
            const GridMeasure k = gaussian_kernel(grid.center(i), noise.sigma_m, grid);
            std::memcpy(smear_.data() + static_cast<size_t>(i) * n, k.mass.data(),
                        sizeof(double) * static_cast<size_t>(n));
        }
    }
}

namespace {

// Shared body; `parallel` picks the OpenMP path.
GridMeasure mean_field_step_impl(const CityGrid& grid, const GridMeasure& mu,
                                 const std::vector<double>& od_kernel, std::span<const double> p,
                                 std::span<const double> ux, std::span<const double> uy,
                                 std::span<const double> m, const TransitionCache& cache,
                                 bool parallel) {
    const int n = grid.n_zones();
    const int M = grid.M();
    if (static_cast<int>(mu.mass.size()) != n)
        throw std::invalid_argument("mean_field_step: measure size mismatch");
    if (od_kernel.size() != static_cast<size_t>(n) * n)
        throw std::invalid_argument("mean_field_step: OD kernel size mismatch");

    // Branch weights.
    std::vector<double> w_r(static_cast<size_t>(n)), w_m(static_cast<size_t>(n)),
        w_c(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double pi = clamp01(p[static_cast<size_t>(i)]);
        const double mi = clamp01(m[static_cast<size_t>(i)]);
        w_r[static_cast<size_t>(i)] = pi * mu[i];
        w_m[static_cast<size_t>(i)] = mi * (1.0 - pi) * mu[i];
        w_c[static_cast<size_t>(i)] = (1.0 - mi) * (1.0 - pi) * mu[i];
    }

    GridMeasure out(n);
    double* acc = out.mass.data();

    // Matched: v = Phi^T w_m, optionally smeared by the sigma_m kernel.
    std::vector<double> v(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const double wi = w_m[static_cast<size_t>(i)];
        if (wi == 0.0) continue;
        const double* row = od_kernel.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) v[static_cast<size_t>(j)] += wi * row[j];
    }
    if (const std::vector<double>* smear = cache.matched_smear()) {
        for (int j = 0; j < n; ++j) {
            const double vj = v[static_cast<size_t>(j)];
            if (vj == 0.0) continue;
            const double* row = smear->data() + static_cast<size_t>(j) * n;
            for (int k = 0; k < n; ++k) acc[k] += vj * row[k];
        }
    } else {
        for (int j = 0; j < n; ++j) acc[j] += v[static_cast<size_t>(j)];
    }

    // Cruising: precomputed kernel rows.
    {
        const std::vector<double>& cr = cache.cruise();
        for (int i = 0; i < n; ++i) {
            const double wi = w_c[static_cast<size_t>(i)];
            if (wi == 0.0) continue;
            const double* row = cr.data() + static_cast<size_t>(i) * n;
            for (int k = 0; k < n; ++k) acc[k] += wi * row[k];
        }
    }

    // Repositioning: per-zone kernel at the shifted center, built separably.
    const double sigma_r = cache.noise().sigma_r;
    auto repo_rows = [&](int iy_begin, int iy_end, double* dst) {
        for (int zy = iy_begin; zy < iy_end; ++zy) {
            for (int zx = 0; zx < M; ++zx) {
                const int i = zy * M + zx;
                const double wi = w_r[static_cast<size_t>(i)];
                if (wi == 0.0) continue;
                const Vec2 c = grid.center(i);
                const AxisWeights ax =
                    axis_cdf_weights(c.x + ux[static_cast<size_t>(i)], sigma_r, M);
                const AxisWeights ay =
                    axis_cdf_weights(c.y + uy[static_cast<size_t>(i)], sigma_r, M);
                const double scale = wi / (ax.total * ay.total);
                for (int iy = 0; iy < M; ++iy) {
                    const double wy = ay.w[static_cast<size_t>(iy)] * scale;
                    if (wy == 0.0) continue;
                    double* row = dst + static_cast<size_t>(iy) * M;
                    for (int ix = 0; ix < M; ++ix) row[ix] += ax.w[static_cast<size_t>(ix)] * wy;
                }
            }
        }
    };

#ifdef _OPENMP
    if (parallel) {
        const int threads = omp_get_max_threads();
        if (threads > 1) {
            std::vector<std::vector<double>> local(
                static_cast<size_t>(threads), std::vector<double>(static_cast<size_t>(n), 0.0));
#pragma omp parallel
            {
                const int tid = omp_get_thread_num();
#pragma omp for schedule(static)
                for (int zy = 0; zy < M; ++zy)
                    repo_rows(zy, zy + 1, local[static_cast<size_t>(tid)].data());
            }
            for (const auto& buf : local)
                for (int k = 0; k < n; ++k) acc[k] += buf[static_cast<size_t>(k)];
            return out;
        }
    }
#else
    (void)parallel;
#endif
    repo_rows(0, M, acc);
    return out;
}

}  // namespace

GridMeasure mean_field_step(const CityGrid& grid, const GridMeasure& mu,
                            const std::vector<double>& od_kernel, std::span<const double> p,
                            std::span<const double> ux, std::span<const double> uy,
                            std::span<const double> m, const TransitionCache& cache) {
    return mean_field_step_impl(grid, mu, od_kernel, p, ux, uy, m, cache, true);
}

GridMeasure mean_field_step_serial(const CityGrid& grid, const GridMeasure& mu,
                                   const std::vector<double>& od_kernel, std::span<const double> p,
                                   std::span<const double> ux, std::span<const double> uy,
                                   std::span<const double> m, const TransitionCache& cache) {
    return mean_field_step_impl(grid, mu, od_kernel, p, ux, uy, m, cache, false);
}

GridMeasure mean_field_step(const CityGrid& grid, const GridMeasure& mu,
                            const std::vector<double>& od_kernel, std::span<const Action> actions,
                            std::span<const double> m, const TransitionCache& cache) {
    const size_t n = actions.size();
    std::vector<double> p(n), ux(n), uy(n);
    for (size_t i = 0; i < n; ++i) {
        p[i] = actions[i].p;
        ux[i] = actions[i].u.x;
        uy[i] = actions[i].u.y;
    }
    return mean_field_step(grid, mu, od_kernel, p, ux, uy, m, cache);
}

VehicleStep vehicle_step(const Vec2& s, const Action& a, double match_prob,
                         std::span<const double> od_row, const NoiseModel& noise,
                         const CityGrid& grid, Rng& rng) {
    const double roll = rng.uniform();
    if (roll < a.p) {
        Vec2 next{s.x + a.u.x + noise.sigma_r * rng.normal(),
                  s.y + a.u.y + noise.sigma_r * rng.normal()};
        return {clamp_unit(next), VehicleStatus::Repositioning};
    }
    if (rng.uniform() < match_prob) {
        const int dest = rng.sample_discrete(od_row);
        const Vec2 c = grid.center(dest);
        const double half = 0.5 * grid.cell_width();
        Vec2 next{c.x + rng.uniform(-half, half) + noise.sigma_m * rng.normal(),
                  c.y + rng.uniform(-half, half) + noise.sigma_m * rng.normal()};
        return {clamp_unit(next), VehicleStatus::Matched};
    }
    Vec2 next{s.x + noise.sigma_c * rng.normal(), s.y + noise.sigma_c * rng.normal()};
    return {clamp_unit(next), VehicleStatus::Cruising};
}

}  // namespace mf
