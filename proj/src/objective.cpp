#include "meanfleet/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "meanfleet/mfcore.hpp"

namespace mf {

AccessSpec AccessSpec::from_grid(const CityGrid& grid, double p_fraction, double lambda) {
    if (p_fraction < 0.0 || p_fraction > 1.0)
        throw std::invalid_argument("AccessSpec: p_fraction outside [0,1]");
    AccessSpec spec;
    spec.w.assign(static_cast<size_t>(grid.n_zones()), 0.0);
    for (int i = 0; i < grid.n_zones(); ++i)
        if (grid.operational(i)) spec.w[static_cast<size_t>(i)] = 1.0;
    spec.p_fraction = p_fraction;
    spec.lambda = lambda;
    spec.bound_c = p_fraction * h_max(spec, grid);
    return spec;
}

double js_divergence(const GridMeasure& p, const GridMeasure& q) {
    if (p.size() != q.size()) throw std::invalid_argument("js_divergence: size mismatch");
    constexpr double inv_ln2 = 1.4426950408889634074;
    double kl_p = 0.0, kl_q = 0.0;
    for (size_t i = 0; i < p.mass.size(); ++i) {
        const double a = 0.5 * (p.mass[i] + q.mass[i]);
        if (p.mass[i] > 0.0) kl_p += p.mass[i] * std::log(p.mass[i] / a);
        if (q.mass[i] > 0.0) kl_q += q.mass[i] * std::log(q.mass[i] / a);
    }
    const double js = 0.5 * (kl_p + kl_q) * inv_ln2;
    return js < 0.0 ? 0.0 : (js > 1.0 ? 1.0 : js);
}

namespace {

// Normalized available distribution; uniform-operational fallback when the
// available mass vanishes.
GridMeasure available_distribution(const GridMeasure& mu, std::span<const double> p,
                                   const CityGrid& grid, bool* degenerate) {
    GridMeasure mu_a(grid.n_zones());
    double total = 0.0;
    for (int i = 0; i < grid.n_zones(); ++i) {
        const double pi = p[static_cast<size_t>(i)];
        mu_a[i] = (1.0 - (pi > 1.0 ? 1.0 : (pi < 0.0 ? 0.0 : pi))) * mu[i];
        total += mu_a[i];
    }
    if (total <= 1e-15) {
        if (degenerate) *degenerate = true;
        return GridMeasure::uniform_operational(grid);
    }
    if (degenerate) *degenerate = false;
    mu_a.scale(1.0 / total);
    return mu_a;
}

}  // namespace

RewardValue reward(const GridMeasure& mu, const GridMeasure& deltabar, std::span<const double> p,
                   std::span<const double> m, const CityGrid& grid) {
    const MeanFieldDecomposition dec = decompose(mu, p, m);
    RewardValue out;
    const double matched_total = dec.mu_m.total();
    GridMeasure mu_a = dec.mu_a();
    const double avail_total = mu_a.total();
    GridMeasure mu_a_bar(grid.n_zones());
    if (avail_total <= 1e-15) {
        out.degenerate = true;
        mu_a_bar = GridMeasure::uniform_operational(grid);
    } else {
        mu_a_bar = mu_a;
        mu_a_bar.scale(1.0 / avail_total);
    }
    out.unnormalized = matched_total - js_divergence(mu_a_bar, deltabar);
    out.r = 0.5 * (out.unnormalized + 1.0);
    return out;
}

double weighted_log_density(const GridMeasure& prob, const AccessSpec& spec,
                            const CityGrid& grid) {
    const double area = grid.cell_width() * grid.cell_width();
    double h = 0.0;
    for (int i = 0; i < grid.n_zones(); ++i) {
        const double wi = spec.w[static_cast<size_t>(i)];
        if (wi == 0.0) continue;
        h += wi * std::log(prob[i] / area + spec.eps) * area;
    }
    return h;
}

double empirical_weighted_log_density(std::span<const int> counts, const AccessSpec& spec,
                                      const CityGrid& grid) {
    const int n = grid.n_zones();
    if (static_cast<int>(counts.size()) != n)
        throw std::invalid_argument("empirical_weighted_log_density: count size mismatch");
    double total = 0.0;
    for (int c : counts) total += c;
    GridMeasure smoothed(n);
    const double denom = total + 0.5 * n;
    if (denom <= 0.0) return weighted_log_density(GridMeasure::uniform_operational(grid), spec, grid);
    for (int i = 0; i < n; ++i)
        smoothed[i] = (counts[static_cast<size_t>(i)] + 0.5) / denom;
    return weighted_log_density(smoothed, spec, grid);
}

AccessibilityValue accessibility(const GridMeasure& mu, std::span<const double> p,
                                 const AccessSpec& spec, const CityGrid& grid) {
    AccessibilityValue out;
    const GridMeasure mu_a_bar = available_distribution(mu, p, grid, &out.degenerate);
    out.h = weighted_log_density(mu_a_bar, spec, grid);
    return out;
}

double h_max(const AccessSpec& spec, const CityGrid& grid) {
    const double n_op = grid.n_operational();
    const double n = grid.n_zones();
    return (n_op / n) * std::log(n / n_op + spec.eps);
}

BarrierValue barrier_objective(std::span<const RolloutStep> steps, const GridMeasure& mu_terminal,
                               const AccessSpec& spec, const CityGrid& grid) {
    BarrierValue out;
    const int T = static_cast<int>(steps.size());
    out.min_gap = std::numeric_limits<double>::infinity();

    double reward_sum = 0.0;
    for (int t = 0; t < T; ++t) {
        const RolloutStep& st = steps[static_cast<size_t>(t)];
        const RewardValue rv = reward(st.mu, st.deltabar, st.p, st.m, grid);
        out.step_reward.push_back(rv.r);
        reward_sum += rv.r;
    }

    double barrier_sum = 0.0;
    double penalty = 0.0;
    for (int k = 1; k <= T; ++k) {
        AccessibilityValue av;
        if (k < T) {
            const RolloutStep& st = steps[static_cast<size_t>(k)];
            av = accessibility(st.mu, st.p, spec, grid);
        } else {
            // No policy exists at the horizon; the whole fleet is available.
            av.h = weighted_log_density(mu_terminal, spec, grid);
        }
        out.step_h.push_back(av.h);
        const double gap = av.h - spec.bound_c;
        out.min_gap = std::min(out.min_gap, gap);
        if (spec.lambda <= 0.0) continue;  // unconstrained run
        if (gap <= 0.0) {
            out.violated = true;
            penalty += -1e6 * (1.0 + (spec.bound_c - av.h));
        } else {
            barrier_sum += spec.lambda * std::log(gap);
        }
    }

    out.value = out.violated ? penalty : reward_sum + barrier_sum;
    return out;
}

}  // namespace mf
