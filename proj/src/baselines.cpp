#include "meanfleet/baselines.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace mf {

namespace {

double pair_weight(const std::vector<double>* weights, int n, int i, int j) {
    return weights ? (*weights)[static_cast<size_t>(i) * n + j] : 1.0;
}

}  // namespace

StaticRebalanceResult static_rebalance(const std::vector<double>& request_rates,
                                       const std::vector<double>& od_kernel, int n_zones,
                                       const std::vector<double>* weights) {
    const int n = n_zones;
    if (static_cast<int>(request_rates.size()) != n ||
        od_kernel.size() != static_cast<size_t>(n) * n)
        throw std::invalid_argument("static_rebalance: input size mismatch");

    // Net trip displacement per zone, self-loops excluded.
    std::vector<double> rhs(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const double out_rate =
            request_rates[static_cast<size_t>(i)] *
            (1.0 - od_kernel[static_cast<size_t>(i) * n + i]);
        rhs[static_cast<size_t>(i)] -= out_rate;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            rhs[static_cast<size_t>(j)] +=
                request_rates[static_cast<size_t>(i)] * od_kernel[static_cast<size_t>(i) * n + j];
        }
    }
    double balance = 0.0, scale = 0.0;
    for (int i = 0; i < n; ++i) {
        balance += rhs[static_cast<size_t>(i)];
        scale += std::abs(rhs[static_cast<size_t>(i)]);
    }
    if (std::abs(balance) > 1e-6 * std::max(1.0, scale))
        throw std::logic_error("static_rebalance: net flows do not sum to zero");

    LpProblem lp(n);
    for (int i = 0; i < n; ++i) lp.set_row(i, '=', rhs[static_cast<size_t>(i)]);
    std::vector<std::pair<int, int>> var_pair;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            lp.add_var(pair_weight(weights, n, i, j), {{i, 1.0}, {j, -1.0}});
            var_pair.emplace_back(i, j);
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    const LpSolution sol = solve_lp(lp);
    const auto t1 = std::chrono::steady_clock::now();
    if (sol.status != LpSolution::Status::Optimal)
        throw std::runtime_error("static_rebalance: LP did not solve to optimality");

    StaticRebalanceResult out;
    out.rates.assign(static_cast<size_t>(n) * n, 0.0);
    for (size_t k = 0; k < var_pair.size(); ++k)
        out.rates[static_cast<size_t>(var_pair[k].first) * n + var_pair[k].second] = sol.x[k];
    out.stats.n_vars = lp.n_vars();
    out.stats.n_rows = n;
    out.stats.iterations = sol.iterations;
    out.stats.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    out.stats.objective = sol.objective;
    return out;
}

std::vector<RebalanceOrder> orders_from_rates(const std::vector<double>& rates, int n_zones,
                                              double step_length, Rng& rng) {
    std::vector<RebalanceOrder> orders;
    for (int i = 0; i < n_zones; ++i) {
        for (int j = 0; j < n_zones; ++j) {
            if (i == j) continue;
            const double amount = rates[static_cast<size_t>(i) * n_zones + j] * step_length;
            if (amount <= 0.0) continue;
            int count = static_cast<int>(std::floor(amount));
            if (rng.bernoulli(amount - count)) ++count;
            if (count > 0) orders.push_back({i, j, count});
        }
    }
    return orders;
}

DynamicRebalanceResult dynamic_rebalance(const std::vector<double>& v_excess,
                                         const std::vector<double>& v_desired, int n_zones,
                                         const std::vector<double>* weights) {
    const int n = n_zones;
    if (static_cast<int>(v_excess.size()) != n || static_cast<int>(v_desired.size()) != n)
        throw std::invalid_argument("dynamic_rebalance: input size mismatch");

    LpProblem lp(n);
    for (int i = 0; i < n; ++i)
        lp.set_row(i, '>', v_desired[static_cast<size_t>(i)] - v_excess[static_cast<size_t>(i)]);
    std::vector<std::pair<int, int>> var_pair;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            lp.add_var(pair_weight(weights, n, i, j), {{i, -1.0}, {j, 1.0}});
            var_pair.emplace_back(i, j);
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    const LpSolution sol = solve_lp(lp);
    const auto t1 = std::chrono::steady_clock::now();

    DynamicRebalanceResult out;
    out.stats.n_vars = lp.n_vars();
    out.stats.n_rows = n;
    out.stats.iterations = sol.iterations;
    out.stats.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (sol.status != LpSolution::Status::Optimal) {
        out.feasible = false;
        out.num.assign(static_cast<size_t>(n) * n, 0.0);
        return out;
    }
    out.stats.objective = sol.objective;
    out.num.assign(static_cast<size_t>(n) * n, 0.0);
    for (size_t k = 0; k < var_pair.size(); ++k)
        out.num[static_cast<size_t>(var_pair[k].first) * n + var_pair[k].second] = sol.x[k];
    return out;
}

std::vector<RebalanceOrder> orders_from_counts(const std::vector<double>& num, int n_zones) {
    std::vector<RebalanceOrder> orders;
    for (int i = 0; i < n_zones; ++i) {
        for (int j = 0; j < n_zones; ++j) {
            if (i == j) continue;
            const int count = static_cast<int>(std::llround(num[static_cast<size_t>(i) * n_zones + j]));
            if (count > 0) orders.push_back({i, j, count});
        }
    }
    return orders;
}

}  // namespace mf
