#pragma once

#include <vector>

#include "meanfleet/grid.hpp"
#include "meanfleet/rng.hpp"
#include "meanfleet/simplex.hpp"

namespace mf {

struct RebalanceOrder {
    int from = 0;
    int to = 0;
    int count = 0;  // clipped to idle vehicles in the origin at execution
};

struct LpStats {
    int n_vars = 0;
    int n_rows = 0;
    int iterations = 0;
    double solve_ms = 0.0;
    double objective = 0.0;
};

struct StaticRebalanceResult {
    std::vector<double> rates;  // n x n row-major, zero diagonal
    LpStats stats;
};

// Flow-balance LP: min sum T_ij a_ij s.t. per-zone net rebalancing flow
// offsets net trip flow, a >= 0. Self-loop trip mass is excluded from the
// inputs (it displaces no vehicles and would otherwise unbalance the rows).
// Weights default to uniform T_ij = 1; pass center distances to override.
// Throws on infeasibility (cannot occur once rows balance; asserted).
StaticRebalanceResult static_rebalance(const std::vector<double>& request_rates,
                                       const std::vector<double>& od_kernel, int n_zones,
                                       const std::vector<double>* weights = nullptr);

// Rates * step length to integer counts by stochastic rounding
// (floor + Bernoulli on the fraction). Skips the diagonal.
std::vector<RebalanceOrder> orders_from_rates(const std::vector<double>& rates, int n_zones,
                                              double step_length, Rng& rng);

struct DynamicRebalanceResult {
    std::vector<double> num;  // n x n row-major, zero diagonal; integral at optimum
    bool feasible = true;
    LpStats stats;
};

// Threshold LP: min sum T_ij num_ij s.t. supply after rebalancing stays at or
// above the desired level: v_ex_i - sum_j num_ij + sum_j num_ji >= v_d_i.
// Integrality of the relaxation holds on integral inputs (network matrix).
// Infeasible instances return feasible=false (caller falls back to
// no-rebalancing).
DynamicRebalanceResult dynamic_rebalance(const std::vector<double>& v_excess,
                                         const std::vector<double>& v_desired, int n_zones,
                                         const std::vector<double>* weights = nullptr);

std::vector<RebalanceOrder> orders_from_counts(const std::vector<double>& num, int n_zones);

// All vehicles cruise locally until matched.
inline std::vector<RebalanceOrder> no_rebalance() { return {}; }

}  // namespace mf
