// Test-side oracles, independent of the implementation paths they check:
// numeric quadrature for the discretized Gaussian, exhaustive search for
// bipartite assignment, basic-solution enumeration for small LPs, and a
// dense-LP formulation of the transport network solved by the simplex.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "meanfleet/grid.hpp"
#include "meanfleet/matching.hpp"
#include "meanfleet/simplex.hpp"

namespace oracles {

// Midpoint quadrature of the truncated bivariate normal over every cell,
// renormalized over the grid.
inline mf::GridMeasure quadrature_gaussian(mf::Vec2 center, double sigma, const mf::CityGrid& grid,
                                           int subdiv = 24) {
    center = mf::clamp_unit(center);
    const int M = grid.M();
    mf::GridMeasure out(grid.n_zones());
    if (sigma <= 0.0) {
        out[grid.zone_of(center)] = 1.0;
        return out;
    }
    const double cell = grid.cell_width();
    const double sub = cell / subdiv;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double total = 0.0;
    for (int iy = 0; iy < M; ++iy) {
        for (int ix = 0; ix < M; ++ix) {
            double acc = 0.0;
            for (int sy = 0; sy < subdiv; ++sy) {
                const double y = iy * cell + (sy + 0.5) * sub;
                const double dy = y - center.y;
                for (int sx = 0; sx < subdiv; ++sx) {
                    const double x = ix * cell + (sx + 0.5) * sub;
                    const double dx = x - center.x;
                    acc += std::exp(-(dx * dx + dy * dy) * inv2s2);
                }
            }
            out[grid.zone_index(ix, iy)] = acc;
            total += acc;
        }
    }
    out.scale(1.0 / total);
    return out;
}

struct AssignmentOptimum {
    int cardinality = 0;
    double distance = 0.0;
};

// Exhaustive max-cardinality-then-min-distance matching over all injections.
inline AssignmentOptimum brute_force_assignment(const std::vector<mf::Vec2>& vehicles,
                                                const std::vector<mf::Vec2>& riders,
                                                double max_dist) {
    const int nv = static_cast<int>(vehicles.size());
    const int nr = static_cast<int>(riders.size());
    AssignmentOptimum best;
    best.distance = std::numeric_limits<double>::infinity();
    std::vector<char> used(static_cast<size_t>(nv), 0);

    // Assign riders in order; each rider takes a free vehicle or stays
    // unmatched.
    auto recurse = [&](auto&& self, int rider, int matched, double distance) -> void {
        if (rider == nr) {
            if (matched > best.cardinality ||
                (matched == best.cardinality && distance < best.distance)) {
                best.cardinality = matched;
                best.distance = distance;
            }
            return;
        }
        self(self, rider + 1, matched, distance);  // rider unmatched
        for (int v = 0; v < nv; ++v) {
            if (used[static_cast<size_t>(v)]) continue;
            const double d = mf::dist(vehicles[static_cast<size_t>(v)], riders[static_cast<size_t>(rider)]);
            if (d >= max_dist) continue;
            used[static_cast<size_t>(v)] = 1;
            self(self, rider + 1, matched + 1, distance + d);
            used[static_cast<size_t>(v)] = 0;
        }
    };
    recurse(recurse, 0, 0, 0.0);
    if (best.cardinality == 0) best.distance = 0.0;
    return best;
}

// Minimum objective over all basic solutions of the standard-form system
// (equalities get no extra column, '>' a surplus, '<' a slack). Exponential;
// for instances with <= ~20 columns only.
inline double enumerate_lp_min(const mf::LpProblem& p, bool* feasible) {
    const int m = p.n_rows();
    std::vector<std::vector<double>> cols;
    std::vector<double> cost;
    for (int j = 0; j < p.n_vars(); ++j) {
        std::vector<double> col(static_cast<size_t>(m), 0.0);
        for (const auto& [row, val] : p.column(j)) col[static_cast<size_t>(row)] = val;
        cols.push_back(std::move(col));
        cost.push_back(p.objective()[static_cast<size_t>(j)]);
    }
    for (int r = 0; r < m; ++r) {
        if (p.sense(r) == '=') continue;
        std::vector<double> col(static_cast<size_t>(m), 0.0);
        col[static_cast<size_t>(r)] = p.sense(r) == '<' ? 1.0 : -1.0;
        cols.push_back(std::move(col));
        cost.push_back(0.0);
    }
    const int n = static_cast<int>(cols.size());

    double best = std::numeric_limits<double>::infinity();
    *feasible = false;
    std::vector<int> pick(static_cast<size_t>(m));
    auto solve_basis = [&]() {
        std::vector<double> a(static_cast<size_t>(m) * m);
        std::vector<double> b(static_cast<size_t>(m));
        for (int r = 0; r < m; ++r) {
            b[static_cast<size_t>(r)] = p.rhs(r);
            for (int c = 0; c < m; ++c)
                a[static_cast<size_t>(r) * m + c] = cols[static_cast<size_t>(pick[static_cast<size_t>(c)])][static_cast<size_t>(r)];
        }
        // Gaussian elimination with partial pivoting.
        for (int c = 0; c < m; ++c) {
            int piv = -1;
            double mag = 1e-9;
            for (int r = c; r < m; ++r)
                if (std::abs(a[static_cast<size_t>(r) * m + c]) > mag) {
                    mag = std::abs(a[static_cast<size_t>(r) * m + c]);
                    piv = r;
                }
            if (piv < 0) return;  // singular basis
            if (piv != c) {
                for (int k = 0; k < m; ++k)
                    std::swap(a[static_cast<size_t>(piv) * m + k], a[static_cast<size_t>(c) * m + k]);
                std::swap(b[static_cast<size_t>(piv)], b[static_cast<size_t>(c)]);
            }
            for (int r = 0; r < m; ++r) {
                if (r == c) continue;
                const double f = a[static_cast<size_t>(r) * m + c] / a[static_cast<size_t>(c) * m + c];
                if (f == 0.0) continue;
                for (int k = c; k < m; ++k)
                    a[static_cast<size_t>(r) * m + k] -= f * a[static_cast<size_t>(c) * m + k];
                b[static_cast<size_t>(r)] -= f * b[static_cast<size_t>(c)];
            }
        }
        double obj = 0.0;
        for (int c = 0; c < m; ++c) {
            const double x = b[static_cast<size_t>(c)] / a[static_cast<size_t>(c) * m + c];
            if (x < -1e-7) return;  // infeasible basic solution
            obj += cost[static_cast<size_t>(pick[static_cast<size_t>(c)])] * x;
        }
        *feasible = true;
        best = std::min(best, obj);
    };
    auto recurse = [&](auto&& self, int start, int depth) -> void {
        if (depth == m) {
            solve_basis();
            return;
        }
        for (int j = start; j < n; ++j) {
            pick[static_cast<size_t>(depth)] = j;
            self(self, j + 1, depth + 1);
        }
    };
    recurse(recurse, 0, 0);
    return best;
}

struct FlowLpOracle {
    double matched_total = 0.0;
    std::vector<double> m;
};

// The Appendix-B transport network formulated as a dense LP and solved with
// the in-repo simplex (a different algorithm family from the production
// successive-shortest-path solver).
inline FlowLpOracle flow_lp_oracle(const mf::GridMeasure& mu_a, const mf::GridMeasure& delta,
                                   const mf::MatchConfig& cfg, const mf::CityGrid& grid) {
    const int n = grid.n_zones();
    FlowLpOracle out;
    out.m.assign(static_cast<size_t>(n), 0.0);
    double total_supply = 0.0, total_demand = 0.0;
    for (int i = 0; i < n; ++i) {
        total_supply += mu_a[i];
        total_demand += delta[i];
    }
    if (total_supply <= 0.0 || total_demand <= 0.0) return out;
    const double flow_value = std::max(total_supply, total_demand);

    // Node balance rows: source, supply_i, demand_j, sink, dummy. The sink
    // row is implied by the others and kept for the conservation check.
    const int row_source = 0;
    auto row_supply = [n](int i) { return 1 + i; };
    auto row_demand = [n](int j) { return 1 + n + j; };
    const int row_sink = 1 + 2 * n;
    const int row_dummy = 2 + 2 * n;
    const int rows = 3 + 2 * n;
    const int cap_rows_start = rows;

    // Capacitated arcs: source->supply_i (mu_a_i), demand_j->sink (delta_j),
    // bypass (excess demand).
    int n_cap = 0;
    for (int i = 0; i < n; ++i)
        if (mu_a[i] > 0.0) ++n_cap;
    for (int j = 0; j < n; ++j)
        if (delta[j] > 0.0) ++n_cap;
    const bool bypass = total_demand > total_supply;
    if (bypass) ++n_cap;

    mf::LpProblem lp(rows + n_cap);
    for (int r = 0; r < rows; ++r) lp.set_row(r, '=', 0.0);
    lp.set_row(row_source, '=', flow_value);
    lp.set_row(row_sink, '=', -flow_value);

    int cap_row = cap_rows_start;
    std::vector<std::vector<int>> matched_vars(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (mu_a[i] <= 0.0) continue;
        lp.set_row(cap_row, '<', mu_a[i]);
        lp.add_var(0.0, {{row_source, 1.0}, {row_supply(i), -1.0}, {cap_row, 1.0}});
        ++cap_row;
        for (int j : grid.neighborhood(i, cfg.ot_neighbor_radius)) {
            if (delta[j] <= 0.0) continue;
            matched_vars[static_cast<size_t>(i)].push_back(lp.add_var(
                mf::ot_arc_cost(i, j, grid), {{row_supply(i), 1.0}, {row_demand(j), -1.0}}));
        }
        lp.add_var(cfg.ot_cruise_cost, {{row_supply(i), 1.0}, {row_dummy, -1.0}});
    }
    for (int j = 0; j < n; ++j) {
        if (delta[j] <= 0.0) continue;
        lp.set_row(cap_row, '<', delta[j]);
        lp.add_var(0.0, {{row_demand(j), 1.0}, {row_sink, -1.0}, {cap_row, 1.0}});
        ++cap_row;
    }
    lp.add_var(0.0, {{row_dummy, 1.0}, {row_sink, -1.0}});
    if (bypass) {
        lp.set_row(cap_row, '<', total_demand - total_supply);
        lp.add_var(0.0, {{row_source, 1.0}, {row_sink, -1.0}, {cap_row, 1.0}});
        ++cap_row;
    }

    const mf::LpSolution sol = mf::solve_lp(lp);
    if (sol.status != mf::LpSolution::Status::Optimal)
        throw std::runtime_error("flow_lp_oracle: simplex failed");
    for (int i = 0; i < n; ++i) {
        if (mu_a[i] <= 0.0) continue;
        double matched = 0.0;
        for (int v : matched_vars[static_cast<size_t>(i)]) matched += sol.x[static_cast<size_t>(v)];
        out.matched_total += matched;
        out.m[static_cast<size_t>(i)] = std::clamp(matched / mu_a[i], 0.0, 1.0);
    }
    return out;
}

}  // namespace oracles
