#include <doctest.h>

#include <cmath>

#include "meanfleet/baselines.hpp"
#include "oracles.hpp"

using namespace mf;

namespace {

// Net rebalancing flow balance residual at every node.
double flow_balance_residual(const std::vector<double>& rates,
                             const std::vector<double>& request_rates,
                             const std::vector<double>& od, int n) {
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        double net = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            net += rates[static_cast<size_t>(i) * n + j] - rates[static_cast<size_t>(j) * n + i];
        }
        double rhs = -request_rates[static_cast<size_t>(i)] * (1.0 - od[static_cast<size_t>(i) * n + i]);
        for (int j = 0; j < n; ++j)
            if (j != i)
                rhs += request_rates[static_cast<size_t>(j)] * od[static_cast<size_t>(j) * n + i];
        worst = std::max(worst, std::abs(net - rhs));
    }
    return worst;
}

// One balance row dropped: the rows sum to zero, so the last one is
// redundant and would make every square basis singular for the enumeration.
LpProblem static_lp(const std::vector<double>& request_rates, const std::vector<double>& od, int n) {
    LpProblem lp(n - 1);
    for (int i = 0; i < n - 1; ++i) {
        double rhs = -request_rates[static_cast<size_t>(i)] * (1.0 - od[static_cast<size_t>(i) * n + i]);
        for (int j = 0; j < n; ++j)
            if (j != i)
                rhs += request_rates[static_cast<size_t>(j)] * od[static_cast<size_t>(j) * n + i];
        lp.set_row(i, '=', rhs);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            std::vector<std::pair<int, double>> col;
            if (i < n - 1) col.emplace_back(i, 1.0);
            if (j < n - 1) col.emplace_back(j, -1.0);
            lp.add_var(1.0, col);
        }
    return lp;
}

LpProblem dynamic_lp(const std::vector<double>& v_ex, const std::vector<double>& v_d, int n) {
    LpProblem lp(n);
    for (int i = 0; i < n; ++i) lp.set_row(i, '>', v_d[static_cast<size_t>(i)] - v_ex[static_cast<size_t>(i)]);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) lp.add_var(1.0, {{i, -1.0}, {j, 1.0}});
    return lp;
}

}  // namespace

TEST_CASE("simplex: agrees with basic-solution enumeration on small programs") {
    Rng rng(61);
    for (int trial = 0; trial < 8; ++trial) {
        // 3 rows, 6 vars, mixed senses, feasible by construction.
        LpProblem lp(3);
        std::vector<double> x_feas(6);
        for (double& v : x_feas) v = rng.uniform(0.0, 2.0);
        std::vector<std::vector<double>> a(3, std::vector<double>(6));
        for (auto& row : a)
            for (double& v : row) v = rng.uniform(-1.0, 1.0);
        const char senses[3] = {'=', '>', '<'};
        for (int r = 0; r < 3; ++r) {
            double rhs = 0.0;
            for (int j = 0; j < 6; ++j) rhs += a[static_cast<size_t>(r)][static_cast<size_t>(j)] * x_feas[static_cast<size_t>(j)];
            if (senses[r] == '>') rhs -= rng.uniform(0.0, 0.5);
            if (senses[r] == '<') rhs += rng.uniform(0.0, 0.5);
            lp.set_row(r, senses[r], rhs);
        }
        for (int j = 0; j < 6; ++j) {
            std::vector<std::pair<int, double>> col;
            for (int r = 0; r < 3; ++r) col.emplace_back(r, a[static_cast<size_t>(r)][static_cast<size_t>(j)]);
            lp.add_var(rng.uniform(0.1, 2.0), col);
        }
        const LpSolution sol = solve_lp(lp);
        REQUIRE(sol.status == LpSolution::Status::Optimal);
        bool feasible = false;
        const double oracle = oracles::enumerate_lp_min(lp, &feasible);
        REQUIRE(feasible);
        CHECK(sol.objective == doctest::Approx(oracle).epsilon(1e-6));
    }
}

TEST_CASE("static_rebalance: balanced two-zone flows need no rebalancing") {
    // lambda_1 = lambda_2 = 1, all trips cross over.
    const std::vector<double> rates{1.0, 1.0};
    const std::vector<double> od{0.0, 1.0, 1.0, 0.0};
    const auto res = static_rebalance(rates, od, 2);
    CHECK(res.rates[1] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(res.rates[2] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("static_rebalance: one-way demand forces the counter-flow") {
    // Zone 1 sends one request per unit time to zone 2, nothing back.
    const std::vector<double> rates{1.0, 0.0};
    const std::vector<double> od{0.0, 1.0, 1.0, 0.0};
    const auto res = static_rebalance(rates, od, 2);
    CHECK(res.rates[static_cast<size_t>(1) * 2 + 0] == doctest::Approx(1.0).epsilon(1e-9));  // 2 -> 1
    CHECK(res.rates[static_cast<size_t>(0) * 2 + 1] == doctest::Approx(0.0).epsilon(1e-9));  // 1 -> 2
}

TEST_CASE("static_rebalance: 4-zone instances match the enumeration oracle and balance flows") {
    Rng rng(71);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4;
        std::vector<double> rates(4), od(16);
        for (double& v : rates) v = rng.uniform(0.0, 3.0);
        for (int i = 0; i < n; ++i) {
            double total = 0.0;
            for (int j = 0; j < n; ++j) {
                od[static_cast<size_t>(i) * n + j] = rng.uniform(0.05, 1.0);
                total += od[static_cast<size_t>(i) * n + j];
            }
            for (int j = 0; j < n; ++j) od[static_cast<size_t>(i) * n + j] /= total;
        }
        const auto res = static_rebalance(rates, od, n);
        CHECK(flow_balance_residual(res.rates, rates, od, n) <= 1e-6);

        bool feasible = false;
        const double oracle = oracles::enumerate_lp_min(static_lp(rates, od, n), &feasible);
        REQUIRE(feasible);
        CHECK(res.stats.objective == doctest::Approx(oracle).epsilon(1e-6));
    }
}

TEST_CASE("orders_from_rates: stochastic rounding preserves the expectation") {
    Rng rng(81);
    std::vector<double> rates(4, 0.0);
    rates[1] = 2.35;  // zone 0 -> zone 1 on a 2-zone grid
    double total = 0.0;
    const int draws = 20000;
    for (int k = 0; k < draws; ++k) {
        const auto orders = orders_from_rates(rates, 2, 1.0, rng);
        int count = 0;
        for (const auto& o : orders) count += o.count;
        total += count;
    }
    CHECK(total / draws == doctest::Approx(2.35).epsilon(0.01));
}

TEST_CASE("dynamic_rebalance: no moves when excess covers desire") {
    const std::vector<double> v_ex{5.0, 2.0, 1.0};
    const std::vector<double> v_d{4.0, 2.0, 0.0};
    const auto res = dynamic_rebalance(v_ex, v_d, 3);
    REQUIRE(res.feasible);
    for (double v : res.num) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("dynamic_rebalance: single binding shortage pulls exactly the gap") {
    const std::vector<double> v_ex{5.0, 0.0};
    const std::vector<double> v_d{0.0, 3.0};
    const auto res = dynamic_rebalance(v_ex, v_d, 2);
    REQUIRE(res.feasible);
    CHECK(res.num[static_cast<size_t>(0) * 2 + 1] == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(res.num[static_cast<size_t>(1) * 2 + 0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("dynamic_rebalance: integral solutions on integral instances, oracle objective") {
    Rng rng(91);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4;
        std::vector<double> v_ex(4), v_d(4);
        for (int i = 0; i < n; ++i) {
            v_ex[static_cast<size_t>(i)] = rng.uniform_int(8);
            v_d[static_cast<size_t>(i)] = rng.uniform_int(4);
        }
        double total_ex = 0.0, total_d = 0.0;
        for (int i = 0; i < n; ++i) {
            total_ex += v_ex[static_cast<size_t>(i)];
            total_d += v_d[static_cast<size_t>(i)];
        }
        if (total_ex < total_d) v_ex[0] += total_d - total_ex;  // keep feasible

        const auto res = dynamic_rebalance(v_ex, v_d, n);
        REQUIRE(res.feasible);
        for (double v : res.num) CHECK(std::abs(v - std::llround(v)) <= 1e-6);

        bool feasible = false;
        const double oracle = oracles::enumerate_lp_min(dynamic_lp(v_ex, v_d, n), &feasible);
        REQUIRE(feasible);
        CHECK(res.stats.objective == doctest::Approx(oracle).epsilon(1e-6));

        // Orders never exceed what the origin can give after clipping.
        const auto orders = orders_from_counts(res.num, n);
        for (const auto& o : orders) CHECK(o.count >= 1);
    }
}

TEST_CASE("dynamic_rebalance: impossible totals report infeasibility") {
    const std::vector<double> v_ex{0.0, 0.0};
    const std::vector<double> v_d{3.0, 3.0};
    const auto res = dynamic_rebalance(v_ex, v_d, 2);
    CHECK_FALSE(res.feasible);
}

TEST_CASE("no_rebalance: always empty") {
    CHECK(no_rebalance().empty());
}
