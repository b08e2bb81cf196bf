#include <doctest.h>

#include <cmath>
#include <numeric>

#include "meanfleet/flow.hpp"
#include "meanfleet/matching.hpp"
#include "oracles.hpp"

using namespace mf;

namespace {

double total_pair_distance(const std::vector<std::pair<int, int>>& pairs,
                           const std::vector<Vec2>& vehicles, const std::vector<Vec2>& riders) {
    double total = 0.0;
    for (const auto& [v, r] : pairs)
        total += dist(vehicles[static_cast<size_t>(v)], riders[static_cast<size_t>(r)]);
    return total;
}

std::vector<double> uniform_od(int n) {
    std::vector<double> od(static_cast<size_t>(n) * n, 1.0 / n);
    return od;
}

}  // namespace

TEST_CASE("assign_minute: single feasible pair is matched, distant pair is not") {
    MatchConfig cfg;
    const std::vector<Vec2> vehicle{{0.5, 0.5}};
    SUBCASE("inside the radius") {
        const std::vector<Vec2> rider{{0.5, 0.55}};
        const auto pairs = assign_minute(vehicle, rider, cfg);
        REQUIRE(pairs.size() == 1);
        CHECK(dist(vehicle[0], rider[0]) == doctest::Approx(0.05));
    }
    SUBCASE("outside the radius") {
        const std::vector<Vec2> rider{{0.5, 0.6}};
        CHECK(assign_minute(vehicle, rider, cfg).empty());
    }
    SUBCASE("empty inputs") {
        CHECK(assign_minute({}, {}, cfg).empty());
        CHECK(assign_minute(vehicle, {}, cfg).empty());
    }
}

TEST_CASE("assign_minute: equals the exhaustive oracle on random instances") {
    MatchConfig cfg;
    cfg.max_pickup_dist = 0.3;  // denser feasibility than the default radius
    Rng rng(101);
    for (int trial = 0; trial < 60; ++trial) {
        const int nv = 1 + rng.uniform_int(6);
        const int nr = 1 + rng.uniform_int(6);
        std::vector<Vec2> vehicles(static_cast<size_t>(nv)), riders(static_cast<size_t>(nr));
        for (auto& v : vehicles) v = {rng.uniform(0, 1), rng.uniform(0, 1)};
        for (auto& r : riders) r = {rng.uniform(0, 1), rng.uniform(0, 1)};

        const auto pairs = assign_minute(vehicles, riders, cfg);
        const auto oracle = oracles::brute_force_assignment(vehicles, riders, cfg.max_pickup_dist);
        CHECK(static_cast<int>(pairs.size()) == oracle.cardinality);
        CHECK(total_pair_distance(pairs, vehicles, riders) ==
              doctest::Approx(oracle.distance).epsilon(1e-9));
        for (const auto& [v, r] : pairs)
            CHECK(dist(vehicles[static_cast<size_t>(v)], riders[static_cast<size_t>(r)]) <
                  cfg.max_pickup_dist);
    }
}

TEST_CASE("flow network: conservation holds at interior nodes at optimum") {
    FlowNetwork net(4);
    const int a01 = net.add_arc(0, 1, 5, 1.0);
    const int a02 = net.add_arc(0, 2, 5, 2.0);
    const int a13 = net.add_arc(1, 3, 3, 1.0);
    const int a23 = net.add_arc(2, 3, 9, 1.0);
    const int a12 = net.add_arc(1, 2, 9, 0.5);
    const auto res = net.solve(0, 3, 8);
    CHECK(res.flow_value == 8);
    CHECK(net.node_balance(1) == 0);
    CHECK(net.node_balance(2) == 0);
    CHECK(net.node_balance(0) == 8);
    CHECK(net.flow(a01) + net.flow(a02) == 8);
    CHECK(net.flow(a13) + net.flow(a23) == 8);
    (void)a12;
}

TEST_CASE("ot_match_prob: single-zone ratio and empty demand") {
    const CityGrid grid = CityGrid::square(1);
    MatchConfig cfg;
    GridMeasure supply(1);
    GridMeasure demand(1);
    supply[0] = 0.5;
    demand[0] = 0.3;
    const auto m = ot_match_prob(supply, demand, cfg, grid);
    CHECK(m[0] == doctest::Approx(0.6).epsilon(1e-9));

    demand[0] = 0.0;
    const auto m0 = ot_match_prob(supply, demand, cfg, grid);
    CHECK(m0[0] == doctest::Approx(0.0));
}

TEST_CASE("ot_match_prob: matches the dense-LP oracle on small grids") {
    MatchConfig cfg;
    Rng rng(211);
    for (int trial = 0; trial < 25; ++trial) {
        const int M = 2 + trial % 2;
        const CityGrid grid = CityGrid::square(M);
        const int n = grid.n_zones();
        GridMeasure supply(n), demand(n);
        for (int i = 0; i < n; ++i) {
            supply[i] = rng.bernoulli(0.8) ? rng.uniform(0.0, 1.0) : 0.0;
            demand[i] = rng.bernoulli(0.8) ? rng.uniform(0.0, 1.0) : 0.0;
        }
        const auto m = ot_match_prob(supply, demand, cfg, grid);
        const auto oracle = oracles::flow_lp_oracle(supply, demand, cfg, grid);
        double matched_total = 0.0;
        for (int i = 0; i < n; ++i) {
            CHECK(m[static_cast<size_t>(i)] >= 0.0);
            CHECK(m[static_cast<size_t>(i)] <= 1.0);
            CHECK(std::abs(m[static_cast<size_t>(i)] - oracle.m[static_cast<size_t>(i)]) <= 1e-6);
            matched_total += m[static_cast<size_t>(i)] * supply[i];
        }
        CHECK(std::abs(matched_total - oracle.matched_total) <= 1e-6);
        CHECK(matched_total <= std::min(supply.total(), demand.total()) + 1e-6);
    }
}

TEST_CASE("ot_match_prob: invariant under joint scaling of supply and demand") {
    const CityGrid grid = CityGrid::square(4);
    const int n = grid.n_zones();
    MatchConfig cfg;
    Rng rng(31);
    GridMeasure supply(n), demand(n);
    for (int i = 0; i < n; ++i) {
        supply[i] = rng.uniform(0.0, 1.0);
        demand[i] = rng.uniform(0.0, 1.0);
    }
    const auto m1 = ot_match_prob(supply, demand, cfg, grid);
    GridMeasure s2 = supply, d2 = demand;
    s2.scale(3.7);
    d2.scale(3.7);
    const auto m2 = ot_match_prob(s2, d2, cfg, grid);
    for (int i = 0; i < n; ++i)
        CHECK(m1[static_cast<size_t>(i)] == doctest::Approx(m2[static_cast<size_t>(i)]).epsilon(1e-7));
}

TEST_CASE("ot_match_prob: zero demand in the whole neighborhood forces m = 0") {
    const CityGrid grid = CityGrid::square(5);
    const int n = grid.n_zones();
    MatchConfig cfg;
    GridMeasure supply(n), demand(n);
    supply[grid.zone_index(0, 0)] = 0.4;
    demand[grid.zone_index(4, 4)] = 0.4;  // far corner, unreachable in one ring
    const auto m = ot_match_prob(supply, demand, cfg, grid);
    CHECK(m[static_cast<size_t>(grid.zone_index(0, 0))] == doctest::Approx(0.0));

    CHECK_THROWS_AS(
        ot_match_prob(GridMeasure(std::vector<double>(static_cast<size_t>(n), -0.1)), demand, cfg, grid),
        std::invalid_argument);
}

TEST_CASE("simulate_matching_step: no requests means no matches") {
    const CityGrid grid = CityGrid::square(5);
    MatchConfig cfg;
    Rng rng(5);
    std::vector<Vec2> idle(20, Vec2{0.5, 0.5});
    const GridMeasure zero(grid.n_zones());
    const auto out = simulate_matching_step(idle, zero, uniform_od(grid.n_zones()), grid, cfg, rng);
    CHECK(out.total_requests == 0);
    CHECK(out.served == 0);
    for (auto m : out.matched) CHECK(m == 0);
}

TEST_CASE("simulate_matching_step: abundant co-located vehicles serve every rider") {
    const CityGrid grid = CityGrid::square(5);
    MatchConfig cfg;
    Rng rng(6);
    std::vector<Vec2> idle(300);
    for (auto& s : idle) s = {0.5 + rng.uniform(-0.05, 0.05), 0.5 + rng.uniform(-0.05, 0.05)};
    GridMeasure means(grid.n_zones());
    means[grid.zone_of({0.5, 0.5})] = 8.0;  // Poisson mean well below the fleet
    const auto out = simulate_matching_step(idle, means, uniform_od(grid.n_zones()), grid, cfg, rng);
    CHECK(out.total_requests > 0);
    CHECK(out.served == out.total_requests);
    CHECK(out.mean_pickup_dist < cfg.max_pickup_dist);
}

TEST_CASE("simulate_matching_step: replays are identical under a fixed seed") {
    const CityGrid grid = CityGrid::square(5);
    MatchConfig cfg;
    std::vector<Vec2> idle(100);
    Rng init(7);
    for (auto& s : idle) s = {init.uniform(0, 1), init.uniform(0, 1)};
    GridMeasure means(grid.n_zones(), 4.0);

    Rng rng_a(123), rng_b(123);
    const auto a = simulate_matching_step(idle, means, uniform_od(grid.n_zones()), grid, cfg, rng_a);
    const auto b = simulate_matching_step(idle, means, uniform_od(grid.n_zones()), grid, cfg, rng_b);
    CHECK(a.served == b.served);
    CHECK(a.total_requests == b.total_requests);
    CHECK(a.matched == b.matched);
    CHECK(a.dest_zone == b.dest_zone);
    CHECK(a.mean_pickup_dist == doctest::Approx(b.mean_pickup_dist).epsilon(1e-15));
}

TEST_CASE("collect_samples: one labeled sample per occupied operational zone") {
    std::vector<std::uint8_t> mask(25, 1);
    mask[7] = 0;
    const CityGrid grid(5, mask, 13750.0);
    MatchConfig cfg;
    Rng rng(8);

    std::vector<Vec2> idle;
    for (int i = 0; i < 40; ++i) idle.push_back({rng.uniform(0, 1), rng.uniform(0, 1)});
    GridMeasure means(grid.n_zones(), 2.0);
    const auto outcome = simulate_matching_step(idle, means, uniform_od(grid.n_zones()), grid, cfg, rng);

    auto mu_a = std::make_shared<const GridMeasure>(grid.n_zones());
    auto delta = std::make_shared<const GridMeasure>(means);
    Rng pick_a(55), pick_b(55);
    const auto samples = collect_samples(outcome, idle, 3, mu_a, delta, grid, pick_a);
    const auto replay = collect_samples(outcome, idle, 3, mu_a, delta, grid, pick_b);

    std::vector<int> occupied(static_cast<size_t>(grid.n_zones()), 0);
    for (const Vec2& s : idle) occupied[static_cast<size_t>(grid.zone_of(s))] = 1;
    int expected = 0;
    for (int z = 0; z < grid.n_zones(); ++z)
        if (grid.operational(z) && occupied[static_cast<size_t>(z)]) ++expected;
    CHECK(static_cast<int>(samples.size()) == expected);
    REQUIRE(samples.size() == replay.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].s.x == replay[i].s.x);
        CHECK(samples[i].label == replay[i].label);
        CHECK_FALSE(grid.zone_of(samples[i].s) == 7);
    }

    SUBCASE("all-matched outcomes label every sample 1") {
        StepOutcome all = outcome;
        std::fill(all.matched.begin(), all.matched.end(), 1);
        Rng pick(77);
        for (const auto& s : collect_samples(all, idle, 0, mu_a, delta, grid, pick))
            CHECK(s.label == 1);
    }
}
