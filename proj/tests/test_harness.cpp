#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "meanfleet/harness.hpp"

using namespace mf;

namespace {

ScenarioSpec tiny_scenario(double total_rate) {
    ScenarioSpec scen = ScenarioSpec::desk_city();
    scen.grid_m = 5;
    scen.operational_mask.assign(25, 1);
    scen.operational_mask[12] = 0;
    scen.steps = 4;
    scen.fleet_size = 150;
    scen.od_attraction.clear();
    scen.components.clear();
    scen.components.push_back({{0.7, 0.7}, 0.2, std::vector<double>(4, total_rate)});
    return scen;
}

}  // namespace

TEST_CASE("advance_fleet: vehicle statuses always partition the fleet") {
    const ScenarioSpec scen = tiny_scenario(40.0);
    const CityGrid grid = scen.make_grid();
    const DemandPattern demand = build_demand(scen, grid);
    Rng rng(3);
    FleetInit init = init_fleet(0.5, demand.dist[0], scen.fleet_size, grid, rng);
    FleetState fleet = std::move(init.fleet);

    std::vector<Action> actions(static_cast<size_t>(scen.fleet_size));
    Rng arng(4);
    for (auto& a : actions) a = {arng.uniform(0.0, 0.6), {arng.uniform(-0.2, 0.2), arng.uniform(-0.2, 0.2)}};

    for (int t = 0; t < demand.T; ++t) {
        const FleetStepStats stats =
            advance_fleet(fleet, t, demand, grid, scen.match, scen.noise, &actions, nullptr, rng);
        int r = 0, m = 0, c = 0;
        for (const VehicleStatus s : fleet.status) {
            r += s == VehicleStatus::Repositioning ? 1 : 0;
            m += s == VehicleStatus::Matched ? 1 : 0;
            c += s == VehicleStatus::Cruising ? 1 : 0;
        }
        CHECK(r + m + c == scen.fleet_size);
        CHECK(r == stats.repositioning);
        CHECK(static_cast<int>(stats.idle_pos.size()) == scen.fleet_size - r);
        for (const Vec2& s : fleet.pos) {
            CHECK(s.x >= 0.0);
            CHECK(s.x <= 1.0);
            CHECK(s.y >= 0.0);
            CHECK(s.y <= 1.0);
        }
    }
}

TEST_CASE("evaluate: zero demand with no policy gives the degenerate conventions") {
    const ScenarioSpec scen = tiny_scenario(0.0);
    const CityGrid grid = scen.make_grid();
    const DemandPattern demand = build_demand(scen, grid);

    RunConfig rc;
    rc.kind = PolicyKind::None;
    rc.runs = 2;
    rc.seed = 9;
    rc.init_alpha = 0.7;
    const MetricsReport report = evaluate(rc, scen, grid, demand);

    CHECK(report.mean.utilization == doctest::Approx(0.0));
    CHECK(report.mean.rebalancing_rate == doctest::Approx(0.0));
    CHECK(report.mean.service_rate == doctest::Approx(1.0));
    CHECK(report.mean.fulfillment == doctest::Approx(1.0));
    for (const auto& run : report.runs)
        for (const auto& step : run.steps) CHECK(step.no_requests);

    // Step-0 accessibility equals the initial occupancy fraction of the same
    // seeded initialization.
    Rng root(9);
    Rng replayed = root.fork(0);
    const FleetInit init = init_fleet(0.7, demand.dist[0], scen.fleet_size, grid, replayed);
    int occupied = 0;
    std::vector<int> counts(static_cast<size_t>(grid.n_zones()), 0);
    for (const Vec2& s : init.fleet.pos) ++counts[static_cast<size_t>(grid.zone_of(s))];
    for (int z = 0; z < grid.n_zones(); ++z)
        if (grid.operational(z) && counts[static_cast<size_t>(z)] > 0) ++occupied;
    CHECK(report.runs[0].steps[0].accessibility ==
          doctest::Approx(static_cast<double>(occupied) / grid.n_operational()));
}

TEST_CASE("evaluate: identical seeds give identical reports, means equal run averages") {
    const ScenarioSpec scen = tiny_scenario(50.0);
    const CityGrid grid = scen.make_grid();
    const DemandPattern demand = build_demand(scen, grid);

    RunConfig rc;
    rc.kind = PolicyKind::None;
    rc.runs = 3;
    rc.seed = 21;
    const MetricsReport a = evaluate(rc, scen, grid, demand);
    const MetricsReport b = evaluate(rc, scen, grid, demand);
    REQUIRE(a.runs.size() == b.runs.size());
    for (size_t r = 0; r < a.runs.size(); ++r) {
        CHECK(a.runs[r].aggregate.utilization == b.runs[r].aggregate.utilization);
        CHECK(a.runs[r].aggregate.service_rate == b.runs[r].aggregate.service_rate);
        CHECK(a.runs[r].aggregate.h == b.runs[r].aggregate.h);
    }
    double mean_util = 0.0;
    for (const auto& run : a.runs) mean_util += run.aggregate.utilization;
    CHECK(a.mean.utilization == doctest::Approx(mean_util / a.runs.size()).epsilon(1e-12));
}

TEST_CASE("evaluate: LP baselines run and reposition vehicles") {
    const ScenarioSpec scen = tiny_scenario(60.0);
    const CityGrid grid = scen.make_grid();
    const DemandPattern demand = build_demand(scen, grid);

    for (const PolicyKind kind : {PolicyKind::LpStatic, PolicyKind::LpDynamic}) {
        RunConfig rc;
        rc.kind = kind;
        rc.runs = 2;
        rc.seed = 31;
        rc.init_alpha = 1.0;
        const MetricsReport report = evaluate(rc, scen, grid, demand);
        CHECK(report.mean.service_rate > 0.0);
        CHECK(report.mean.utilization > 0.0);
    }
}

TEST_CASE("evaluate: checkpoint grid mismatch is a hard error") {
    const ScenarioSpec scen = tiny_scenario(10.0);
    const CityGrid grid = scen.make_grid();
    const DemandPattern demand = build_demand(scen, grid);
    Rng rng(1);
    PolicyNetConfig pc;
    pc.grid_m = 4;  // wrong grid
    pc.horizon = 4;
    pc.hidden = {8};
    PolicyNet policy(pc, rng);
    RunConfig rc;
    rc.kind = PolicyKind::Mfc;
    rc.policy = &policy;
    CHECK_THROWS_AS(evaluate(rc, scen, grid, demand), std::invalid_argument);
}

TEST_CASE("pareto front: single point and dominated pairs") {
    std::vector<SweepEntry> one(1);
    one[0].report.mean.accessibility = 0.5;
    one[0].report.mean.utilization = 0.5;
    mark_pareto_front(one);
    CHECK(one[0].pareto_front);

    std::vector<SweepEntry> two(2);
    two[0].report.mean.accessibility = 0.4;
    two[0].report.mean.utilization = 0.6;
    two[1].report.mean.accessibility = 0.6;
    two[1].report.mean.utilization = 0.7;  // dominates
    mark_pareto_front(two);
    CHECK_FALSE(two[0].pareto_front);
    CHECK(two[1].pareto_front);

    std::vector<SweepEntry> trade(2);
    trade[0].report.mean.accessibility = 0.4;
    trade[0].report.mean.utilization = 0.8;
    trade[1].report.mean.accessibility = 0.7;
    trade[1].report.mean.utilization = 0.6;
    mark_pareto_front(trade);
    CHECK(trade[0].pareto_front);
    CHECK(trade[1].pareto_front);
}

TEST_CASE("metrics files: csv rows and summary json parse back") {
    const ScenarioSpec scen = tiny_scenario(30.0);
    const CityGrid grid = scen.make_grid();
    const DemandPattern demand = build_demand(scen, grid);
    RunConfig rc;
    rc.kind = PolicyKind::None;
    rc.runs = 2;
    rc.seed = 5;
    const MetricsReport report = evaluate(rc, scen, grid, demand);

    const std::string dir = "/tmp/mf_harness_test";
    std::filesystem::create_directories(dir);
    write_metrics_csv(dir + "/metrics.csv", report);
    write_summary_json(dir + "/summary.json", report, "none");

    std::ifstream csv(dir + "/metrics.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "run,step,metric,value");
    int rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    CHECK(rows == 2 * 4 * 8);  // runs x steps x metrics

    std::ifstream js(dir + "/summary.json");
    std::stringstream ss;
    ss << js.rdbuf();
    CHECK(ss.str().find("\"schema_version\"") != std::string::npos);
    CHECK(ss.str().find("\"accessibility\"") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("policy kind strings round trip") {
    for (const char* name : {"none", "mfc", "mfrl", "lp-static", "lp-dynamic"})
        CHECK(to_string(policy_kind_from_string(name)) == name);
    CHECK_THROWS_AS(policy_kind_from_string("bogus"), std::invalid_argument);
}
