#include "meanfleet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mf {

PolicyKind policy_kind_from_string(const std::string& s) {
    if (s == "none") return PolicyKind::None;
    if (s == "mfc") return PolicyKind::Mfc;
    if (s == "mfrl") return PolicyKind::Mfrl;
    if (s == "lp-static") return PolicyKind::LpStatic;
    if (s == "lp-dynamic") return PolicyKind::LpDynamic;
    throw std::invalid_argument("unknown policy kind: " + s);
}

std::string to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::None: return "none";
        case PolicyKind::Mfc: return "mfc";
        case PolicyKind::Mfrl: return "mfrl";
        case PolicyKind::LpStatic: return "lp-static";
        case PolicyKind::LpDynamic: return "lp-dynamic";
    }
    return "none";
}

int worker_count(int cap) {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("MEANFLEET_THREADS")) {
        const int parsed = std::atoi(env);
        if (parsed >= 1) n = parsed;
    }
    return std::min(n, std::max(1, cap));
}

FleetStepStats advance_fleet(FleetState& fleet, int t, const DemandPattern& demand,
                             const CityGrid& grid, const MatchConfig& match_cfg,
                             const NoiseModel& noise, const std::vector<Action>* actions,
                             const std::vector<RebalanceOrder>* orders, Rng& rng) {
    const int L = fleet.size();
    const int n = grid.n_zones();
    FleetStepStats stats;
    stats.mu_start = fleet.histogram(grid);

    // Repositioning selection.
    std::vector<char> repositioning(static_cast<size_t>(L), 0);
    std::vector<Vec2> new_pos = fleet.pos;
    const double half = 0.5 * grid.cell_width();
    if (actions != nullptr) {
        if (static_cast<int>(actions->size()) != L)
            throw std::invalid_argument("advance_fleet: one action per vehicle required");
        for (int v = 0; v < L; ++v) {
            const Action& a = (*actions)[static_cast<size_t>(v)];
            if (rng.bernoulli(a.p)) {
                repositioning[static_cast<size_t>(v)] = 1;
                new_pos[static_cast<size_t>(v)] =
                    clamp_unit({fleet.pos[static_cast<size_t>(v)].x + a.u.x + noise.sigma_r * rng.normal(),
                                fleet.pos[static_cast<size_t>(v)].y + a.u.y + noise.sigma_r * rng.normal()});
                ++stats.repositioning;
            }
        }
    } else if (orders != nullptr) {
        std::vector<std::vector<int>> by_zone(static_cast<size_t>(n));
        for (int v = 0; v < L; ++v)
            by_zone[static_cast<size_t>(grid.zone_of(fleet.pos[static_cast<size_t>(v)]))].push_back(v);
        for (const RebalanceOrder& order : *orders) {
            auto& pool = by_zone[static_cast<size_t>(order.from)];
            const int take = std::min<int>(order.count, static_cast<int>(pool.size()));
            for (int k = 0; k < take; ++k) {
                const int pick = rng.uniform_int(static_cast<int>(pool.size()));
                const int v = pool[static_cast<size_t>(pick)];
                pool[static_cast<size_t>(pick)] = pool.back();
                pool.pop_back();
                repositioning[static_cast<size_t>(v)] = 1;
                const Vec2 c = grid.center(order.to);
                new_pos[static_cast<size_t>(v)] =
                    clamp_unit({c.x + rng.uniform(-half, half) + noise.sigma_r * rng.normal(),
                                c.y + rng.uniform(-half, half) + noise.sigma_r * rng.normal()});
                ++stats.repositioning;
            }
        }
    }

    for (int v = 0; v < L; ++v) {
        if (!repositioning[static_cast<size_t>(v)]) {
            stats.idle_indices.push_back(v);
            stats.idle_pos.push_back(fleet.pos[static_cast<size_t>(v)]);
        }
    }
    stats.mu_available = GridMeasure(n);
    for (const Vec2& s : stats.idle_pos) stats.mu_available[grid.zone_of(s)] += 1.0 / L;

    stats.outcome = simulate_matching_step(stats.idle_pos, demand.request_means(t),
                                           demand.od_at(t), grid, match_cfg, rng);

    for (size_t k = 0; k < stats.idle_indices.size(); ++k) {
        const int v = stats.idle_indices[k];
        if (stats.outcome.matched[k]) {
            const Vec2 c = grid.center(stats.outcome.dest_zone[k]);
            new_pos[static_cast<size_t>(v)] =
                clamp_unit({c.x + rng.uniform(-half, half) + noise.sigma_m * rng.normal(),
                            c.y + rng.uniform(-half, half) + noise.sigma_m * rng.normal()});
            fleet.status[static_cast<size_t>(v)] = VehicleStatus::Matched;
        } else {
            new_pos[static_cast<size_t>(v)] =
                clamp_unit({fleet.pos[static_cast<size_t>(v)].x + noise.sigma_c * rng.normal(),
                            fleet.pos[static_cast<size_t>(v)].y + noise.sigma_c * rng.normal()});
            fleet.status[static_cast<size_t>(v)] = VehicleStatus::Cruising;
        }
    }
    for (int v = 0; v < L; ++v)
        if (repositioning[static_cast<size_t>(v)])
            fleet.status[static_cast<size_t>(v)] = VehicleStatus::Repositioning;
    fleet.pos = std::move(new_pos);
    return stats;
}

namespace {

MetricsRow step_metrics(const FleetStepStats& stats, const CityGrid& grid, const AccessSpec& spec,
                        double L, double meters_per_unit) {
    MetricsRow row;
    int accessible = 0, fulfilled = 0, matched = 0;
    std::vector<int> zone_avail(static_cast<size_t>(grid.n_zones()), 0);
    for (const Vec2& s : stats.idle_pos) ++zone_avail[static_cast<size_t>(grid.zone_of(s))];
    for (int z = 0; z < grid.n_zones(); ++z) {
        if (!grid.operational(z)) continue;
        if (zone_avail[static_cast<size_t>(z)] > 0) ++accessible;
        const int req = stats.outcome.zone_requests[static_cast<size_t>(z)];
        const int served = stats.outcome.zone_served[static_cast<size_t>(z)];
        if (req == 0 || served >= 0.9 * req) ++fulfilled;
    }
    for (auto m : stats.outcome.matched) matched += m;

    row.accessibility = static_cast<double>(accessible) / grid.n_operational();
    row.fulfillment = static_cast<double>(fulfilled) / grid.n_operational();
    row.utilization = matched / L;
    row.rebalancing_rate = stats.repositioning / L;
    row.pickup_distance_m = stats.outcome.mean_pickup_dist * meters_per_unit;
    row.no_requests = stats.outcome.total_requests == 0;
    row.service_rate = row.no_requests ? 1.0
                                       : static_cast<double>(stats.outcome.served) /
                                             stats.outcome.total_requests;

    row.h = empirical_weighted_log_density(zone_avail, spec, grid);
    row.gap = row.h - spec.bound_c;
    return row;
}

MetricsRow aggregate_rows(const std::vector<MetricsRow>& rows) {
    MetricsRow agg;
    if (rows.empty()) return agg;
    double pickup_weight = 0.0;
    for (const MetricsRow& r : rows) {
        agg.accessibility += r.accessibility;
        agg.fulfillment += r.fulfillment;
        agg.utilization += r.utilization;
        agg.rebalancing_rate += r.rebalancing_rate;
        agg.service_rate += r.service_rate;
        agg.h += r.h;
        agg.gap += r.gap;
        if (r.pickup_distance_m > 0.0) {
            agg.pickup_distance_m += r.pickup_distance_m;
            pickup_weight += 1.0;
        }
    }
    const double n = static_cast<double>(rows.size());
    agg.accessibility /= n;
    agg.fulfillment /= n;
    agg.utilization /= n;
    agg.rebalancing_rate /= n;
    agg.service_rate /= n;
    agg.h /= n;
    agg.gap /= n;
    if (pickup_weight > 0.0) agg.pickup_distance_m /= pickup_weight;
    return agg;
}

RunMetrics run_once(const RunConfig& cfg, const ScenarioSpec& scenario, const CityGrid& grid,
                    const DemandPattern& demand, const AccessSpec& spec, Rng rng) {
    const double alpha = cfg.init_alpha.value_or(scenario.init_alpha);
    FleetInit init = init_fleet(alpha, demand.dist[0], scenario.fleet_size, grid, rng);
    FleetState fleet = std::move(init.fleet);
    const double L = scenario.fleet_size;

    RunMetrics run;
    for (int t = 0; t < demand.T; ++t) {
        std::vector<Action> actions;
        std::vector<RebalanceOrder> orders;
        const std::vector<Action>* actions_ptr = nullptr;
        const std::vector<RebalanceOrder>* orders_ptr = nullptr;

        switch (cfg.kind) {
            case PolicyKind::None:
                break;
            case PolicyKind::Mfc:
            case PolicyKind::Mfrl: {
                const GridMeasure mu_l = fleet.histogram(grid);
                actions = policy_infer(*cfg.policy, t, mu_l, demand.dist[static_cast<size_t>(t)],
                                       fleet.pos, false);
                actions_ptr = &actions;
                break;
            }
            case PolicyKind::LpStatic: {
                const GridMeasure means = demand.request_means(t);
                const StaticRebalanceResult res =
                    static_rebalance(means.mass, demand.od_at(t), grid.n_zones());
                orders = orders_from_rates(res.rates, grid.n_zones(), 1.0, rng);
                orders_ptr = &orders;
                break;
            }
            case PolicyKind::LpDynamic: {
                const int n = grid.n_zones();
                std::vector<double> supply(static_cast<size_t>(n), 0.0);
                for (const Vec2& s : fleet.pos) supply[static_cast<size_t>(grid.zone_of(s))] += 1.0;
                const GridMeasure means = demand.request_means(t);
                std::vector<double> v_ex(static_cast<size_t>(n)), v_d(static_cast<size_t>(n));
                std::vector<double> incoming(static_cast<size_t>(n), 0.0);
                const auto& od = demand.od_at(t);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        incoming[static_cast<size_t>(j)] +=
                            means[i] * od[static_cast<size_t>(i) * n + j];
                for (int i = 0; i < n; ++i) {
                    v_ex[static_cast<size_t>(i)] = std::max(0.0, supply[static_cast<size_t>(i)] - means[i]);
                    v_d[static_cast<size_t>(i)] =
                        std::max(0.0, 0.8 * supply[static_cast<size_t>(i)] - incoming[static_cast<size_t>(i)]);
                }
                const DynamicRebalanceResult res = dynamic_rebalance(v_ex, v_d, n);
                if (res.feasible) {
                    orders = orders_from_counts(res.num, n);
                    orders_ptr = &orders;
                }
                break;
            }
        }

        const FleetStepStats stats = advance_fleet(fleet, t, demand, grid, scenario.match,
                                                   scenario.noise, actions_ptr, orders_ptr, rng);
        run.steps.push_back(step_metrics(stats, grid, spec, L, scenario.meters_per_unit));
    }
    run.aggregate = aggregate_rows(run.steps);
    return run;
}

}  // namespace

MetricsReport evaluate(const RunConfig& cfg, const ScenarioSpec& scenario, const CityGrid& grid,
                       const DemandPattern& demand) {
    if ((cfg.kind == PolicyKind::Mfc || cfg.kind == PolicyKind::Mfrl) && cfg.policy == nullptr)
        throw std::invalid_argument("evaluate: mean-field policy requires a checkpoint");
    if (cfg.policy != nullptr && cfg.policy->grid_m() != grid.M())
        throw std::invalid_argument("evaluate: checkpoint grid size does not match scenario");

    const AccessSpec spec = AccessSpec::from_grid(grid, cfg.p_fraction,
                                                  cfg.p_fraction == 0.0 ? 0.0 : cfg.lambda);
    MetricsReport report;
    report.runs.resize(static_cast<size_t>(cfg.runs));
    const Rng root(cfg.seed);

    const int workers = worker_count(cfg.runs);
#pragma omp parallel for schedule(dynamic) num_threads(workers) if (workers > 1)
    for (int r = 0; r < cfg.runs; ++r)
        report.runs[static_cast<size_t>(r)] =
            run_once(cfg, scenario, grid, demand, spec, root.fork(static_cast<std::uint64_t>(r)));

    // Aggregate across runs.
    std::vector<MetricsRow> aggs;
    for (const RunMetrics& run : report.runs) aggs.push_back(run.aggregate);
    report.mean = aggregate_rows(aggs);
    auto var_of = [&](auto field) {
        double acc = 0.0;
        for (const MetricsRow& r : aggs) {
            const double d = r.*field - report.mean.*field;
            acc += d * d;
        }
        return aggs.size() > 1 ? std::sqrt(acc / (aggs.size() - 1)) : 0.0;
    };
    report.stddev.accessibility = var_of(&MetricsRow::accessibility);
    report.stddev.fulfillment = var_of(&MetricsRow::fulfillment);
    report.stddev.utilization = var_of(&MetricsRow::utilization);
    report.stddev.rebalancing_rate = var_of(&MetricsRow::rebalancing_rate);
    report.stddev.pickup_distance_m = var_of(&MetricsRow::pickup_distance_m);
    report.stddev.service_rate = var_of(&MetricsRow::service_rate);
    report.stddev.h = var_of(&MetricsRow::h);
    report.stddev.gap = var_of(&MetricsRow::gap);

    report.min_gap = std::numeric_limits<double>::infinity();
    for (const RunMetrics& run : report.runs)
        for (size_t t = 1; t < run.steps.size(); ++t)
            report.min_gap = std::min(report.min_gap, run.steps[t].gap);
    return report;
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    f << "run,step,metric,value\n";
    const auto emit = [&](int run, int step, const char* name, double value) {
        f << run << ',' << step << ',' << name << ',' << value << '\n';
    };
    for (size_t r = 0; r < report.runs.size(); ++r) {
        const auto& steps = report.runs[r].steps;
        for (size_t t = 0; t < steps.size(); ++t) {
            const MetricsRow& row = steps[t];
            emit(static_cast<int>(r), static_cast<int>(t), "accessibility", row.accessibility);
            emit(static_cast<int>(r), static_cast<int>(t), "fulfillment", row.fulfillment);
            emit(static_cast<int>(r), static_cast<int>(t), "utilization", row.utilization);
            emit(static_cast<int>(r), static_cast<int>(t), "rebalancing_rate", row.rebalancing_rate);
            emit(static_cast<int>(r), static_cast<int>(t), "pickup_distance_m", row.pickup_distance_m);
            emit(static_cast<int>(r), static_cast<int>(t), "service_rate", row.service_rate);
            emit(static_cast<int>(r), static_cast<int>(t), "h", row.h);
            emit(static_cast<int>(r), static_cast<int>(t), "constraint_gap", row.gap);
        }
    }
}

namespace {

nlohmann::json row_to_json(const MetricsRow& row) {
    return {{"accessibility", row.accessibility},
            {"fulfillment", row.fulfillment},
            {"utilization", row.utilization},
            {"rebalancing_rate", row.rebalancing_rate},
            {"pickup_distance_m", row.pickup_distance_m},
            {"service_rate", row.service_rate},
            {"h", row.h},
            {"constraint_gap", row.gap}};
}

}  // namespace

void write_summary_json(const std::string& path, const MetricsReport& report,
                        const std::string& policy_name) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["policy"] = policy_name;
    j["runs"] = report.runs.size();
    j["mean"] = row_to_json(report.mean);
    j["stddev"] = row_to_json(report.stddev);
    j["min_constraint_gap"] = report.min_gap;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_summary_json: cannot open " + path);
    f << j.dump(2) << "\n";
}

void mark_pareto_front(std::vector<SweepEntry>& entries) {
    for (SweepEntry& e : entries) {
        e.pareto_front = true;
        for (const SweepEntry& other : entries) {
            if (&other == &e) continue;
            const bool dominates =
                other.report.mean.accessibility >= e.report.mean.accessibility &&
                other.report.mean.utilization >= e.report.mean.utilization &&
                (other.report.mean.accessibility > e.report.mean.accessibility ||
                 other.report.mean.utilization > e.report.mean.utilization);
            if (dominates) {
                e.pareto_front = false;
                break;
            }
        }
    }
}

void write_sweep_csv(const std::string& path, const std::vector<SweepEntry>& entries) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_sweep_csv: cannot open " + path);
    f << "p_fraction,variant,accessibility,accessibility_std,fulfillment,utilization,"
         "utilization_std,rebalancing_rate,pickup_distance_m,service_rate,min_constraint_gap,"
         "pareto_front\n";
    for (const SweepEntry& e : entries) {
        f << e.p_fraction << ',' << e.variant << ',' << e.report.mean.accessibility << ','
          << e.report.stddev.accessibility << ',' << e.report.mean.fulfillment << ','
          << e.report.mean.utilization << ',' << e.report.stddev.utilization << ','
          << e.report.mean.rebalancing_rate << ',' << e.report.mean.pickup_distance_m << ','
          << e.report.mean.service_rate << ',' << e.report.min_gap << ','
          << (e.pareto_front ? 1 : 0) << '\n';
    }
}

}  // namespace mf
