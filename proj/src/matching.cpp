#include "meanfleet/matching.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "meanfleet/flow.hpp"

namespace mf {

void MatchConfig::validate(const CityGrid& grid) const {
    if (minutes_per_step < 1) throw std::invalid_argument("MatchConfig: minutes_per_step < 1");
    if (max_wait_minutes < 1) throw std::invalid_argument("MatchConfig: max_wait_minutes < 1");
    if (max_pickup_dist <= 0.0) throw std::invalid_argument("MatchConfig: max_pickup_dist <= 0");
    if (ot_neighbor_radius < 0) throw std::invalid_argument("MatchConfig: negative neighborhood");
    const double max_neighbor_dist =
        std::sqrt(2.0) * ot_neighbor_radius * grid.cell_width();
    if (ot_cruise_cost <= max_neighbor_dist)
        throw std::invalid_argument("MatchConfig: cruise cost must exceed neighbor distance");
}

std::vector<std::pair<int, int>> assign_minute(std::span<const Vec2> vehicles,
                                               std::span<const Vec2> riders,
                                               const MatchConfig& cfg) {
    const int nv = static_cast<int>(vehicles.size());
    const int nr = static_cast<int>(riders.size());
    if (nv == 0 || nr == 0) return {};

    // Candidate pairs inside the pickup radius, found through a coarse
    // spatial hash so dense minutes stay cheap.
    const double r = cfg.max_pickup_dist;
    const int buckets = std::max(1, static_cast<int>(1.0 / std::max(r, 1e-6)));
    const double bw = 1.0 / buckets;
    std::vector<std::vector<int>> rider_bucket(static_cast<size_t>(buckets) * buckets);
    auto bucket_of = [&](const Vec2& p) {
        int bx = std::min(buckets - 1, static_cast<int>(p.x / bw));
        int by = std::min(buckets - 1, static_cast<int>(p.y / bw));
        return by * buckets + bx;
    };
    for (int j = 0; j < nr; ++j) rider_bucket[static_cast<size_t>(bucket_of(riders[j]))].push_back(j);

    FlowNetwork net(nv + nr + 2);
    const int source = nv + nr;
    const int sink = nv + nr + 1;
    for (int i = 0; i < nv; ++i) net.add_arc(source, i, 1, 0.0);
    for (int j = 0; j < nr; ++j) net.add_arc(nv + j, sink, 1, 0.0);

    struct PairArc {
        int arc;
        int vehicle;
        int rider;
    };
    std::vector<PairArc> pair_arcs;
    for (int i = 0; i < nv; ++i) {
        const Vec2& v = vehicles[static_cast<size_t>(i)];
        const int bx = std::min(buckets - 1, static_cast<int>(v.x / bw));
        const int by = std::min(buckets - 1, static_cast<int>(v.y / bw));
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = bx + dx, ny = by + dy;
                if (nx < 0 || ny < 0 || nx >= buckets || ny >= buckets) continue;
                for (int j : rider_bucket[static_cast<size_t>(ny * buckets + nx)]) {
                    const double d = dist(v, riders[static_cast<size_t>(j)]);
                    if (d < cfg.max_pickup_dist)
                        pair_arcs.push_back({net.add_arc(i, nv + j, 1, d), i, j});
                }
            }
        }
    }
    if (pair_arcs.empty()) return {};

    net.solve(source, sink);

    std::vector<std::pair<int, int>> out;
    for (const PairArc& pa : pair_arcs)
        if (net.flow(pa.arc) > 0) out.emplace_back(pa.vehicle, pa.rider);
    return out;
}

namespace {

struct Rider {
    Vec2 pos;
    int zone;
    int arrival;
    bool served = false;
};

}  // namespace

StepOutcome simulate_matching_step(std::span<const Vec2> idle_pos,
                                   const GridMeasure& request_means,
                                   const std::vector<double>& od_kernel, const CityGrid& grid,
                                   const MatchConfig& cfg, Rng& rng) {
    const int n = grid.n_zones();
    const int nv = static_cast<int>(idle_pos.size());
    StepOutcome out;
    out.matched.assign(static_cast<size_t>(nv), 0);
    out.dest_zone.assign(static_cast<size_t>(nv), -1);
    out.pickup_dist.assign(static_cast<size_t>(nv), 0.0);
    out.zone_idle.assign(static_cast<size_t>(n), 0);
    out.zone_matched.assign(static_cast<size_t>(n), 0);
    out.zone_requests.assign(static_cast<size_t>(n), 0);
    out.zone_served.assign(static_cast<size_t>(n), 0);
    out.zone_match_frac.assign(static_cast<size_t>(n), 0.0);

    std::vector<int> vehicle_zone(static_cast<size_t>(nv));
    for (int i = 0; i < nv; ++i) {
        vehicle_zone[static_cast<size_t>(i)] = grid.zone_of(idle_pos[static_cast<size_t>(i)]);
        ++out.zone_idle[static_cast<size_t>(vehicle_zone[static_cast<size_t>(i)])];
    }

    // Request arrivals.
    std::vector<Rider> riders;
    const double half = 0.5 * grid.cell_width();
    for (int z = 0; z < n; ++z) {
        const int count = rng.poisson(request_means[z]);
        out.zone_requests[static_cast<size_t>(z)] = count;
        out.total_requests += count;
        const Vec2 c = grid.center(z);
        for (int k = 0; k < count; ++k) {
            Rider rd;
            rd.pos = {c.x + rng.uniform(-half, half), c.y + rng.uniform(-half, half)};
            rd.zone = z;
            rd.arrival = rng.uniform_int(cfg.minutes_per_step);
            riders.push_back(rd);
        }
    }

    std::vector<int> idle_ids(static_cast<size_t>(nv));
    for (int i = 0; i < nv; ++i) idle_ids[static_cast<size_t>(i)] = i;

    double pickup_sum = 0.0;
    for (int minute = 0; minute < cfg.minutes_per_step; ++minute) {
        std::vector<int> waiting;
        for (int j = 0; j < static_cast<int>(riders.size()); ++j) {
            const Rider& rd = riders[static_cast<size_t>(j)];
            if (!rd.served && rd.arrival <= minute && minute < rd.arrival + cfg.max_wait_minutes)
                waiting.push_back(j);
        }
        if (waiting.empty() || idle_ids.empty()) continue;

        std::vector<Vec2> vpos(idle_ids.size());
        for (size_t k = 0; k < idle_ids.size(); ++k)
            vpos[k] = idle_pos[static_cast<size_t>(idle_ids[k])];
        std::vector<Vec2> rpos(waiting.size());
        for (size_t k = 0; k < waiting.size(); ++k)
            rpos[k] = riders[static_cast<size_t>(waiting[k])].pos;

        const auto pairs = assign_minute(vpos, rpos, cfg);
        std::vector<char> vehicle_gone(idle_ids.size(), 0);
        for (const auto& [vi, rj] : pairs) {
            const int vehicle = idle_ids[static_cast<size_t>(vi)];
            Rider& rd = riders[static_cast<size_t>(waiting[static_cast<size_t>(rj)])];
            rd.served = true;
            vehicle_gone[static_cast<size_t>(vi)] = 1;
            out.matched[static_cast<size_t>(vehicle)] = 1;
            out.dest_zone[static_cast<size_t>(vehicle)] =
                rng.sample_discrete(std::span<const double>(
                    od_kernel.data() + static_cast<size_t>(rd.zone) * n, static_cast<size_t>(n)));
            const double d = dist(idle_pos[static_cast<size_t>(vehicle)], rd.pos);
            out.pickup_dist[static_cast<size_t>(vehicle)] = d;
            pickup_sum += d;
            ++out.served;
            ++out.zone_served[static_cast<size_t>(rd.zone)];
            ++out.zone_matched[static_cast<size_t>(vehicle_zone[static_cast<size_t>(vehicle)])];
        }
        std::vector<int> still;
        still.reserve(idle_ids.size());
        for (size_t k = 0; k < idle_ids.size(); ++k)
            if (!vehicle_gone[k]) still.push_back(idle_ids[k]);
        idle_ids.swap(still);
    }

    for (int z = 0; z < n; ++z)
        if (out.zone_idle[static_cast<size_t>(z)] > 0)
            out.zone_match_frac[static_cast<size_t>(z)] =
                static_cast<double>(out.zone_matched[static_cast<size_t>(z)]) /
                out.zone_idle[static_cast<size_t>(z)];
    if (out.served > 0) out.mean_pickup_dist = pickup_sum / out.served;
    return out;
}

std::vector<double> ot_match_prob(const GridMeasure& mu_a, const GridMeasure& delta,
                                  const MatchConfig& cfg, const CityGrid& grid) {
    const int n = grid.n_zones();
    if (mu_a.size() != n || delta.size() != n)
        throw std::invalid_argument("ot_match_prob: measure size mismatch");
    constexpr double unit = 1e9;  // masses in integer units of 1e-9
    std::vector<std::int64_t> supply(static_cast<size_t>(n)), demand(static_cast<size_t>(n));
    std::int64_t total_supply = 0, total_demand = 0;
    for (int i = 0; i < n; ++i) {
        if (mu_a[i] < 0.0 || delta[i] < 0.0)
            throw std::invalid_argument("ot_match_prob: negative mass");
        supply[static_cast<size_t>(i)] = std::llround(mu_a[i] * unit);
        demand[static_cast<size_t>(i)] = std::llround(delta[i] * unit);
        total_supply += supply[static_cast<size_t>(i)];
        total_demand += demand[static_cast<size_t>(i)];
    }
    std::vector<double> m(static_cast<size_t>(n), 0.0);
    if (total_supply == 0 || total_demand == 0) return m;

    // Nodes: source, per-zone supply, per-zone demand, sink, dummy sink.
    const int source = 0;
    const int sink = 2 * n + 1;
    const int dummy = 2 * n + 2;
    auto supply_node = [n](int i) { return 1 + i; };
    auto demand_node = [n](int j) { return 1 + n + j; };
    FlowNetwork net(2 * n + 3);

    std::vector<std::vector<int>> matched_arcs(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::int64_t cap = supply[static_cast<size_t>(i)];
        if (cap == 0) continue;
        net.add_arc(source, supply_node(i), cap, 0.0);
        for (int j : grid.neighborhood(i, cfg.ot_neighbor_radius)) {
            if (demand[static_cast<size_t>(j)] == 0) continue;
            matched_arcs[static_cast<size_t>(i)].push_back(
                net.add_arc(supply_node(i), demand_node(j), cap, ot_arc_cost(i, j, grid)));
        }
        net.add_arc(supply_node(i), dummy, cap, cfg.ot_cruise_cost);
    }
    for (int j = 0; j < n; ++j)
        if (demand[static_cast<size_t>(j)] > 0)
            net.add_arc(demand_node(j), sink, demand[static_cast<size_t>(j)], 0.0);
    net.add_arc(dummy, sink, total_supply, 0.0);
    if (total_demand > total_supply)
        net.add_arc(source, sink, total_demand - total_supply, 0.0);  // excess demand bypass

    net.solve(source, sink, std::max(total_supply, total_demand));

    for (int i = 0; i < n; ++i) {
        if (supply[static_cast<size_t>(i)] == 0) continue;
        std::int64_t matched = 0;
        for (int a : matched_arcs[static_cast<size_t>(i)]) matched += net.flow(a);
        double mi = static_cast<double>(matched) / static_cast<double>(supply[static_cast<size_t>(i)]);
        m[static_cast<size_t>(i)] = mi < 0.0 ? 0.0 : (mi > 1.0 ? 1.0 : mi);
    }
    return m;
}

std::vector<MatchSample> collect_samples(const StepOutcome& outcome,
                                         std::span<const Vec2> idle_pos, int t,
                                         std::shared_ptr<const GridMeasure> mu_a,
                                         std::shared_ptr<const GridMeasure> delta,
                                         const CityGrid& grid, Rng& rng) {
    const int n = grid.n_zones();
    std::vector<std::vector<int>> by_zone(static_cast<size_t>(n));
    for (int i = 0; i < static_cast<int>(idle_pos.size()); ++i)
        by_zone[static_cast<size_t>(grid.zone_of(idle_pos[static_cast<size_t>(i)]))].push_back(i);

    std::vector<MatchSample> samples;
    for (int z = 0; z < n; ++z) {
        if (!grid.operational(z) || by_zone[static_cast<size_t>(z)].empty()) continue;
        const auto& ids = by_zone[static_cast<size_t>(z)];
        const int pick = ids[static_cast<size_t>(rng.uniform_int(static_cast<int>(ids.size())))];
        MatchSample s;
        s.s = idle_pos[static_cast<size_t>(pick)];
        s.t = t;
        s.mu_a = mu_a;
        s.delta = delta;
        s.label = outcome.matched[static_cast<size_t>(pick)];
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace mf
