#include "meanfleet/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace mf {

using nlohmann::json;

CityGrid ScenarioSpec::make_grid() const {
    if (operational_mask.empty())
        return CityGrid::square(grid_m, meters_per_unit);
    return CityGrid(grid_m, operational_mask, meters_per_unit);
}

ScenarioSpec ScenarioSpec::desk_city() {
    ScenarioSpec s;
    s.grid_m = 10;
    s.steps = 18;
    // Density matters: the empirical weighted-entropy estimator needs around
    // twenty available vehicles per operational zone before its lower tail
    // stops crossing the accessibility bound, so the desk city keeps roughly
    // the full-scale vehicles-per-zone ratio.
    s.fleet_size = 1500;
    // Desk-scale downtown: zones keep the ~550 m side of the full-scale
    // city, so the one-ring transport neighborhood and the 850 m pickup
    // radius stay consistent with each other.
    s.meters_per_unit = 5500.0;
    s.match.max_pickup_dist = 850.0 / s.meters_per_unit;

    // 20 of 100 zones non-operational: a river, a park, a lake, an
    // industrial strip.
    s.operational_mask.assign(100, 1);
    auto block = [&](int ix0, int ix1, int iy0, int iy1) {
        for (int iy = iy0; iy <= iy1; ++iy)
            for (int ix = ix0; ix <= ix1; ++ix) s.operational_mask[static_cast<size_t>(iy) * 10 + ix] = 0;
    };
    block(3, 3, 2, 7);   // river, 6 zones
    block(6, 7, 6, 7);   // park, 4 zones
    block(0, 1, 8, 9);   // lake, 4 zones
    block(6, 9, 0, 0);   // industrial strip, 4 zones
    block(0, 1, 0, 0);   // freight yard, 2 zones

    // Evening-peak rate profile over 18 steps.
    auto profile = [](double scale, double peak_step, double width) {
        std::vector<double> r(18);
        for (int t = 0; t < 18; ++t) {
            const double z = (t - peak_step) / width;
            r[static_cast<size_t>(t)] = scale * (0.35 + 0.65 * std::exp(-0.5 * z * z));
        }
        return r;
    };
    s.components.push_back({{0.70, 0.65}, 0.07, profile(750.0, 11.0, 5.0)});
    s.components.push_back({{0.30, 0.55}, 0.09, profile(420.0, 12.5, 6.0)});
    s.components.push_back({{0.55, 0.20}, 0.06, profile(310.0, 9.0, 5.5)});

    // Destinations pull toward the two main centers.
    s.od_attraction.assign(100, 0.0);
    for (int iy = 0; iy < 10; ++iy) {
        for (int ix = 0; ix < 10; ++ix) {
            const double x = (ix + 0.5) / 10.0, y = (iy + 0.5) / 10.0;
            const double d1 = (x - 0.70) * (x - 0.70) + (y - 0.65) * (y - 0.65);
            const double d2 = (x - 0.30) * (x - 0.30) + (y - 0.55) * (y - 0.55);
            s.od_attraction[static_cast<size_t>(iy) * 10 + ix] =
                0.35 + std::exp(-d1 / 0.045) + 0.6 * std::exp(-d2 / 0.045);
        }
    }
    s.od_decay_length = 0.3;
    return s;
}

namespace {

std::vector<double> od_kernel_rows(const ScenarioSpec& spec, const CityGrid& grid) {
    const int n = grid.n_zones();
    std::vector<double> kernel(static_cast<size_t>(n) * n, 0.0);
    std::vector<double> attraction(static_cast<size_t>(n), 1.0);
    if (!spec.od_attraction.empty()) {
        if (static_cast<int>(spec.od_attraction.size()) != n)
            throw std::invalid_argument("ScenarioSpec: od_attraction size mismatch");
        attraction = spec.od_attraction;
    }
    for (int i = 0; i < n; ++i) {
        const Vec2 ci = grid.center(i);
        double total = 0.0;
        double* row = kernel.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            if (!grid.operational(j)) continue;
            const double w = attraction[static_cast<size_t>(j)] *
                             std::exp(-dist(ci, grid.center(j)) / spec.od_decay_length);
            row[j] = w;
            total += w;
        }
        if (total <= 0.0) throw std::logic_error("ScenarioSpec: OD row has no destinations");
        for (int j = 0; j < n; ++j) row[j] /= total;
    }
    return kernel;
}

}  // namespace

DemandPattern build_demand(const ScenarioSpec& spec, const CityGrid& grid) {
    const int n = grid.n_zones();
    const int T = spec.steps;
    if (spec.components.empty()) throw std::invalid_argument("build_demand: no demand components");
    for (const auto& c : spec.components) {
        if (static_cast<int>(c.rate.size()) != T)
            throw std::invalid_argument("build_demand: component rate curve length mismatch");
        for (double r : c.rate)
            if (r < 0.0) throw std::invalid_argument("build_demand: negative rate");
    }

    // Per-component spatial shapes restricted to operational zones.
    std::vector<GridMeasure> shapes;
    for (const auto& c : spec.components) {
        GridMeasure g = gaussian_kernel(c.center, c.spread, grid);
        for (int i = 0; i < n; ++i)
            if (!grid.operational(i)) g[i] = 0.0;
        g.normalize();
        shapes.push_back(std::move(g));
    }

    DemandPattern out;
    out.T = T;
    out.n_zones = n;
    for (int t = 0; t < T; ++t) {
        double d = 0.0;
        GridMeasure mix(n);
        for (size_t k = 0; k < shapes.size(); ++k) {
            const double r = spec.components[k].rate[static_cast<size_t>(t)];
            d += r;
            for (int i = 0; i < n; ++i) mix[i] += r * shapes[k][i];
        }
        if (d > 0.0) {
            mix.normalize();
        } else {
            mix = GridMeasure::uniform_operational(grid);
        }
        out.rate.push_back(d);
        out.dist.push_back(std::move(mix));
    }
    out.od_shared = true;
    out.od.push_back(od_kernel_rows(spec, grid));

    switch (spec.variant.kind) {
        case DemandVariant::Kind::Base:
            break;
        case DemandVariant::Kind::GaussNoise: {
            Rng rng(spec.variant.seed);
            for (double& r : out.rate) r = std::max(0.0, r * (1.0 + spec.variant.noise_rel * rng.normal()));
            break;
        }
        case DemandVariant::Kind::Permuted: {
            Rng rng(spec.variant.seed);
            for (int t = T - 1; t > 0; --t)
                std::swap(out.rate[static_cast<size_t>(t)],
                          out.rate[static_cast<size_t>(rng.uniform_int(t + 1))]);
            break;
        }
        case DemandVariant::Kind::Shock:
            return apply_shock(out, spec.variant.shock_zones, spec.variant.shock_factor,
                               spec.variant.shock_begin, spec.variant.shock_end);
    }
    return out;
}

DemandPattern apply_shock(const DemandPattern& pattern, const std::vector<int>& region,
                          double factor, int begin_step, int end_step) {
    if (region.empty()) throw std::invalid_argument("apply_shock: empty region");
    if (factor < 1.0) throw std::invalid_argument("apply_shock: factor must be >= 1");
    if (begin_step < 0 || end_step > pattern.T || begin_step > end_step)
        throw std::invalid_argument("apply_shock: window outside horizon");

    DemandPattern out = pattern;
    std::vector<char> in_region(static_cast<size_t>(pattern.n_zones), 0);
    for (int z : region) in_region[static_cast<size_t>(z)] = 1;

    for (int t = begin_step; t < end_step; ++t) {
        GridMeasure& d = out.dist[static_cast<size_t>(t)];
        double inside = 0.0;
        for (int i = 0; i < pattern.n_zones; ++i)
            if (in_region[static_cast<size_t>(i)]) inside += d[i];
        const double scale = (1.0 - inside) + factor * inside;
        for (int i = 0; i < pattern.n_zones; ++i) {
            if (in_region[static_cast<size_t>(i)]) d[i] *= factor;
            d[i] /= scale;
        }
        out.rate[static_cast<size_t>(t)] *= scale;  // out-of-region demand unchanged
    }
    return out;
}

FleetInit init_fleet(double alpha, const GridMeasure& deltabar0, int fleet_size,
                     const CityGrid& grid, Rng& rng) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("init_fleet: alpha outside [0,1]");
    const int n = grid.n_zones();
    FleetInit out;

    const GridMeasure uniform = GridMeasure::uniform_operational(grid);
    out.mu0_limit = GridMeasure(n);
    for (int i = 0; i < n; ++i)
        out.mu0_limit[i] = alpha * uniform[i] + (1.0 - alpha) * deltabar0[i];

    std::vector<int> op_zones;
    for (int i = 0; i < n; ++i)
        if (grid.operational(i)) op_zones.push_back(i);

    out.fleet.pos.reserve(static_cast<size_t>(fleet_size));
    out.fleet.status.assign(static_cast<size_t>(fleet_size), VehicleStatus::Cruising);
    const double half = 0.5 * grid.cell_width();
    for (int v = 0; v < fleet_size; ++v) {
        int zone;
        if (rng.bernoulli(alpha))
            zone = op_zones[static_cast<size_t>(rng.uniform_int(static_cast<int>(op_zones.size())))];
        else
            zone = rng.sample_discrete(deltabar0.mass);
        const Vec2 c = grid.center(zone);
        out.fleet.pos.push_back({c.x + rng.uniform(-half, half), c.y + rng.uniform(-half, half)});
    }
    out.mu0_empirical = out.fleet.histogram(grid);
    return out;
}

std::string ScenarioSpec::to_json() const {
    json j;
    j["schema_version"] = 1;
    j["grid_m"] = grid_m;
    json mask = json::array();
    for (auto v : operational_mask) mask.push_back(v ? 1 : 0);
    j["operational_mask"] = std::move(mask);
    j["meters_per_unit"] = meters_per_unit;
    j["steps"] = steps;
    j["fleet_size"] = fleet_size;
    j["init_alpha"] = init_alpha;
    json comps = json::array();
    for (const auto& c : components)
        comps.push_back({{"center", {c.center.x, c.center.y}}, {"spread", c.spread}, {"rate", c.rate}});
    j["components"] = std::move(comps);
    j["od_attraction"] = od_attraction;
    j["od_decay_length"] = od_decay_length;
    const char* kind = "base";
    if (variant.kind == DemandVariant::Kind::GaussNoise) kind = "gauss_noise";
    if (variant.kind == DemandVariant::Kind::Permuted) kind = "permuted";
    if (variant.kind == DemandVariant::Kind::Shock) kind = "shock";
    j["variant"] = {{"kind", kind},
                    {"noise_rel", variant.noise_rel},
                    {"seed", variant.seed},
                    {"shock_zones", variant.shock_zones},
                    {"shock_factor", variant.shock_factor},
                    {"shock_begin", variant.shock_begin},
                    {"shock_end", variant.shock_end}};
    j["noise"] = {{"sigma_r", noise.sigma_r}, {"sigma_m", noise.sigma_m}, {"sigma_c", noise.sigma_c}};
    j["match"] = {{"minutes_per_step", match.minutes_per_step},
                  {"max_wait_minutes", match.max_wait_minutes},
                  {"max_pickup_dist", match.max_pickup_dist},
                  {"ot_cruise_cost", match.ot_cruise_cost},
                  {"ot_neighbor_radius", match.ot_neighbor_radius}};
    return j.dump(2);
}

ScenarioSpec ScenarioSpec::from_json(const std::string& text) {
    const json j = json::parse(text);
    ScenarioSpec s;
    s.grid_m = j.at("grid_m").get<int>();
    for (const auto& v : j.at("operational_mask")) s.operational_mask.push_back(v.get<int>() ? 1 : 0);
    s.meters_per_unit = j.at("meters_per_unit").get<double>();
    s.steps = j.at("steps").get<int>();
    s.fleet_size = j.at("fleet_size").get<int>();
    s.init_alpha = j.at("init_alpha").get<double>();
    for (const auto& c : j.at("components")) {
        DemandComponent dc;
        dc.center = {c.at("center")[0].get<double>(), c.at("center")[1].get<double>()};
        dc.spread = c.at("spread").get<double>();
        dc.rate = c.at("rate").get<std::vector<double>>();
        s.components.push_back(std::move(dc));
    }
    s.od_attraction = j.at("od_attraction").get<std::vector<double>>();
    s.od_decay_length = j.at("od_decay_length").get<double>();
    const auto& v = j.at("variant");
    const std::string kind = v.at("kind").get<std::string>();
    s.variant.kind = kind == "gauss_noise" ? DemandVariant::Kind::GaussNoise
                     : kind == "permuted"  ? DemandVariant::Kind::Permuted
                     : kind == "shock"     ? DemandVariant::Kind::Shock
                                           : DemandVariant::Kind::Base;
    s.variant.noise_rel = v.at("noise_rel").get<double>();
    s.variant.seed = v.at("seed").get<std::uint64_t>();
    s.variant.shock_zones = v.at("shock_zones").get<std::vector<int>>();
    s.variant.shock_factor = v.at("shock_factor").get<double>();
    s.variant.shock_begin = v.at("shock_begin").get<int>();
    s.variant.shock_end = v.at("shock_end").get<int>();
    const auto& nz = j.at("noise");
    s.noise = {nz.at("sigma_r").get<double>(), nz.at("sigma_m").get<double>(),
               nz.at("sigma_c").get<double>()};
    const auto& m = j.at("match");
    s.match.minutes_per_step = m.at("minutes_per_step").get<int>();
    s.match.max_wait_minutes = m.at("max_wait_minutes").get<int>();
    s.match.max_pickup_dist = m.at("max_pickup_dist").get<double>();
    s.match.ot_cruise_cost = m.at("ot_cruise_cost").get<double>();
    s.match.ot_neighbor_radius = m.at("ot_neighbor_radius").get<int>();
    return s;
}

}  // namespace mf
