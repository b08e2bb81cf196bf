#pragma once

#include <string>
#include <vector>

#include "meanfleet/demand.hpp"
#include "meanfleet/grid.hpp"
#include "meanfleet/matching.hpp"
#include "meanfleet/mfcore.hpp"
#include "meanfleet/rng.hpp"

namespace mf {

// Positions and statuses of L discrete vehicles.
struct FleetState {
    std::vector<Vec2> pos;
    std::vector<VehicleStatus> status;

    int size() const { return static_cast<int>(pos.size()); }

    GridMeasure histogram(const CityGrid& grid) const {
        GridMeasure h(grid.n_zones());
        const double w = pos.empty() ? 0.0 : 1.0 / static_cast<double>(pos.size());
        for (const Vec2& s : pos) h[grid.zone_of(s)] += w;
        return h;
    }
};

struct DemandComponent {
    Vec2 center;
    double spread = 0.1;            // spatial Gaussian sigma
    std::vector<double> rate;       // expected requests per step, size T
};

struct DemandVariant {
    enum class Kind : std::uint8_t { Base, GaussNoise, Permuted, Shock };
    Kind kind = Kind::Base;
    double noise_rel = 0.05;        // GaussNoise: relative rate perturbation
    std::uint64_t seed = 0;         // GaussNoise / Permuted
    std::vector<int> shock_zones;   // Shock
    double shock_factor = 1.0;
    int shock_begin = 0, shock_end = 0;  // step window [begin, end)
};

struct ScenarioSpec {
    int grid_m = 10;
    std::vector<std::uint8_t> operational_mask;  // empty = all operational
    double meters_per_unit = 13750.0;
    int steps = 18;
    int fleet_size = 1000;
    double init_alpha = 0.0;  // fraction of uniformly initialized vehicles
    std::vector<DemandComponent> components;
    std::vector<double> od_attraction;  // per zone; empty = uniform
    double od_decay_length = 0.3;
    DemandVariant variant;
    NoiseModel noise{};
    MatchConfig match{};

    CityGrid make_grid() const;

    std::string to_json() const;
    static ScenarioSpec from_json(const std::string& text);

    // Compact imbalanced city: 10x10 grid, ~20% non-operational zones, three
    // demand components with an evening-peak rate curve.
    static ScenarioSpec desk_city();
};

// Demand pattern from the spec: normalized Gaussian-mixture spatial
// distribution restricted to operational zones, summed component rates, and
// an attraction/exponential-decay OD kernel. Variants perturb the base
// pattern deterministically from their seed.
DemandPattern build_demand(const ScenarioSpec& spec, const CityGrid& grid);

// Multiplies demand mass in `region` by `factor` within the step window,
// renormalizes the spatial distribution, and rescales the rate so absolute
// out-of-region demand is unchanged.
DemandPattern apply_shock(const DemandPattern& pattern, const std::vector<int>& region,
                          double factor, int begin_step, int end_step);

struct FleetInit {
    FleetState fleet;
    GridMeasure mu0_limit;      // the mixture itself (training object)
    GridMeasure mu0_empirical;  // position histogram (evaluation object)
};

// Vehicle zones sampled from alpha * uniform-operational + (1-alpha) *
// deltabar_0, positions uniform within the zone.
FleetInit init_fleet(double alpha, const GridMeasure& deltabar0, int fleet_size,
                     const CityGrid& grid, Rng& rng);

}  // namespace mf
