#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "meanfleet/demand.hpp"
#include "meanfleet/grid.hpp"
#include "meanfleet/rng.hpp"

namespace mf {

struct MatchConfig {
    int minutes_per_step = 20;
    int max_wait_minutes = 5;
    double max_pickup_dist = 0.062;  // unit coords, ~850 m at the default scale
    double ot_cruise_cost = 2.0;
    int ot_neighbor_radius = 1;      // self + 8 grid neighbors

    void validate(const CityGrid& grid) const;
};

// Minimum-total-distance bipartite assignment among pairs closer than
// max_pickup_dist. Maximum cardinality is the primary objective, total
// distance secondary. Returns (vehicle index, rider index) pairs.
std::vector<std::pair<int, int>> assign_minute(std::span<const Vec2> vehicles,
                                               std::span<const Vec2> riders,
                                               const MatchConfig& cfg);

struct StepOutcome {
    // Per idle vehicle, input order.
    std::vector<std::uint8_t> matched;
    std::vector<int> dest_zone;       // -1 when unmatched
    std::vector<double> pickup_dist;  // unit coords; 0 when unmatched

    // Per zone, over vehicles idle at step start.
    std::vector<int> zone_idle;
    std::vector<int> zone_matched;
    std::vector<int> zone_requests;
    std::vector<int> zone_served;
    std::vector<double> zone_match_frac;  // 0 where zone_idle == 0

    int total_requests = 0;
    int served = 0;
    double mean_pickup_dist = 0.0;  // over matches; 0 when none
};

// One 20-minute interval of the exact matching module: Poisson request
// arrivals per zone spread uniformly over the minutes, a bipartite
// assignment round every minute, riders expiring after max_wait_minutes,
// matched vehicles leaving the idle pool, leftovers lost at step end.
// `request_means` are expected request counts per zone (delta_t * L).
StepOutcome simulate_matching_step(std::span<const Vec2> idle_pos,
                                   const GridMeasure& request_means,
                                   const std::vector<double>& od_kernel, const CityGrid& grid,
                                   const MatchConfig& cfg, Rng& rng);

// Transport arc cost between a supply and a demand zone: Euclidean center
// distance plus a deterministic sub-physical tie-breaking term (< 1e-7, about
// a millimeter at city scale). Lattice symmetry otherwise leaves the optimal
// per-zone split ambiguous across equally cheap arcs; the jitter pins a
// unique transport plan that every exact solver reproduces.
inline double ot_arc_cost(int supply_zone, int demand_zone, const CityGrid& grid) {
    std::uint64_t z = (static_cast<std::uint64_t>(supply_zone) << 32) ^
                      static_cast<std::uint64_t>(demand_zone) ^ 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    const double jitter = static_cast<double>((z ^ (z >> 31)) >> 11) * 0x1.0p-53;
    return dist(grid.center(supply_zone), grid.center(demand_zone)) + 1e-7 * jitter;
}

// Per-zone matching probability from the optimal-transport view: exact
// min-cost flow between available supply and demand over the neighbor
// network with cruising arcs; m_i = matched outflow of zone i / mu_a_i.
std::vector<double> ot_match_prob(const GridMeasure& mu_a, const GridMeasure& delta,
                                  const MatchConfig& cfg, const CityGrid& grid);

// One labeled observation of the matching process.
struct MatchSample {
    Vec2 s;
    int t = 0;
    std::shared_ptr<const GridMeasure> mu_a;
    std::shared_ptr<const GridMeasure> delta;
    std::uint8_t label = 0;
};

// One uniformly chosen idle-at-step-start vehicle per occupied operational
// zone, labeled by whether it matched during the step.
std::vector<MatchSample> collect_samples(const StepOutcome& outcome,
                                         std::span<const Vec2> idle_pos, int t,
                                         std::shared_ptr<const GridMeasure> mu_a,
                                         std::shared_ptr<const GridMeasure> delta,
                                         const CityGrid& grid, Rng& rng);

}  // namespace mf
