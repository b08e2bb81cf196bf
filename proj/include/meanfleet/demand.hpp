#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "meanfleet/grid.hpp"

namespace mf {

// Exogenous demand pattern: per step t a demand rate d_t (expected requests
// per step for a fleet of L vehicles), a normalized spatial demand
// distribution, and a row-stochastic origin-destination kernel over zones.
// The OD kernel is stored once when it is shared by all steps.
struct DemandPattern {
    int T = 0;
    int n_zones = 0;
    std::vector<double> rate;                 // d_t >= 0, size T
    std::vector<GridMeasure> dist;            // normalized spatial distribution per step
    std::vector<std::vector<double>> od;      // row-major n_zones x n_zones; size 1 if shared
    bool od_shared = false;

    std::span<const double> od_row(int t, int zone) const {
        const auto& k = od_shared ? od[0] : od[static_cast<size_t>(t)];
        return {k.data() + static_cast<size_t>(zone) * n_zones, static_cast<size_t>(n_zones)};
    }

    const std::vector<double>& od_at(int t) const { return od_shared ? od[0] : od[static_cast<size_t>(t)]; }

    // Absolute demand measure delta_t = (d_t / L) * dist_t.
    GridMeasure demand_measure(int t, double fleet_size) const {
        GridMeasure d = dist[static_cast<size_t>(t)];
        d.scale(rate[static_cast<size_t>(t)] / fleet_size);
        return d;
    }

    // Expected request counts per zone at step t.
    GridMeasure request_means(int t) const {
        GridMeasure d = dist[static_cast<size_t>(t)];
        d.scale(rate[static_cast<size_t>(t)]);
        return d;
    }

    void validate(const CityGrid& grid, double tol = 1e-9) const {
        if (static_cast<int>(rate.size()) != T || static_cast<int>(dist.size()) != T)
            throw std::invalid_argument("DemandPattern: per-step array size mismatch");
        if (n_zones != grid.n_zones()) throw std::invalid_argument("DemandPattern: zone count mismatch");
        const size_t n_od = od_shared ? 1 : static_cast<size_t>(T);
        if (od.size() != n_od) throw std::invalid_argument("DemandPattern: OD kernel count mismatch");
        for (int t = 0; t < T; ++t) {
            if (rate[static_cast<size_t>(t)] < 0.0) throw std::invalid_argument("DemandPattern: negative rate");
            const auto& d = dist[static_cast<size_t>(t)];
            if (d.size() != n_zones || !d.is_probability(tol))
                throw std::invalid_argument("DemandPattern: demand dist is not a probability measure");
            for (int i = 0; i < n_zones; ++i)
                if (d[i] > 0.0 && !grid.operational(i))
                    throw std::invalid_argument("DemandPattern: demand mass on non-operational zone");
        }
        for (const auto& kernel : od) {
            if (kernel.size() != static_cast<size_t>(n_zones) * n_zones)
                throw std::invalid_argument("DemandPattern: OD kernel shape mismatch");
            for (int i = 0; i < n_zones; ++i) {
                double row = 0.0;
                for (int j = 0; j < n_zones; ++j) row += kernel[static_cast<size_t>(i) * n_zones + j];
                if (std::abs(row - 1.0) > tol)
                    throw std::invalid_argument("DemandPattern: OD row does not sum to 1");
            }
        }
    }

    std::string to_json() const;
    static DemandPattern from_json(const std::string& text);
};

}  // namespace mf
