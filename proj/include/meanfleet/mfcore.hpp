#pragma once

#include <span>
#include <vector>

#include "meanfleet/demand.hpp"
#include "meanfleet/grid.hpp"
#include "meanfleet/rng.hpp"

namespace mf {

// Repositioning odds plus movement vector.
struct Action {
    double p = 0.0;   // in [0,1]
    Vec2 u{};         // each component in [-1,1]
};

enum class VehicleStatus : std::uint8_t { Repositioning, Matched, Cruising };

// Standard deviations of the idiosyncratic Gaussian noise per transition
// branch, in unit coordinates.
struct NoiseModel {
    double sigma_r = 0.0175;
    double sigma_m = 0.0;
    double sigma_c = 0.0175;
};

struct MeanFieldDecomposition {
    GridMeasure mu_r;
    GridMeasure mu_m;
    GridMeasure mu_c;

    GridMeasure mu_a() const {
        GridMeasure a = mu_m;
        for (size_t i = 0; i < a.mass.size(); ++i) a.mass[i] += mu_c.mass[i];
        return a;
    }
};

// Per-axis cell weights of a 1-D normal truncated to [0,1]: CDF differences
// over the M cell intervals plus their (pre-truncation) total.
struct AxisWeights {
    std::vector<double> w;
    double total = 0.0;
};
AxisWeights axis_cdf_weights(double center, double sigma, int M);

// Discretized truncated Gaussian: mass per zone proportional to the product
// of 1-D CDF differences over the cell extents, renormalized over the grid.
// sigma = 0 degenerates to a point mass in the containing zone; centers
// outside the unit square are clamped to the boundary.
GridMeasure gaussian_kernel(Vec2 center, double sigma, const CityGrid& grid);

// mu_r = p.mu, mu_m = m.(1-p).mu, mu_c = (1-m).(1-p).mu.
// Rejects probabilities outside [0,1] beyond 1e-9.
MeanFieldDecomposition decompose(const GridMeasure& mu, std::span<const double> p,
                                 std::span<const double> m);

// Precomputed pieces of the transition that do not depend on the policy:
// the cruising kernel matrix and, when sigma_m > 0, the matched smear matrix.
class TransitionCache {
  public:
    TransitionCache(const CityGrid& grid, const NoiseModel& noise);

    // Row-major n x n; row i = gaussian_kernel(center_i, sigma).
    const std::vector<double>& cruise() const { return cruise_; }
    const std::vector<double>* matched_smear() const { return has_smear_ ? &smear_ : nullptr; }
    const NoiseModel& noise() const { return noise_; }

  private:
    NoiseModel noise_;
    std::vector<double> cruise_;
    std::vector<double> smear_;
    bool has_smear_ = false;
};

// Deterministic mean-field transition: mass from every zone splits into the
// repositioning / matched / cruising branches and lands through the
// corresponding kernels. Conserves total mass to numerical precision.
// The parallel variant and the serial reference compute identical sums.
GridMeasure mean_field_step(const CityGrid& grid, const GridMeasure& mu,
                            const std::vector<double>& od_kernel, std::span<const double> p,
                            std::span<const double> ux, std::span<const double> uy,
                            std::span<const double> m, const TransitionCache& cache);
GridMeasure mean_field_step_serial(const CityGrid& grid, const GridMeasure& mu,
                                   const std::vector<double>& od_kernel, std::span<const double> p,
                                   std::span<const double> ux, std::span<const double> uy,
                                   std::span<const double> m, const TransitionCache& cache);

// Convenience overload taking per-zone Actions.
GridMeasure mean_field_step(const CityGrid& grid, const GridMeasure& mu,
                            const std::vector<double>& od_kernel, std::span<const Action> actions,
                            std::span<const double> m, const TransitionCache& cache);

struct VehicleStep {
    Vec2 s;
    VehicleStatus status;
};

// One sampled transition of a discrete vehicle. Matched vehicles land at a
// uniform point inside the destination zone drawn from the OD row; positions
// clamp at the unit-square boundary.
VehicleStep vehicle_step(const Vec2& s, const Action& a, double match_prob,
                         std::span<const double> od_row, const NoiseModel& noise,
                         const CityGrid& grid, Rng& rng);

}  // namespace mf
