#pragma once

#include <span>
#include <vector>

#include "meanfleet/grid.hpp"

namespace mf {

// Accessibility constraint specification: binary zone weights (1 on
// operational zones), entropy smoothing, and the lower bound C as a
// fraction of the attainable maximum.
struct AccessSpec {
    std::vector<double> w;
    double eps = 1e-10;
    double p_fraction = 0.0;
    double lambda = 1.0;
    double bound_c = 0.0;

    static AccessSpec from_grid(const CityGrid& grid, double p_fraction, double lambda = 1.0);
};

// Jensen-Shannon divergence with base-2 logarithms, range [0,1].
double js_divergence(const GridMeasure& p, const GridMeasure& q);

struct RewardValue {
    double r = 0.0;        // normalized to [0,1]
    double unnormalized = 0.0;
    bool degenerate = false;  // mu_a vanished; uniform fallback used
};

// r = (mu_m(S) - D_JS(normalized mu_a || deltabar) + 1) / 2.
RewardValue reward(const GridMeasure& mu, const GridMeasure& deltabar, std::span<const double> p,
                   std::span<const double> m, const CityGrid& grid);

// Weighted log-density functional of a probability measure over zones:
// h = sum_i w_i * log(mass_i / cell_area + eps) * cell_area. Concave,
// maximized by the uniform-over-operational distribution.
double weighted_log_density(const GridMeasure& prob, const AccessSpec& spec, const CityGrid& grid);

// Same functional from finite-sample zone counts, estimated with Jeffreys
// pseudocounts (n_i + 1/2). The raw plug-in histogram puts log(eps) on any
// zone that happens to draw zero vehicles, which says more about the sample
// size than about coverage; the smoothed estimator is consistent and keeps
// h comparable between the limit object and a finite fleet.
double empirical_weighted_log_density(std::span<const int> counts, const AccessSpec& spec,
                                      const CityGrid& grid);

struct AccessibilityValue {
    double h = 0.0;
    bool degenerate = false;
};

// h of the normalized available-vehicle distribution under per-zone
// repositioning probabilities. Vanishing mu_a falls back to the uniform
// operational distribution and flags the step.
AccessibilityValue accessibility(const GridMeasure& mu, std::span<const double> p,
                                 const AccessSpec& spec, const CityGrid& grid);

// Closed-form maximum of the accessibility functional:
// (N_op / M^2) * log(M^2 / N_op + eps).
double h_max(const AccessSpec& spec, const CityGrid& grid);

// One step of a mean-field rollout as needed by the objective.
struct RolloutStep {
    GridMeasure mu;
    GridMeasure deltabar;
    std::vector<double> p;
    std::vector<double> m;
};

struct BarrierValue {
    double value = 0.0;
    bool violated = false;
    double min_gap = 0.0;
    std::vector<double> step_h;      // h_1 .. h_T
    std::vector<double> step_reward; // r_0 .. r_{T-1}
};

// Log-barrier objective over a rollout: sum_t r_t + lambda*log(h_{t+1} - C).
// Gaps at steps 1..T-1 use the available distribution under that step's
// policy; the terminal gap uses mu_T directly. Nonpositive gaps switch the
// objective to the large negative penalty -1e6*(1 + |gap|) summed over
// violating steps and set the violation flag.
BarrierValue barrier_objective(std::span<const RolloutStep> steps, const GridMeasure& mu_terminal,
                               const AccessSpec& spec, const CityGrid& grid);

}  // namespace mf
