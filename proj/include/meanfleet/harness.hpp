#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meanfleet/baselines.hpp"
#include "meanfleet/demand.hpp"
#include "meanfleet/grid.hpp"
#include "meanfleet/matching.hpp"
#include "meanfleet/mfcore.hpp"
#include "meanfleet/objective.hpp"
#include "meanfleet/policy.hpp"
#include "meanfleet/scenario.hpp"

namespace mf {

enum class PolicyKind : std::uint8_t { None, Mfc, Mfrl, LpStatic, LpDynamic };

PolicyKind policy_kind_from_string(const std::string& s);
std::string to_string(PolicyKind k);

// One simulated step of the discrete fleet: repositioning moves (per-vehicle
// actions or zone-level orders), the exact matching module for the idle
// pool, cruising noise. Repositioning vehicles are unavailable for matching
// and rejoin the pool next step.
struct FleetStepStats {
    StepOutcome outcome;            // per idle vehicle
    std::vector<int> idle_indices;  // fleet indices idle at step start
    std::vector<Vec2> idle_pos;     // their start positions
    int repositioning = 0;
    GridMeasure mu_start;           // start-of-step histogram, normalized
    GridMeasure mu_available;       // idle-vehicle measure, mass = count / L
};

FleetStepStats advance_fleet(FleetState& fleet, int t, const DemandPattern& demand,
                             const CityGrid& grid, const MatchConfig& match_cfg,
                             const NoiseModel& noise, const std::vector<Action>* actions,
                             const std::vector<RebalanceOrder>* orders, Rng& rng);

// Evaluation metric values of one step or one aggregate.
struct MetricsRow {
    double accessibility = 0.0;     // fraction of operational zones with >= 1 available vehicle
    double fulfillment = 0.0;       // fraction of operational zones with >= 90% requests served
    double utilization = 0.0;       // matched / L
    double rebalancing_rate = 0.0;  // repositioning / L
    double pickup_distance_m = 0.0; // mean over matches, meters
    double service_rate = 0.0;      // served / total (1.0 when no requests, flagged)
    double h = 0.0;                 // accessibility functional of the empirical available dist
    double gap = 0.0;               // h - C
    bool no_requests = false;
};

struct RunMetrics {
    std::vector<MetricsRow> steps;
    MetricsRow aggregate;  // means over steps (pickup distance over matches)
};

struct MetricsReport {
    std::vector<RunMetrics> runs;
    MetricsRow mean;
    MetricsRow stddev;
    double min_gap = 0.0;  // over runs and steps >= 1
};

struct RunConfig {
    PolicyKind kind = PolicyKind::None;
    const PolicyNet* policy = nullptr;  // Mfc / Mfrl
    int runs = 10;
    std::uint64_t seed = 0;
    double p_fraction = 0.0;
    double lambda = 1.0;
    std::optional<double> init_alpha;   // overrides the scenario value
};

MetricsReport evaluate(const RunConfig& cfg, const ScenarioSpec& scenario, const CityGrid& grid,
                       const DemandPattern& demand);

void write_metrics_csv(const std::string& path, const MetricsReport& report);
void write_summary_json(const std::string& path, const MetricsReport& report,
                        const std::string& policy_name);

struct SweepEntry {
    double p_fraction = 0.0;
    std::string variant;
    MetricsReport report;
    bool pareto_front = false;  // non-dominated in (accessibility, utilization)
};

// Marks Pareto-front membership (maximizing accessibility and utilization)
// among the given entries.
void mark_pareto_front(std::vector<SweepEntry>& entries);

void write_sweep_csv(const std::string& path, const std::vector<SweepEntry>& entries);

// Worker pool width: MEANFLEET_THREADS when set, hardware concurrency
// otherwise, never above `cap`.
int worker_count(int cap);

}  // namespace mf
