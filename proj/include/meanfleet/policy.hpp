#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meanfleet/matching.hpp"
#include "meanfleet/mfcore.hpp"
#include "meanfleet/nn.hpp"
#include "meanfleet/objective.hpp"

namespace mf {

// One network for the whole time-dependent policy profile: input
// [s (2), t/T (1), mu masses (n), demand dist (n)] -> 3 tanh outputs,
// p = (o1+1)/2, u = (o2, o3).
struct PolicyNetConfig {
    int grid_m = 25;
    int horizon = 18;
    std::vector<int> hidden = {512, 256, 256, 64};
    bool batch_norm = true;
};

class PolicyNet {
  public:
    PolicyNet() = default;
    PolicyNet(const PolicyNetConfig& cfg, Rng& rng);

    int grid_m() const { return grid_m_; }
    int horizon() const { return horizon_; }
    nn::Mlp& net() { return net_; }
    const nn::Mlp& net() const { return net_; }

    void save(const std::string& path) const;
    static PolicyNet load(const std::string& path);

  private:
    nn::Mlp net_;
    int grid_m_ = 0;
    int horizon_ = 0;
};

// Matching process plugged into the rollout: closed-form optimal transport,
// a learned classifier (differentiable w.r.t. the available measure, weights
// frozen), or fixed per-zone statistics for evaluation.
struct MatchModel {
    enum class Kind : std::uint8_t { OT, Learned, Oracle };

    Kind kind = Kind::OT;
    MatchConfig ot_cfg{};
    const nn::Mlp* classifier = nullptr;
    std::vector<std::vector<double>> oracle_m;  // size 1 = shared across steps

    static MatchModel ot(const MatchConfig& cfg) {
        MatchModel m;
        m.kind = Kind::OT;
        m.ot_cfg = cfg;
        return m;
    }
    static MatchModel learned(const nn::Mlp* clf, const MatchConfig& cfg) {
        MatchModel m;
        m.kind = Kind::Learned;
        m.classifier = clf;
        m.ot_cfg = cfg;
        return m;
    }
    static MatchModel oracle(std::vector<std::vector<double>> per_step_m) {
        MatchModel m;
        m.kind = Kind::Oracle;
        m.oracle_m = std::move(per_step_m);
        return m;
    }

    std::vector<double> eval_plain(int t, const GridMeasure& mu_a, const GridMeasure& delta,
                                   const CityGrid& grid) const;
};

// Constant tensors of the lifted rollout, built once per grid/demand/noise.
struct RolloutConsts {
    ad::Tensor cruise_t;              // n x n, transposed cruising kernel
    ad::Tensor smear_t;               // n x n, transposed matched smear (sigma_m > 0)
    bool has_smear = false;
    std::vector<ad::Tensor> phi_t;    // per step (or shared), n x n transposed OD kernel
    bool phi_shared = false;
    ad::Tensor centers2;              // n x 2 zone centers
    ad::Tensor cx, cy;                // n x 1
    ad::Tensor weights;               // n x 1 accessibility weights
    ad::Tensor uniform_op;            // n x 1 fallback distribution
    NoiseModel noise;

    static RolloutConsts build(const CityGrid& grid, const DemandPattern& demand,
                               const NoiseModel& noise, const AccessSpec& spec);
};

struct RolloutOptions {
    double explore_sigma = 0.0;
    bool bn_train = true;
    // Fixed per-step, per-zone actions overriding the network (tests and
    // reference rollouts). All three must be set together.
    const std::vector<std::vector<double>>* forced_p = nullptr;
    const std::vector<std::vector<double>>* forced_ux = nullptr;
    const std::vector<std::vector<double>>* forced_uy = nullptr;
    // Overrides only the repositioning odds while the network still drives
    // the movement (placement curriculum). Negative = off.
    double override_p = -1.0;
};

struct RolloutResult {
    double objective = 0.0;
    bool violated = false;
    double min_gap = 0.0;
    std::vector<double> step_reward;            // r_0 .. r_{T-1}
    std::vector<double> step_h;                 // h_1 .. h_T
    std::vector<GridMeasure> mu;                // mu_0 .. mu_T
    std::vector<std::vector<double>> p, ux, uy, m;
    ad::Var objective_var;                      // valid while the tape lives
};

// Full lifted rollout on the tape: policy at all zone midpoints, matching
// model, reward and log-barrier accumulation, deterministic mean-field
// transition. `binding` may be null when the policy is forced.
RolloutResult lifted_rollout(ad::Tape& tape, PolicyNet* policy, const nn::MlpBinding* binding,
                             const GridMeasure& mu0, const DemandPattern& demand,
                             double fleet_size, const MatchModel& match, const AccessSpec& spec,
                             const CityGrid& grid, const RolloutConsts& consts,
                             const RolloutOptions& opt, Rng* explore_rng);

// Tape-free reference rollout over the same dynamics (plain kernels,
// serial). Used by tests and by empirical-vs-limit comparisons.
RolloutResult rollout_reference(PolicyNet* policy, const GridMeasure& mu0,
                                const DemandPattern& demand, double fleet_size,
                                const MatchModel& match, const AccessSpec& spec,
                                const CityGrid& grid, const NoiseModel& noise,
                                const RolloutOptions& opt);

struct TrainConfig {
    int epochs = 1000;
    double lr = 5e-4;
    double weight_decay = 5e-4;
    double explore_sigma0 = 0.5;
    double explore_decay = 0.02;   // per epoch, sigma_k = sigma0 * exp(-decay*k)
    int improvement_window = 100;  // epochs per early-stopping window
    double min_improvement = 0.05; // relative improvement resetting patience
    int patience = 1;
    double clip_norm = 1.0;
    // Batch statistics adapt for this many epochs, then batch norm freezes
    // into its inference-mode affine. Rollout inputs shift across time steps,
    // so a policy trained purely on batch statistics does not survive the
    // switch to the frozen statistics at inference. Checkpoint selection only
    // considers frozen-phase epochs.
    int bn_freeze_epoch = 50;
    // Placement curriculum: repositioning odds pinned to force_p_value for
    // the first force_p_epochs so the movement head learns where repositioned
    // mass pays off before the odds head can switch repositioning off (the
    // all-cruise local optimum). Checkpoint selection starts after release.
    int force_p_epochs = 0;
    double force_p_value = 0.35;
    // Entropy smoothing used by the training barrier when positive. The
    // metric epsilon (1e-10) makes the barrier gradient at an empty zone
    // ~1/eps, which after global clipping erases every other signal; a
    // coarser training smoothing keeps the direction informative. At a
    // spread-out optimum the two h values agree to ~1e-3.
    double barrier_train_eps = 0.0;
    // Barrier continuation: the bound ramps linearly from below the floor of
    // h up to C (+ bound_safety) over this many epochs, so training starts
    // inside a loose feasible region and tracks the tightening one instead of
    // fighting the violation penalty from a concentrated initialization.
    // Checkpoints only count once the bound reaches its target.
    int bound_anneal_epochs = 0;
    // Trains against C + bound_safety; evaluation audits the true C. The
    // margin absorbs the downward bias of the empirical entropy estimate on
    // a finite fleet.
    double bound_safety = 0.0;
    std::uint64_t seed = 0;
};

struct TrainLogEntry {
    int epoch = 0;
    double objective = 0.0;
    double min_gap = 0.0;
    double sigma = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    std::vector<TrainLogEntry> log;
    double best_objective = 0.0;
    int best_epoch = -1;
    bool failed = false;  // objective never left the violation penalty range
};

// Gradient ascent on the lifted log-barrier objective with AdamW, gradient
// clipping, exponentially decaying truncated exploration noise, windowed
// early stopping. The policy is updated in place; the best-objective
// parameters are restored on return.
TrainResult train_policy(PolicyNet& policy, const TrainConfig& cfg, const GridMeasure& mu0,
                         const DemandPattern& demand, double fleet_size, const MatchModel& match,
                         const AccessSpec& spec, const CityGrid& grid, const NoiseModel& noise);

void write_train_log_csv(const std::string& path, const std::vector<TrainLogEntry>& log);

// Batched forward pass for a fleet (BN eval mode, no exploration).
std::vector<Action> policy_infer(const PolicyNet& policy, int t, const GridMeasure& mu,
                                 const GridMeasure& deltabar, std::span<const Vec2> positions,
                                 bool parallel = true);

}  // namespace mf
