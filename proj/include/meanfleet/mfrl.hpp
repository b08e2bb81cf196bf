#pragma once

#include <deque>
#include <string>
#include <vector>

#include "meanfleet/harness.hpp"
#include "meanfleet/matching.hpp"
#include "meanfleet/nn.hpp"
#include "meanfleet/policy.hpp"
#include "meanfleet/scenario.hpp"

namespace mf {

// Ring buffer of per-episode matching observations.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(int capacity = 10) : capacity_(capacity) {}

    void add_episode(std::vector<MatchSample> episode) {
        episodes_.push_back(std::move(episode));
        while (static_cast<int>(episodes_.size()) > capacity_) episodes_.pop_front();
    }

    int capacity() const { return capacity_; }
    int n_episodes() const { return static_cast<int>(episodes_.size()); }
    size_t n_samples() const {
        size_t n = 0;
        for (const auto& e : episodes_) n += e.size();
        return n;
    }
    const std::deque<std::vector<MatchSample>>& episodes() const { return episodes_; }

  private:
    int capacity_;
    std::deque<std::vector<MatchSample>> episodes_;
};

struct ClassifierConfig {
    std::vector<int> hidden = {2056, 1024, 256, 64, 8};
    double lr = 1e-4;
    double weight_decay = 5e-4;
    int max_epochs = 1000;
    int patience = 30;
    double min_improvement = 0.01;
    double train_fraction = 0.9;
    std::uint64_t seed = 0;

    // Table widths target the 25x25 grid; smaller grids scale each width by
    // the input-dimension ratio (floor 8).
    static ClassifierConfig for_grid(int grid_m);
};

nn::Mlp make_classifier(int n_zones, const ClassifierConfig& cfg, Rng& rng);

struct ClassifierTrainResult {
    bool degenerate = false;  // single-class buffer; constant model returned
    double best_val_loss = 0.0;
    double val_accuracy = 0.0;
    int epochs_run = 0;
};

// Cross-entropy training with a deterministic 90/10 split, batch size
// stepped by buffer depth (8 / 16 / 32), patience-30 early stopping with a
// 1% minimum relative improvement. Restores the best-validation model.
ClassifierTrainResult train_classifier(nn::Mlp& classifier, const ReplayBuffer& buffer,
                                       const ClassifierConfig& cfg);

struct ProtocolConfig {
    int episodes = 10;
    double p_fraction = 0.0;
    double lambda = 1.0;
    PolicyNetConfig policy_net;
    TrainConfig policy_train;
    ClassifierConfig classifier;
    std::uint64_t env_seed = 0;
    std::string artifact_dir;  // empty disables per-episode persistence
};

struct EpisodeRecord {
    int episode = 0;
    double realized_reward_mean = 0.0;  // per-step mean, simulator matches
    double realized_reward_sum = 0.0;
    double predicted_objective = 0.0;   // model-based training objective
    double min_gap = 0.0;
    int samples = 0;
    bool policy_failed = false;
};

struct ProtocolResult {
    PolicyNet policy;
    nn::Mlp classifier;
    ReplayBuffer buffer{10};
    std::vector<EpisodeRecord> episodes;
};

// Episodic model-based loop: optimize the policy under the current learned
// matching model, execute it on the discrete fleet, collect one sample per
// occupied operational zone per step, retrain the classifier on the buffer.
ProtocolResult run_protocol(const ProtocolConfig& cfg, const ScenarioSpec& scenario,
                            const CityGrid& grid, const DemandPattern& demand);

// Realized reward of one executed step (Eq.-17 form on empirical measures).
double realized_step_reward(int matched, int fleet_size, const GridMeasure& mu_available,
                            const GridMeasure& deltabar, const CityGrid& grid);

void write_episode_csv(const std::string& path, const std::vector<EpisodeRecord>& episodes);
void write_buffer_jsonl(const std::string& path, const std::vector<MatchSample>& episode);

}  // namespace mf
