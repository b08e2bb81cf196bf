#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "meanfleet/mfrl.hpp"

using namespace mf;

namespace {

std::shared_ptr<const GridMeasure> shared_measure(GridMeasure g) {
    return std::make_shared<const GridMeasure>(std::move(g));
}

// Samples whose label is 1 exactly when the demand measure at the vehicle's
// zone is positive: a rule the classifier can separate.
std::vector<MatchSample> separable_episode(const CityGrid& grid, Rng& rng, int samples) {
    const int n = grid.n_zones();
    std::vector<MatchSample> out;
    GridMeasure mu_a(n);
    for (int i = 0; i < n; ++i) mu_a[i] = rng.uniform(0.0, 0.05);
    GridMeasure delta(n);
    for (int i = 0; i < n; ++i) delta[i] = rng.bernoulli(0.5) ? 0.4 : 0.0;
    auto mu_shared = shared_measure(mu_a);
    auto delta_shared = shared_measure(delta);
    for (int k = 0; k < samples; ++k) {
        const int zone = rng.uniform_int(n);
        const Vec2 c = grid.center(zone);
        MatchSample s;
        s.s = {c.x + rng.uniform(-0.04, 0.04), c.y + rng.uniform(-0.04, 0.04)};
        s.t = k % 4;
        s.mu_a = mu_shared;
        s.delta = delta_shared;
        s.label = delta[grid.zone_of(s.s)] > 0.0 ? 1 : 0;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("replay buffer: evicts the oldest episode beyond capacity") {
    ReplayBuffer buffer(3);
    const CityGrid grid = CityGrid::square(2);
    for (int e = 0; e < 5; ++e) {
        std::vector<MatchSample> episode(static_cast<size_t>(e + 1));
        for (auto& s : episode) {
            s.mu_a = shared_measure(GridMeasure(grid.n_zones()));
            s.delta = shared_measure(GridMeasure(grid.n_zones()));
        }
        buffer.add_episode(std::move(episode));
    }
    CHECK(buffer.n_episodes() == 3);
    CHECK(buffer.episodes().front().size() == 3);  // episodes 1,2 evicted
    CHECK(buffer.episodes().back().size() == 5);
    CHECK(buffer.n_samples() == 12);
}

TEST_CASE("classifier config: widths scale with the input dimension below M=25") {
    const ClassifierConfig full = ClassifierConfig::for_grid(25);
    CHECK(full.hidden == std::vector<int>{2056, 1024, 256, 64, 8});
    const ClassifierConfig desk = ClassifierConfig::for_grid(10);
    REQUIRE(desk.hidden.size() == 5);
    for (size_t i = 0; i < desk.hidden.size(); ++i) {
        CHECK(desk.hidden[i] <= full.hidden[i]);
        CHECK(desk.hidden[i] >= 8);
    }
    CHECK(desk.hidden[0] == doctest::Approx(2056.0 * 202.0 / 1252.0).epsilon(0.01));
}

TEST_CASE("train_classifier: separates a demand-threshold rule at 95% accuracy") {
    const CityGrid grid = CityGrid::square(4);
    Rng rng(7);
    ReplayBuffer buffer(10);
    for (int e = 0; e < 6; ++e) buffer.add_episode(separable_episode(grid, rng, 300));

    ClassifierConfig cfg = ClassifierConfig::for_grid(4);
    cfg.hidden = {64, 32};
    cfg.lr = 3e-4;
    cfg.max_epochs = 400;
    cfg.seed = 3;
    Rng init(11);
    nn::Mlp clf = make_classifier(grid.n_zones(), cfg, init);
    const ClassifierTrainResult result = train_classifier(clf, buffer, cfg);
    INFO("val loss ", result.best_val_loss, " acc ", result.val_accuracy, " epochs ",
         result.epochs_run);
    CHECK_FALSE(result.degenerate);
    CHECK(result.val_accuracy >= 0.95);
}

TEST_CASE("train_classifier: single-class buffers yield a flagged constant model") {
    const CityGrid grid = CityGrid::square(3);
    Rng rng(9);
    ReplayBuffer buffer(10);
    std::vector<MatchSample> episode;
    auto mu = shared_measure(GridMeasure(grid.n_zones(), 0.1));
    auto delta = shared_measure(GridMeasure(grid.n_zones(), 0.2));
    for (int k = 0; k < 50; ++k) {
        MatchSample s;
        s.s = {rng.uniform(0, 1), rng.uniform(0, 1)};
        s.mu_a = mu;
        s.delta = delta;
        s.label = 0;
        episode.push_back(std::move(s));
    }
    buffer.add_episode(std::move(episode));

    ClassifierConfig cfg = ClassifierConfig::for_grid(3);
    cfg.hidden = {16};
    Rng init(21);
    nn::Mlp clf = make_classifier(grid.n_zones(), cfg, init);
    const ClassifierTrainResult result = train_classifier(clf, buffer, cfg);
    CHECK(result.degenerate);

    ad::Tensor x(8, clf.input_dim());
    Rng probe(5);
    for (double& v : x.v) v = probe.uniform(0, 1);
    const ad::Tensor y = clf.forward_plain(x, false);
    for (double v : y.v) CHECK(v <= 0.1);
}

TEST_CASE("train_classifier: deterministic given the seed") {
    const CityGrid grid = CityGrid::square(4);
    Rng rng(31);
    ReplayBuffer buffer(10);
    for (int e = 0; e < 3; ++e) buffer.add_episode(separable_episode(grid, rng, 120));

    ClassifierConfig cfg = ClassifierConfig::for_grid(4);
    cfg.hidden = {32, 16};
    cfg.max_epochs = 40;
    cfg.seed = 8;
    auto run = [&]() {
        Rng init(1);
        nn::Mlp clf = make_classifier(grid.n_zones(), cfg, init);
        return train_classifier(clf, buffer, cfg);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.best_val_loss == b.best_val_loss);
    CHECK(a.epochs_run == b.epochs_run);
    CHECK(a.val_accuracy == b.val_accuracy);
}

TEST_CASE("run_protocol: single episode runs end to end and persists artifacts") {
    ScenarioSpec scen = ScenarioSpec::desk_city();
    scen.grid_m = 4;
    scen.operational_mask.assign(16, 1);
    scen.operational_mask[5] = 0;
    scen.steps = 3;
    scen.fleet_size = 120;
    scen.od_attraction.clear();
    for (auto& c : scen.components) {
        c.rate.assign(3, 30.0);
    }
    const CityGrid grid = scen.make_grid();
    const DemandPattern demand = build_demand(scen, grid);

    ProtocolConfig cfg;
    cfg.episodes = 1;
    cfg.p_fraction = 0.0;
    cfg.policy_net.grid_m = 4;
    cfg.policy_net.horizon = 3;
    cfg.policy_net.hidden = {16};
    cfg.policy_train.epochs = 5;
    cfg.policy_train.seed = 2;
    cfg.classifier = ClassifierConfig::for_grid(4);
    cfg.classifier.hidden = {16};
    cfg.classifier.max_epochs = 10;
    cfg.env_seed = 3;
    const std::string dir = "/tmp/mf_protocol_test";
    std::filesystem::remove_all(dir);
    cfg.artifact_dir = dir;

    const ProtocolResult result = run_protocol(cfg, scen, grid, demand);
    REQUIRE(result.episodes.size() == 1);
    CHECK(result.buffer.n_episodes() == 1);
    CHECK(result.episodes[0].samples > 0);
    CHECK(result.episodes[0].realized_reward_mean >= 0.0);
    CHECK(result.episodes[0].realized_reward_mean <= 1.0);
    CHECK(std::filesystem::exists(dir + "/episode1_policy.mfnet"));
    CHECK(std::filesystem::exists(dir + "/episode1_classifier.mfnet"));
    CHECK(std::filesystem::exists(dir + "/episode1_buffer.jsonl"));
    CHECK(std::filesystem::exists(dir + "/episodes.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_protocol: per-episode rewards replay identically from the seed tuple") {
    ScenarioSpec scen = ScenarioSpec::desk_city();
    scen.grid_m = 4;
    scen.operational_mask.assign(16, 1);
    scen.steps = 2;
    scen.fleet_size = 80;
    scen.od_attraction.clear();
    for (auto& c : scen.components) c.rate.assign(2, 20.0);
    const CityGrid grid = scen.make_grid();
    const DemandPattern demand = build_demand(scen, grid);

    auto run = [&]() {
        ProtocolConfig cfg;
        cfg.episodes = 2;
        cfg.policy_net.grid_m = 4;
        cfg.policy_net.horizon = 2;
        cfg.policy_net.hidden = {8};
        cfg.policy_train.epochs = 3;
        cfg.policy_train.seed = 5;
        cfg.classifier = ClassifierConfig::for_grid(4);
        cfg.classifier.hidden = {8};
        cfg.classifier.max_epochs = 5;
        cfg.classifier.seed = 6;
        cfg.env_seed = 7;
        return run_protocol(cfg, scen, grid, demand);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.episodes.size() == b.episodes.size());
    for (size_t i = 0; i < a.episodes.size(); ++i) {
        CHECK(a.episodes[i].realized_reward_mean == b.episodes[i].realized_reward_mean);
        CHECK(a.episodes[i].predicted_objective == b.episodes[i].predicted_objective);
        CHECK(a.episodes[i].samples == b.episodes[i].samples);
    }
}
