#include "meanfleet/mfrl.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mf {

using ad::Tape;
using ad::Tensor;
using ad::Var;

ClassifierConfig ClassifierConfig::for_grid(int grid_m) {
    ClassifierConfig cfg;
    if (grid_m >= 25) return cfg;
    const double ratio = static_cast<double>(2 + 2 * grid_m * grid_m) / (2 + 2 * 25 * 25);
    for (int& w : cfg.hidden) w = std::max(8, static_cast<int>(std::lround(w * ratio)));
    return cfg;
}

nn::Mlp make_classifier(int n_zones, const ClassifierConfig& cfg, Rng& rng) {
    nn::MlpConfig mc;
    mc.widths.push_back(2 + 2 * n_zones);
    for (int h : cfg.hidden) mc.widths.push_back(h);
    mc.widths.push_back(1);
    mc.output = nn::OutputActivation::Sigmoid;
    nn::Mlp clf(mc);
    clf.init(rng);
    return clf;
}

namespace {

void fill_features(double* row, const MatchSample& s, int n) {
    row[0] = s.s.x;
    row[1] = s.s.y;
    std::copy(s.mu_a->mass.begin(), s.mu_a->mass.end(), row + 2);
    std::copy(s.delta->mass.begin(), s.delta->mass.end(), row + 2 + n);
}

double bce_plain(const nn::Mlp& clf, const std::vector<const MatchSample*>& set, int n,
                 double* accuracy) {
    if (set.empty()) return 0.0;
    Tensor x(static_cast<int>(set.size()), 2 + 2 * n);
    for (size_t i = 0; i < set.size(); ++i)
        fill_features(x.v.data() + i * static_cast<size_t>(x.cols), *set[i], n);
    const Tensor y = clf.forward_plain(x, false);
    double loss = 0.0;
    int correct = 0;
    for (size_t i = 0; i < set.size(); ++i) {
        const double p = std::clamp(y.v[i], 1e-12, 1.0 - 1e-12);
        const int label = set[i]->label;
        loss -= label ? std::log(p) : std::log(1.0 - p);
        if ((p >= 0.5) == (label == 1)) ++correct;
    }
    if (accuracy) *accuracy = static_cast<double>(correct) / set.size();
    return loss / set.size();
}

}  // namespace

ClassifierTrainResult train_classifier(nn::Mlp& classifier, const ReplayBuffer& buffer,
                                       const ClassifierConfig& cfg) {
    if (buffer.n_episodes() == 0) throw std::invalid_argument("train_classifier: empty buffer");
    const int n = (classifier.input_dim() - 2) / 2;

    std::vector<const MatchSample*> all;
    for (const auto& episode : buffer.episodes())
        for (const MatchSample& s : episode) all.push_back(&s);

    ClassifierTrainResult result;
    bool any0 = false, any1 = false;
    for (const MatchSample* s : all) (s->label ? any1 : any0) = true;
    if (!any0 || !any1) {
        // Single-class data: constant-probability model at the clamped prior.
        const double prior = std::clamp(any1 ? 0.999 : 0.001, 0.01, 0.99);
        auto params = classifier.parameters();
        // Zero the final linear layer; bias = logit(prior).
        const size_t wi = 2 * (classifier.config().widths.size() - 2);
        for (double& v : params[wi]->v) v = 0.0;
        params[wi + 1]->v[0] = std::log(prior / (1.0 - prior));
        result.degenerate = true;
        result.best_val_loss = bce_plain(classifier, all, n, &result.val_accuracy);
        return result;
    }

    Rng rng(cfg.seed);
    for (int i = static_cast<int>(all.size()) - 1; i > 0; --i)
        std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(rng.uniform_int(i + 1))]);
    const int n_train = std::max(1, std::min(static_cast<int>(all.size()) - 1,
                                             static_cast<int>(cfg.train_fraction * all.size())));
    std::vector<const MatchSample*> train(all.begin(), all.begin() + n_train);
    std::vector<const MatchSample*> val(all.begin() + n_train, all.end());

    const int batch = buffer.n_episodes() <= 2 ? 8 : (buffer.n_episodes() <= 5 ? 16 : 32);
    nn::AdamW opt(cfg.lr, cfg.weight_decay);

    nn::Mlp best = classifier;
    double best_val = bce_plain(classifier, val, n, nullptr);
    int patience_used = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (int i = static_cast<int>(train.size()) - 1; i > 0; --i)
            std::swap(train[static_cast<size_t>(i)],
                      train[static_cast<size_t>(rng.uniform_int(i + 1))]);
        for (size_t begin = 0; begin < train.size(); begin += static_cast<size_t>(batch)) {
            const int rows = static_cast<int>(std::min(train.size() - begin, static_cast<size_t>(batch)));
            if (rows < 1) break;
            Tensor x(rows, 2 + 2 * n);
            Tensor y(rows, 1);
            for (int r = 0; r < rows; ++r) {
                fill_features(x.v.data() + static_cast<size_t>(r) * x.cols, *train[begin + r], n);
                y.v[static_cast<size_t>(r)] = train[begin + r]->label;
            }
            Tape tape;
            nn::MlpBinding binding = classifier.bind(tape);
            Var p = classifier.forward_bound(tape, binding, tape.constant(std::move(x)), true);
            Var yc = tape.constant(std::move(y));
            Var one_minus_y = tape.add_scalar(tape.neg(yc), 1.0);
            Var one_minus_p = tape.add_scalar(tape.neg(p), 1.0);
            Var ll = tape.add(tape.mul(yc, tape.log(tape.add_scalar(p, 1e-12))),
                              tape.mul(one_minus_y, tape.log(tape.add_scalar(one_minus_p, 1e-12))));
            Var loss = tape.neg(tape.mean(ll));
            tape.backward(loss);
            std::vector<Tensor> grads = nn::collect_grads(tape, binding);
            opt.step(classifier.parameters(), grads);
        }
        result.epochs_run = epoch + 1;

        const double val_loss = bce_plain(classifier, val, n, nullptr);
        if (val_loss < best_val * (1.0 - cfg.min_improvement)) {
            best_val = val_loss;
            best = classifier;
            patience_used = 0;
        } else {
            if (val_loss < best_val) {
                best_val = val_loss;
                best = classifier;
            }
            if (++patience_used >= cfg.patience) break;
        }
    }

    classifier = best;
    result.best_val_loss = best_val;
    bce_plain(classifier, val, n, &result.val_accuracy);
    return result;
}

double realized_step_reward(int matched, int fleet_size, const GridMeasure& mu_available,
                            const GridMeasure& deltabar, const CityGrid& grid) {
    const double avail_total = mu_available.total();
    GridMeasure bar = mu_available;
    if (avail_total > 0.0)
        bar.scale(1.0 / avail_total);
    else
        bar = GridMeasure::uniform_operational(grid);
    const double unnormalized =
        static_cast<double>(matched) / fleet_size - js_divergence(bar, deltabar);
    return 0.5 * (unnormalized + 1.0);
}

ProtocolResult run_protocol(const ProtocolConfig& cfg, const ScenarioSpec& scenario,
                            const CityGrid& grid, const DemandPattern& demand) {
    const int n = grid.n_zones();
    const double lambda = cfg.p_fraction == 0.0 ? 0.0 : cfg.lambda;
    const AccessSpec spec = AccessSpec::from_grid(grid, cfg.p_fraction, lambda);
    const double alpha = scenario.init_alpha;

    Rng policy_rng(cfg.policy_train.seed);
    Rng clf_rng(cfg.classifier.seed);
    Rng env_root(cfg.env_seed);

    ProtocolResult result;
    result.policy = PolicyNet(cfg.policy_net, policy_rng);
    result.classifier = make_classifier(n, cfg.classifier, clf_rng);  // untrained prior
    result.buffer = ReplayBuffer(10);

    const GridMeasure uniform = GridMeasure::uniform_operational(grid);
    GridMeasure mu0(n);
    for (int i = 0; i < n; ++i)
        mu0[i] = alpha * uniform[i] + (1.0 - alpha) * demand.dist[0][i];

    const bool persist = !cfg.artifact_dir.empty();
    if (persist) std::filesystem::create_directories(cfg.artifact_dir);

    for (int episode = 1; episode <= cfg.episodes; ++episode) {
        // 1. Optimize the policy under the current matching model.
        TrainConfig tc = cfg.policy_train;
        tc.seed = Rng(cfg.policy_train.seed).fork(static_cast<std::uint64_t>(episode)).next_u64();
        const MatchModel model = MatchModel::learned(&result.classifier, scenario.match);
        const TrainResult tr = train_policy(result.policy, tc, mu0, demand,
                                            scenario.fleet_size, model, spec, grid, scenario.noise);
        if (tr.failed)
            throw std::runtime_error("run_protocol: policy training stuck at constraint penalty in episode " +
                                     std::to_string(episode));

        // 2. Execute on the discrete fleet and collect per-zone samples.
        Rng env = env_root.fork(static_cast<std::uint64_t>(episode));
        FleetInit init = init_fleet(alpha, demand.dist[0], scenario.fleet_size, grid, env);
        FleetState fleet = std::move(init.fleet);
        std::vector<MatchSample> samples;
        double reward_sum = 0.0;
        double min_gap = std::numeric_limits<double>::infinity();

        for (int t = 0; t < demand.T; ++t) {
            const GridMeasure mu_l = fleet.histogram(grid);
            const std::vector<Action> actions = policy_infer(
                result.policy, t, mu_l, demand.dist[static_cast<size_t>(t)], fleet.pos, false);
            const FleetStepStats stats = advance_fleet(fleet, t, demand, grid, scenario.match,
                                                       scenario.noise, &actions, nullptr, env);

            int matched = 0;
            for (auto m : stats.outcome.matched) matched += m;
            reward_sum += realized_step_reward(matched, scenario.fleet_size, stats.mu_available,
                                               demand.dist[static_cast<size_t>(t)], grid);
            if (t >= 1) {
                std::vector<int> counts(static_cast<size_t>(grid.n_zones()), 0);
                for (const Vec2& s : stats.idle_pos) ++counts[static_cast<size_t>(grid.zone_of(s))];
                min_gap = std::min(min_gap,
                                   empirical_weighted_log_density(counts, spec, grid) - spec.bound_c);
            }

            auto mu_a_shared = std::make_shared<const GridMeasure>(stats.mu_available);
            auto delta_shared = std::make_shared<const GridMeasure>(
                demand.demand_measure(t, scenario.fleet_size));
            auto step_samples = collect_samples(stats.outcome, stats.idle_pos, t, mu_a_shared,
                                                delta_shared, grid, env);
            samples.insert(samples.end(), step_samples.begin(), step_samples.end());
        }

        EpisodeRecord record;
        record.episode = episode;
        record.realized_reward_sum = reward_sum;
        record.realized_reward_mean = reward_sum / demand.T;
        record.predicted_objective = tr.best_objective;
        record.min_gap = min_gap;
        record.samples = static_cast<int>(samples.size());
        record.policy_failed = tr.failed;

        if (persist) {
            const std::string stem = cfg.artifact_dir + "/episode" + std::to_string(episode);
            result.policy.save(stem + "_policy.mfnet");
            write_buffer_jsonl(stem + "_buffer.jsonl", samples);
        }

        // 3. Retrain the matching classifier on the buffer.
        result.buffer.add_episode(std::move(samples));
        ClassifierConfig cc = cfg.classifier;
        cc.seed = Rng(cfg.classifier.seed).fork(static_cast<std::uint64_t>(episode)).next_u64();
        train_classifier(result.classifier, result.buffer, cc);
        if (persist)
            result.classifier.save(cfg.artifact_dir + "/episode" + std::to_string(episode) +
                                   "_classifier.mfnet");

        result.episodes.push_back(record);
        if (persist) write_episode_csv(cfg.artifact_dir + "/episodes.csv", result.episodes);
    }
    return result;
}

void write_episode_csv(const std::string& path, const std::vector<EpisodeRecord>& episodes) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_episode_csv: cannot open " + path);
    f << "episode,realized_reward_mean,realized_reward_sum,predicted_objective,min_constraint_gap,"
         "samples,policy_failed\n";
    for (const auto& e : episodes)
        f << e.episode << ',' << e.realized_reward_mean << ',' << e.realized_reward_sum << ','
          << e.predicted_objective << ',' << e.min_gap << ',' << e.samples << ','
          << (e.policy_failed ? 1 : 0) << '\n';
}

void write_buffer_jsonl(const std::string& path, const std::vector<MatchSample>& episode) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_buffer_jsonl: cannot open " + path);
    for (const MatchSample& s : episode) {
        nlohmann::json j;
        j["t"] = s.t;
        j["s"] = {s.s.x, s.s.y};
        j["label"] = static_cast<int>(s.label);
        j["mu_a"] = s.mu_a->mass;
        j["delta"] = s.delta->mass;
        f << j.dump() << "\n";
    }
}

}  // namespace mf
