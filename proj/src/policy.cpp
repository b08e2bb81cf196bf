#include "meanfleet/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mf {

using ad::Tape;
using ad::Tensor;
using ad::Var;

PolicyNet::PolicyNet(const PolicyNetConfig& cfg, Rng& rng) : grid_m_(cfg.grid_m), horizon_(cfg.horizon) {
    const int n = cfg.grid_m * cfg.grid_m;
    nn::MlpConfig mc;
    mc.widths.push_back(3 + 2 * n);
    for (int h : cfg.hidden) mc.widths.push_back(h);
    mc.widths.push_back(3);
    mc.output = nn::OutputActivation::Tanh;
    mc.batch_norm = cfg.batch_norm;
    net_ = nn::Mlp(mc);
    net_.init(rng);
}

void PolicyNet::save(const std::string& path) const {
    net_.save(path);
    nlohmann::json j;
    j["schema_version"] = 1;
    j["grid_m"] = grid_m_;
    j["horizon"] = horizon_;
    std::ofstream f(path + ".policy.json");
    if (!f) throw std::runtime_error("PolicyNet::save: cannot open meta for " + path);
    f << j.dump(2) << "\n";
}

PolicyNet PolicyNet::load(const std::string& path) {
    PolicyNet p;
    p.net_ = nn::Mlp::load(path);
    std::ifstream f(path + ".policy.json");
    if (!f) throw std::runtime_error("PolicyNet::load: missing meta " + path + ".policy.json");
    nlohmann::json j;
    f >> j;
    p.grid_m_ = j.at("grid_m").get<int>();
    p.horizon_ = j.at("horizon").get<int>();
    const int n = p.grid_m_ * p.grid_m_;
    if (p.net_.input_dim() != 3 + 2 * n)
        throw std::runtime_error("PolicyNet::load: checkpoint does not match grid size");
    return p;
}

std::vector<double> MatchModel::eval_plain(int t, const GridMeasure& mu_a, const GridMeasure& delta,
                                           const CityGrid& grid) const {
    const int n = grid.n_zones();
    switch (kind) {
        case Kind::OT:
            return ot_match_prob(mu_a, delta, ot_cfg, grid);
        case Kind::Oracle:
            return oracle_m.size() == 1 ? oracle_m[0] : oracle_m.at(static_cast<size_t>(t));
        case Kind::Learned: {
            Tensor x(n, 2 + 2 * n);
            for (int i = 0; i < n; ++i) {
                const Vec2 c = grid.center(i);
                double* row = x.v.data() + static_cast<size_t>(i) * x.cols;
                row[0] = c.x;
                row[1] = c.y;
                std::copy(mu_a.mass.begin(), mu_a.mass.end(), row + 2);
                std::copy(delta.mass.begin(), delta.mass.end(), row + 2 + n);
            }
            const Tensor y = classifier->forward_plain(x, false);
            std::vector<double> m(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i)
                m[static_cast<size_t>(i)] = std::clamp(y.v[static_cast<size_t>(i)], 0.0, 1.0);
            return m;
        }
    }
    return std::vector<double>(static_cast<size_t>(n), 0.0);
}

RolloutConsts RolloutConsts::build(const CityGrid& grid, const DemandPattern& demand,
                                   const NoiseModel& noise, const AccessSpec& spec) {
    const int n = grid.n_zones();
    RolloutConsts out;
    out.noise = noise;

    const TransitionCache cache(grid, noise);
    out.cruise_t = Tensor(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            out.cruise_t.at(k, i) = cache.cruise()[static_cast<size_t>(i) * n + k];
    if (const std::vector<double>* smear = cache.matched_smear()) {
        out.has_smear = true;
        out.smear_t = Tensor(n, n);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k)
                out.smear_t.at(k, i) = (*smear)[static_cast<size_t>(i) * n + k];
    }

    out.phi_shared = demand.od_shared;
    const int kernels = demand.od_shared ? 1 : demand.T;
    for (int t = 0; t < kernels; ++t) {
        const auto& phi = demand.od[static_cast<size_t>(t)];
        Tensor pt(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) pt.at(j, i) = phi[static_cast<size_t>(i) * n + j];
        out.phi_t.push_back(std::move(pt));
    }

    out.centers2 = Tensor(n, 2);
    out.cx = Tensor(n, 1);
    out.cy = Tensor(n, 1);
    for (int i = 0; i < n; ++i) {
        const Vec2 c = grid.center(i);
        out.centers2.at(i, 0) = c.x;
        out.centers2.at(i, 1) = c.y;
        out.cx.v[static_cast<size_t>(i)] = c.x;
        out.cy.v[static_cast<size_t>(i)] = c.y;
    }
    out.weights = Tensor(n, 1, spec.w);
    out.uniform_op = Tensor(n, 1, GridMeasure::uniform_operational(grid).mass);
    return out;
}

namespace {

constexpr double kLogTau = 1e-30;  // keeps 0*log(0) == 0 exact on the tape
constexpr double kInvLn2 = 1.4426950408889634074;
constexpr double kMaxRepositionOdds = 0.995;

Var js_on_tape(Tape& tape, Var p, Var q) {
    Var a = tape.mul_scalar(tape.add(p, q), 0.5);
    Var log_a = tape.log(tape.add_scalar(a, kLogTau));
    Var kl_p = tape.sum(tape.mul(p, tape.sub(tape.log(tape.add_scalar(p, kLogTau)), log_a)));
    Var kl_q = tape.sum(tape.mul(q, tape.sub(tape.log(tape.add_scalar(q, kLogTau)), log_a)));
    return tape.mul_scalar(tape.add(kl_p, kl_q), 0.5 * kInvLn2);
}

Var h_on_tape(Tape& tape, Var prob, Var weights, const AccessSpec& spec, const CityGrid& grid) {
    const double area = grid.cell_width() * grid.cell_width();
    Var density = tape.mul_scalar(prob, 1.0 / area);
    Var logs = tape.log(tape.add_scalar(density, spec.eps));
    return tape.mul_scalar(tape.sum(tape.mul(weights, logs)), area);
}

GridMeasure values_as_measure(const Tape& tape, Var v) { return GridMeasure(tape.value(v).v); }

}  // namespace

RolloutResult lifted_rollout(Tape& tape, PolicyNet* policy, const nn::MlpBinding* binding,
                             const GridMeasure& mu0, const DemandPattern& demand,
                             double fleet_size, const MatchModel& match, const AccessSpec& spec,
                             const CityGrid& grid, const RolloutConsts& consts,
                             const RolloutOptions& opt, Rng* explore_rng) {
    const int n = grid.n_zones();
    const int T = demand.T;
    const bool forced = opt.forced_p != nullptr;
    if (!forced && (policy == nullptr || binding == nullptr))
        throw std::invalid_argument("lifted_rollout: need a policy or forced actions");
    if (opt.explore_sigma > 0.0 && explore_rng == nullptr)
        throw std::invalid_argument("lifted_rollout: exploration needs an rng");

    RolloutResult res;
    res.mu.push_back(mu0);

    nn::MlpBinding clf_binding;
    if (match.kind == MatchModel::Kind::Learned)
        clf_binding = const_cast<nn::Mlp*>(match.classifier)->bind(tape, /*trainable=*/false);

    Var mu_var = tape.constant(Tensor(n, 1, mu0.mass));
    const Var centers2 = tape.constant(consts.centers2);
    const Var cx = tape.constant(consts.cx);
    const Var cy = tape.constant(consts.cy);
    const Var w_const = tape.constant(consts.weights);
    const Var cruise_t = tape.constant(consts.cruise_t);
    const Var smear_t = consts.has_smear ? tape.constant(consts.smear_t) : Var{};
    std::vector<Var> phi_vars;
    phi_vars.reserve(consts.phi_t.size());
    for (const Tensor& pt : consts.phi_t) phi_vars.push_back(tape.constant(pt));

    Var objective{};
    bool have_objective = false;
    auto accumulate = [&](Var term) {
        objective = have_objective ? tape.add(objective, term) : term;
        have_objective = true;
    };

    auto barrier_term = [&](Var h_var) {
        const double h = tape.value(h_var).item();
        res.step_h.push_back(h);
        const double gap = h - spec.bound_c;
        res.min_gap = res.step_h.size() == 1 ? gap : std::min(res.min_gap, gap);
        if (spec.lambda <= 0.0) return;
        if (gap <= 0.0) {
            res.violated = true;
            // -1e6 * (1 + (C - h)); keeps pushing h upward when infeasible
            Var viol = tape.sub(tape.constant(Tensor::scalar(spec.bound_c)), h_var);
            accumulate(tape.mul_scalar(tape.add_scalar(viol, 1.0), -1e6));
        } else {
            accumulate(tape.mul_scalar(tape.log(tape.add_scalar(h_var, -spec.bound_c)), spec.lambda));
        }
    };

    for (int t = 0; t < T; ++t) {
        const GridMeasure& deltabar = demand.dist[static_cast<size_t>(t)];
        const Var deltabar_col = tape.constant(Tensor(n, 1, deltabar.mass));

        Var p_var, ux_var, uy_var;
        if (forced) {
            p_var = tape.constant(Tensor(n, 1, (*opt.forced_p)[static_cast<size_t>(t)]));
            ux_var = tape.constant(Tensor(n, 1, (*opt.forced_ux)[static_cast<size_t>(t)]));
            uy_var = tape.constant(Tensor(n, 1, (*opt.forced_uy)[static_cast<size_t>(t)]));
        } else {
            const double tf = static_cast<double>(t) / policy->horizon();
            Var x = tape.concat_cols(centers2, tape.constant(Tensor(n, 1, tf)));
            x = tape.concat_cols(x, tape.tile_rows(tape.transpose(mu_var), n));
            x = tape.concat_cols(x, tape.tile_rows(tape.constant(Tensor(1, n, deltabar.mass)), n));
            Var y = policy->net().forward_bound(tape, *binding, x, opt.bn_train);
            if (opt.explore_sigma > 0.0) {
                Tensor noise(n, 3);
                for (double& v : noise.v) v = opt.explore_sigma * explore_rng->normal();
                y = tape.clamp(tape.add(y, tape.constant(std::move(noise))), -1.0, 1.0);
            }
            // A small cruise floor keeps the available measure nonempty; a
            // policy that repositions literally everyone would otherwise park
            // in the degenerate uniform-fallback plateau where no gradient
            // exists.
            p_var = opt.override_p >= 0.0
                        ? tape.constant(Tensor(n, 1, opt.override_p))
                        : tape.clamp(tape.mul_scalar(tape.add_scalar(tape.slice_cols(y, 0, 1), 1.0),
                                                     0.5),
                                     0.0, kMaxRepositionOdds);
            ux_var = tape.slice_cols(y, 1, 1);
            uy_var = tape.slice_cols(y, 2, 1);
        }

        Var one_minus_p = tape.add_scalar(tape.neg(p_var), 1.0);
        Var avail = tape.mul(one_minus_p, mu_var);

        Var m_var;
        const GridMeasure delta_abs = demand.demand_measure(t, fleet_size);
        switch (match.kind) {
            case MatchModel::Kind::OT: {
                const GridMeasure mu_a_plain = values_as_measure(tape, avail);
                m_var = tape.constant(
                    Tensor(n, 1, ot_match_prob(mu_a_plain, delta_abs, match.ot_cfg, grid)));
                break;
            }
            case MatchModel::Kind::Oracle: {
                const auto& row = match.oracle_m.size() == 1
                                      ? match.oracle_m[0]
                                      : match.oracle_m.at(static_cast<size_t>(t));
                m_var = tape.constant(Tensor(n, 1, row));
                break;
            }
            case MatchModel::Kind::Learned: {
                Var xm = tape.concat_cols(centers2, tape.tile_rows(tape.transpose(avail), n));
                xm = tape.concat_cols(
                    xm, tape.tile_rows(tape.constant(Tensor(1, n, delta_abs.mass)), n));
                m_var = const_cast<nn::Mlp*>(match.classifier)
                            ->forward_bound(tape, clf_binding, xm, /*train=*/false);
                break;
            }
        }

        Var w_m = tape.mul(m_var, avail);
        Var w_c = tape.sub(avail, w_m);
        Var w_r = tape.mul(p_var, mu_var);

        Var matched_total = tape.sum(w_m);
        Var avail_total = tape.sum(avail);
        Var mu_a_bar;
        if (tape.value(avail_total).item() <= 1e-15)
            mu_a_bar = tape.constant(consts.uniform_op);  // degenerate: everyone repositioning
        else
            mu_a_bar = tape.div(avail, avail_total);
        Var js = js_on_tape(tape, mu_a_bar, deltabar_col);
        Var r = tape.mul_scalar(tape.add_scalar(tape.sub(matched_total, js), 1.0), 0.5);
        accumulate(r);
        res.step_reward.push_back(tape.value(r).item());

        // Constraint at steps 1 .. T-1 uses the available distribution under
        // that step's policy.
        if (t >= 1) barrier_term(h_on_tape(tape, mu_a_bar, w_const, spec, grid));

        const Var phi = consts.phi_shared ? phi_vars[0] : phi_vars[static_cast<size_t>(t)];
        Var next = tape.matmul(phi, w_m);
        if (consts.has_smear) next = tape.matmul(smear_t, next);
        next = tape.add(next, tape.matmul(cruise_t, w_c));

        if (consts.noise.sigma_r > 0.0) {
            const int M = grid.M();
            Var sx = tape.clamp(tape.add(cx, ux_var), 0.0, 1.0);
            Var sy = tape.clamp(tape.add(cy, uy_var), 0.0, 1.0);
            Var kx = tape.row_normalize(tape.cdf_intervals(sx, M, consts.noise.sigma_r));
            Var ky = tape.row_normalize(tape.cdf_intervals(sy, M, consts.noise.sigma_r));
            Var weighted = tape.scale_rows(kx, w_r);
            Var p1 = tape.matmul(tape.transpose(weighted), ky);  // indexed [jx, jy]
            next = tape.add(next, tape.reshape(tape.transpose(p1), n, 1));
        } else {
            // Degenerate repositioning kernel: hard assignment, constant per
            // forward pass (no gradient into u).
            Tensor rt(n, n);
            const auto& ux_vals = tape.value(ux_var).v;
            const auto& uy_vals = tape.value(uy_var).v;
            for (int i = 0; i < n; ++i) {
                const Vec2 c = grid.center(i);
                const GridMeasure k = gaussian_kernel(
                    {c.x + ux_vals[static_cast<size_t>(i)], c.y + uy_vals[static_cast<size_t>(i)]},
                    0.0, grid);
                for (int z = 0; z < n; ++z) rt.at(z, i) = k[z];
            }
            next = tape.add(next, tape.matmul(tape.constant(std::move(rt)), w_r));
        }

        mu_var = next;
        res.mu.push_back(values_as_measure(tape, mu_var));
        res.p.push_back(tape.value(p_var).v);
        res.ux.push_back(tape.value(ux_var).v);
        res.uy.push_back(tape.value(uy_var).v);
        res.m.push_back(tape.value(m_var).v);
    }

    // Terminal constraint on mu_T itself: no policy exists at the horizon,
    // the whole fleet counts as available.
    barrier_term(h_on_tape(tape, mu_var, w_const, spec, grid));

    res.objective_var = objective;
    res.objective = tape.value(objective).item();
    if (res.violated) {
        double pen = 0.0;
        for (double h : res.step_h)
            if (h - spec.bound_c <= 0.0) pen += -1e6 * (1.0 + (spec.bound_c - h));
        res.objective = pen;
    }
    return res;
}

RolloutResult rollout_reference(PolicyNet* policy, const GridMeasure& mu0,
                                const DemandPattern& demand, double fleet_size,
                                const MatchModel& match, const AccessSpec& spec,
                                const CityGrid& grid, const NoiseModel& noise,
                                const RolloutOptions& opt) {
    const int n = grid.n_zones();
    const int T = demand.T;
    const bool forced = opt.forced_p != nullptr;
    if (!forced && policy == nullptr)
        throw std::invalid_argument("rollout_reference: need a policy or forced actions");

    const TransitionCache cache(grid, noise);
    std::vector<Vec2> centers(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) centers[static_cast<size_t>(i)] = grid.center(i);

    RolloutResult res;
    res.mu.push_back(mu0);
    GridMeasure mu = mu0;
    std::vector<RolloutStep> steps;

    for (int t = 0; t < T; ++t) {
        const GridMeasure& deltabar = demand.dist[static_cast<size_t>(t)];
        std::vector<double> p, ux, uy;
        if (forced) {
            p = (*opt.forced_p)[static_cast<size_t>(t)];
            ux = (*opt.forced_ux)[static_cast<size_t>(t)];
            uy = (*opt.forced_uy)[static_cast<size_t>(t)];
        } else {
            const auto actions = policy_infer(*policy, t, mu, deltabar, centers, false);
            p.resize(static_cast<size_t>(n));
            ux.resize(static_cast<size_t>(n));
            uy.resize(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                p[static_cast<size_t>(i)] = actions[static_cast<size_t>(i)].p;
                ux[static_cast<size_t>(i)] = actions[static_cast<size_t>(i)].u.x;
                uy[static_cast<size_t>(i)] = actions[static_cast<size_t>(i)].u.y;
            }
        }

        GridMeasure mu_a(n);
        for (int i = 0; i < n; ++i) mu_a[i] = (1.0 - p[static_cast<size_t>(i)]) * mu[i];
        const GridMeasure delta_abs = demand.demand_measure(t, fleet_size);
        const std::vector<double> m = match.eval_plain(t, mu_a, delta_abs, grid);

        RolloutStep step;
        step.mu = mu;
        step.deltabar = deltabar;
        step.p = p;
        step.m = m;
        steps.push_back(std::move(step));

        mu = mean_field_step_serial(grid, mu, demand.od_at(t), p, ux, uy, m, cache);
        res.mu.push_back(mu);
        res.p.push_back(std::move(p));
        res.ux.push_back(std::move(ux));
        res.uy.push_back(std::move(uy));
        res.m.push_back(m);
    }

    const BarrierValue bv = barrier_objective(steps, mu, spec, grid);
    res.objective = bv.value;
    res.violated = bv.violated;
    res.min_gap = bv.min_gap;
    res.step_reward = bv.step_reward;
    res.step_h = bv.step_h;
    return res;
}

TrainResult train_policy(PolicyNet& policy, const TrainConfig& cfg, const GridMeasure& mu0,
                         const DemandPattern& demand, double fleet_size, const MatchModel& match,
                         const AccessSpec& spec, const CityGrid& grid, const NoiseModel& noise) {
    TrainResult result;
    AccessSpec train_spec = spec;
    if (cfg.barrier_train_eps > 0.0) train_spec.eps = cfg.barrier_train_eps;
    train_spec.bound_c = spec.bound_c + cfg.bound_safety;
    const RolloutConsts consts = RolloutConsts::build(grid, demand, noise, spec);
    nn::AdamW opt(cfg.lr, cfg.weight_decay);
    Rng rng(cfg.seed);

    nn::Mlp best_net = policy.net();
    double best = -std::numeric_limits<double>::infinity();
    double window_best_prev = -std::numeric_limits<double>::infinity();
    int patience_used = 0;

    const bool has_bn = policy.net().config().batch_norm;
    const int freeze = has_bn ? std::min(cfg.bn_freeze_epoch, cfg.epochs) : 0;
    const int track_from = std::max({freeze, std::min(cfg.force_p_epochs, cfg.epochs),
                                     std::min(cfg.bound_anneal_epochs, cfg.epochs)});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double sigma = cfg.explore_sigma0 * std::exp(-cfg.explore_decay * epoch);
        Rng explore = rng.fork(static_cast<std::uint64_t>(epoch));

        Tape tape;
        nn::MlpBinding binding = policy.net().bind(tape);
        RolloutOptions opts;
        opts.explore_sigma = sigma;
        opts.bn_train = epoch < freeze;
        if (epoch < cfg.force_p_epochs) opts.override_p = cfg.force_p_value;
        if (cfg.bound_anneal_epochs > 0) {
            // Start below the floor of h so the initial policy is feasible,
            // then tighten linearly to the real bound.
            double w_total = 0.0;
            for (double w : spec.w) w_total += w;
            const double area = 1.0 / static_cast<double>(spec.w.size());
            const double h_floor = w_total * area * std::log(train_spec.eps) - 1.0;
            const double ramp =
                std::min(1.0, static_cast<double>(epoch + 1) / cfg.bound_anneal_epochs);
            const double target = spec.bound_c + cfg.bound_safety;
            train_spec.bound_c = h_floor + ramp * (target - h_floor);
        }
        RolloutResult roll = lifted_rollout(tape, &policy, &binding, mu0, demand, fleet_size,
                                            match, train_spec, grid, consts, opts, &explore);

        // Snapshot before the update: the logged objective belongs to the
        // pre-step parameters.
        if (epoch >= track_from && roll.objective > best) {
            best = roll.objective;
            result.best_epoch = epoch;
            best_net = policy.net();
        }

        tape.backward(tape.neg(roll.objective_var));
        std::vector<Tensor> grads = nn::collect_grads(tape, binding);
        nn::clip_grad_norm(grads, cfg.clip_norm);
        opt.step(policy.net().parameters(), grads);

        const auto t1 = std::chrono::steady_clock::now();
        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.objective = roll.objective;
        entry.min_gap = roll.min_gap;
        entry.sigma = sigma;
        entry.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        result.log.push_back(entry);

        if ((epoch + 1) % cfg.improvement_window == 0) {
            const double required =
                window_best_prev + cfg.min_improvement * std::abs(window_best_prev);
            if (window_best_prev != -std::numeric_limits<double>::infinity() && best < required) {
                if (++patience_used >= cfg.patience) break;
            } else {
                patience_used = 0;
            }
            window_best_prev = best;
        }
    }

    policy.net() = best_net;
    result.best_objective = best;
    result.failed = best <= -0.5e6;
    return result;
}

void write_train_log_csv(const std::string& path, const std::vector<TrainLogEntry>& log) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_train_log_csv: cannot open " + path);
    f << "epoch,objective,min_constraint_gap,exploration_sigma,wall_ms\n";
    for (const auto& e : log)
        f << e.epoch << ',' << e.objective << ',' << e.min_gap << ',' << e.sigma << ','
          << e.wall_ms << '\n';
}

std::vector<Action> policy_infer(const PolicyNet& policy, int t, const GridMeasure& mu,
                                 const GridMeasure& deltabar, std::span<const Vec2> positions,
                                 bool parallel) {
    const int n = policy.grid_m() * policy.grid_m();
    if (mu.size() != n || deltabar.size() != n)
        throw std::invalid_argument("policy_infer: measure size mismatch");
    const int total = static_cast<int>(positions.size());
    std::vector<Action> out(static_cast<size_t>(total));
    if (total == 0) return out;

    const double tf = static_cast<double>(t) / policy.horizon();
    constexpr int kBlock = 4096;
    for (int begin = 0; begin < total; begin += kBlock) {
        const int rows = std::min(kBlock, total - begin);
        Tensor x(rows, 3 + 2 * n);
        for (int r = 0; r < rows; ++r) {
            const Vec2& s = positions[static_cast<size_t>(begin + r)];
            double* row = x.v.data() + static_cast<size_t>(r) * x.cols;
            row[0] = s.x;
            row[1] = s.y;
            row[2] = tf;
            std::copy(mu.mass.begin(), mu.mass.end(), row + 3);
            std::copy(deltabar.mass.begin(), deltabar.mass.end(), row + 3 + n);
        }
        const Tensor y = policy.net().forward_plain(x, parallel);
        for (int r = 0; r < rows; ++r) {
            Action& a = out[static_cast<size_t>(begin + r)];
            a.p = std::min(0.5 * (y.at(r, 0) + 1.0), kMaxRepositionOdds);
            a.u = {y.at(r, 1), y.at(r, 2)};
        }
    }
    return out;
}

}  // namespace mf
