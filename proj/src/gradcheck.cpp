#include "meanfleet/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <vector>

#include "meanfleet/policy.hpp"
#include "meanfleet/scenario.hpp"

namespace mf {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

struct Check {
    GradCheckReport* report;
    double tol;
    double abs_floor;

    // builder maps leaf tensors to a scalar tape value; analytic gradients of
    // the leaves are compared against central differences.
    void run(const std::string& label, std::vector<Tensor> leaves,
             const std::function<Var(Tape&, const std::vector<Var>&)>& builder) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(leaves.size());
        for (const Tensor& t : leaves) vars.push_back(tape.leaf(t));
        const Var out = builder(tape, vars);
        tape.backward(out);

        constexpr double step = 1e-6;
        for (size_t li = 0; li < leaves.size(); ++li) {
            const auto& node = tape.nodes[static_cast<size_t>(vars[li].id)];
            for (size_t i = 0; i < leaves[li].v.size(); ++i) {
                const double analytic = node.grad_live ? node.grad.v[i] : 0.0;
                auto eval = [&](double x) {
                    std::vector<Tensor> shifted = leaves;
                    shifted[li].v[i] = x;
                    Tape t2;
                    std::vector<Var> vs;
                    for (const Tensor& t : shifted) vs.push_back(t2.leaf(t));
                    return t2.value(builder(t2, vs)).item();
                };
                const double x0 = leaves[li].v[i];
                const double fd = (eval(x0 + step) - eval(x0 - step)) / (2.0 * step);
                ++report->checks;
                const double err = std::abs(analytic - fd);
                const double denom = std::max(std::abs(analytic), std::abs(fd));
                const double rel = denom > 0.0 ? err / denom : 0.0;
                if (err > tol * denom && err > abs_floor) {
                    ++report->failures;
                    if (rel > report->worst_rel) {
                        report->worst_rel = rel;
                        report->worst_label = label;
                    }
                } else if (rel > report->worst_rel && err > abs_floor) {
                    report->worst_rel = rel;
                    report->worst_label = label;
                }
            }
        }
    }
};

Tensor random_tensor(Rng& rng, int rows, int cols, double lo, double hi) {
    Tensor t(rows, cols);
    for (double& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

GradCheckReport gradcheck_primitives(std::uint64_t seed) {
    GradCheckReport report;
    Check check{&report, 1e-6, 1e-10};
    Rng rng(seed);

    auto weighted_sum = [](Tape& t, Var x, const Tensor& w) {
        return t.sum(t.mul(x, t.constant(w)));
    };

    // d/dx x^2 = 2x at x = 3.
    check.run("square", {Tensor::scalar(3.0)},
              [](Tape& t, const std::vector<Var>& v) { return t.mul(v[0], v[0]); });

    {
        const Tensor w = random_tensor(rng, 2, 3, -1.0, 1.0);
        auto unary = [&](const char* name, double lo, double hi, auto&& op) {
            const Tensor x = random_tensor(rng, 2, 3, lo, hi);
            check.run(name, {x}, [&](Tape& t, const std::vector<Var>& v) {
                return weighted_sum(t, op(t, v[0]), w);
            });
        };
        unary("neg", -2.0, 2.0, [](Tape& t, Var x) { return t.neg(x); });
        unary("add_scalar", -2.0, 2.0, [](Tape& t, Var x) { return t.add_scalar(x, 0.7); });
        unary("mul_scalar", -2.0, 2.0, [](Tape& t, Var x) { return t.mul_scalar(x, -1.3); });
        unary("tanh", -2.0, 2.0, [](Tape& t, Var x) { return t.tanh(x); });
        unary("sigmoid", -3.0, 3.0, [](Tape& t, Var x) { return t.sigmoid(x); });
        unary("exp", -1.5, 1.5, [](Tape& t, Var x) { return t.exp(x); });
        unary("log", 0.2, 3.0, [](Tape& t, Var x) { return t.log(x); });
        unary("leaky_relu_pos", 0.05, 2.0, [](Tape& t, Var x) { return t.leaky_relu(x); });
        unary("leaky_relu_neg", -2.0, -0.05, [](Tape& t, Var x) { return t.leaky_relu(x); });
        unary("clamp_inside", -0.9, 0.9, [](Tape& t, Var x) { return t.clamp(x, -1.0, 1.0); });
        unary("transpose", -2.0, 2.0, [](Tape& t, Var x) { return t.transpose(t.transpose(x)); });
        unary("reshape", -2.0, 2.0,
              [](Tape& t, Var x) { return t.reshape(t.reshape(x, 3, 2), 2, 3); });
        unary("sum", -2.0, 2.0, [](Tape& t, Var x) { return t.mul_scalar(t.sum(x), 1.0); });
        unary("mean", -2.0, 2.0, [](Tape& t, Var x) { return t.mean(x); });
    }

    {
        const Tensor w = random_tensor(rng, 2, 3, -1.0, 1.0);
        auto binary = [&](const char* name, auto&& op) {
            const Tensor a = random_tensor(rng, 2, 3, 0.3, 2.0);
            const Tensor b = random_tensor(rng, 2, 3, 0.3, 2.0);
            check.run(name, {a, b}, [&](Tape& t, const std::vector<Var>& v) {
                return weighted_sum(t, op(t, v[0], v[1]), w);
            });
        };
        binary("add", [](Tape& t, Var a, Var b) { return t.add(a, b); });
        binary("sub", [](Tape& t, Var a, Var b) { return t.sub(a, b); });
        binary("mul", [](Tape& t, Var a, Var b) { return t.mul(a, b); });
        binary("div", [](Tape& t, Var a, Var b) { return t.div(a, b); });

        // Scalar broadcasting.
        check.run("mul_broadcast", {random_tensor(rng, 2, 3, 0.3, 2.0), Tensor::scalar(0.7)},
                  [&](Tape& t, const std::vector<Var>& v) {
                      return weighted_sum(t, t.mul(v[0], v[1]), w);
                  });
        check.run("div_broadcast", {random_tensor(rng, 2, 3, 0.3, 2.0), Tensor::scalar(1.4)},
                  [&](Tape& t, const std::vector<Var>& v) {
                      return weighted_sum(t, t.div(v[0], v[1]), w);
                  });
    }

    {
        const Tensor w = random_tensor(rng, 2, 4, -1.0, 1.0);
        check.run("matmul", {random_tensor(rng, 2, 3, -1.0, 1.0), random_tensor(rng, 3, 4, -1.0, 1.0)},
                  [&](Tape& t, const std::vector<Var>& v) {
                      return weighted_sum(t, t.matmul(v[0], v[1]), w);
                  });
        check.run("add_row_vec", {random_tensor(rng, 2, 4, -1.0, 1.0), random_tensor(rng, 1, 4, -1.0, 1.0)},
                  [&](Tape& t, const std::vector<Var>& v) {
                      return weighted_sum(t, t.add_row_vec(v[0], v[1]), w);
                  });
        check.run("concat_slice",
                  {random_tensor(rng, 2, 2, -1.0, 1.0), random_tensor(rng, 2, 2, -1.0, 1.0)},
                  [&](Tape& t, const std::vector<Var>& v) {
                      Var c = t.concat_cols(v[0], v[1]);
                      return weighted_sum(t, t.slice_cols(c, 1, 3),
                                          Tensor(2, 3, std::vector<double>{1, -2, 3, -1, 2, -3}));
                  });
        check.run("tile_rows", {random_tensor(rng, 1, 4, -1.0, 1.0)},
                  [&](Tape& t, const std::vector<Var>& v) {
                      return weighted_sum(t, t.tile_rows(v[0], 2), w);
                  });
        check.run("scale_rows", {random_tensor(rng, 2, 4, -1.0, 1.0), random_tensor(rng, 2, 1, 0.3, 1.5)},
                  [&](Tape& t, const std::vector<Var>& v) {
                      return weighted_sum(t, t.scale_rows(v[0], v[1]), w);
                  });
        check.run("row_normalize", {random_tensor(rng, 2, 4, 0.2, 1.5)},
                  [&](Tape& t, const std::vector<Var>& v) {
                      return weighted_sum(t, t.row_normalize(v[0]), w);
                  });
        const Tensor wk = random_tensor(rng, 3, 5, -1.0, 1.0);
        check.run("cdf_intervals", {random_tensor(rng, 3, 1, 0.1, 0.9)},
                  [&](Tape& t, const std::vector<Var>& v) {
                      return weighted_sum(t, t.cdf_intervals(v[0], 5, 0.15), wk);
                  });
    }

    // stop_gradient: d/dy of stop(y)*x must be zero.
    {
        Tape tape;
        Var y = tape.leaf(Tensor::scalar(2.0));
        Var x = tape.leaf(Tensor::scalar(3.0));
        Var out = tape.mul(tape.stop_gradient(y), x);
        tape.backward(out);
        ++report.checks;
        if (tape.nodes[static_cast<size_t>(y.id)].grad_live &&
            std::abs(tape.nodes[static_cast<size_t>(y.id)].grad.v[0]) > 0.0) {
            ++report.failures;
            report.worst_label = "stop_gradient";
        }
    }

    // Batch norm, train and eval modes.
    for (const bool train : {true, false}) {
        Tensor rm(1, 3, 0.1), rv(1, 3, 0.9);
        const Tensor w = random_tensor(rng, 4, 3, -1.0, 1.0);
        check.run(train ? "batch_norm_train" : "batch_norm_eval",
                  {random_tensor(rng, 4, 3, -1.0, 1.0), random_tensor(rng, 1, 3, 0.5, 1.5),
                   random_tensor(rng, 1, 3, -0.5, 0.5)},
                  [&](Tape& t, const std::vector<Var>& v) {
                      Tensor m = rm, s = rv;  // builder re-runs; keep stats fixed
                      return weighted_sum(t, t.batch_norm(v[0], v[1], v[2], &m, &s, train), w);
                  });
    }

    // Random composed graphs over the primitive pool.
    for (int graph = 0; graph < 8; ++graph) {
        Rng g = rng.fork(static_cast<std::uint64_t>(100 + graph));
        const Tensor a = random_tensor(g, 3, 3, 0.3, 1.2);
        const Tensor b = random_tensor(g, 3, 3, 0.3, 1.2);
        const Tensor c = random_tensor(g, 3, 3, 0.3, 1.2);
        const std::uint64_t recipe = g.next_u64();
        check.run("composed_graph_" + std::to_string(graph), {a, b, c},
                  [&](Tape& t, const std::vector<Var>& v) {
                      Var x = t.mul(v[0], v[1]);
                      if (recipe & 1) x = t.tanh(x);
                      x = t.add(x, v[2]);
                      if (recipe & 2) x = t.sigmoid(x);
                      x = t.matmul(x, (recipe & 4) ? t.transpose(v[1]) : v[2]);
                      if (recipe & 8) x = t.leaky_relu(t.add_scalar(x, 0.3));
                      x = t.log(t.add_scalar(t.mul(x, x), 1.0));
                      Var s = t.add(t.sum(x), t.mean(t.exp(t.mul_scalar(v[0], 0.5))));
                      return s;
                  });
    }

    return report;
}

GradCheckReport gradcheck_bptt(std::uint64_t seed) {
    GradCheckReport report;

    // 3x3 grid with two non-operational zones so h stays below its maximum.
    std::vector<std::uint8_t> mask(9, 1);
    mask[4] = 0;
    mask[6] = 0;
    const CityGrid grid(3, mask, 13750.0);
    const AccessSpec spec = AccessSpec::from_grid(grid, 0.1, 1.0);
    const NoiseModel noise{0.08, 0.0, 0.06};

    ScenarioSpec scen;
    scen.grid_m = 3;
    scen.operational_mask = mask;
    scen.steps = 2;
    scen.components.push_back({{0.8, 0.8}, 0.25, {2.0, 3.0}});
    scen.components.push_back({{0.2, 0.4}, 0.3, {1.5, 1.0}});
    scen.od_decay_length = 0.5;
    const DemandPattern demand = build_demand(scen, grid);

    Rng rng(seed);
    PolicyNetConfig pc;
    pc.grid_m = 3;
    pc.horizon = 2;
    pc.hidden = {7};
    pc.batch_norm = true;  // eval mode below; 192 parameters total
    PolicyNet policy(pc, rng);
    // Gentle initial actions keep the rollout inside the barrier domain for
    // any seed; the check requires a smooth objective.
    for (ad::Tensor* t : policy.net().parameters())
        for (double& v : t->v) v *= 0.3;

    const GridMeasure mu0 = GridMeasure::uniform_operational(grid);
    std::vector<std::vector<double>> m_fixed(2, std::vector<double>(9, 0.0));
    for (int t = 0; t < 2; ++t)
        for (int i = 0; i < 9; ++i) m_fixed[static_cast<size_t>(t)][static_cast<size_t>(i)] = 0.2 + 0.05 * i;
    const MatchModel match = MatchModel::oracle(m_fixed);
    const RolloutConsts consts = RolloutConsts::build(grid, demand, noise, spec);

    RolloutOptions opts;
    opts.explore_sigma = 0.0;
    opts.bn_train = false;

    auto objective_at = [&]() {
        Tape tape;
        nn::MlpBinding binding = policy.net().bind(tape);
        return lifted_rollout(tape, &policy, &binding, mu0, demand, 100.0, match, spec, grid,
                              consts, opts, nullptr)
            .objective;
    };

    // Analytic gradients.
    Tape tape;
    nn::MlpBinding binding = policy.net().bind(tape);
    const RolloutResult roll = lifted_rollout(tape, &policy, &binding, mu0, demand, 100.0, match,
                                              spec, grid, consts, opts, nullptr);
    if (roll.violated) {
        ++report.failures;
        report.worst_label = "bptt_setup_violated_constraint";
        return report;
    }
    tape.backward(roll.objective_var);
    const std::vector<Tensor> analytic = nn::collect_grads(tape, binding);

    const std::vector<Tensor*> params = policy.net().parameters();
    constexpr double step = 1e-6;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        for (size_t i = 0; i < params[pi]->v.size(); ++i) {
            const double saved = params[pi]->v[i];
            params[pi]->v[i] = saved + step;
            const double up = objective_at();
            params[pi]->v[i] = saved - step;
            const double down = objective_at();
            params[pi]->v[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double an = analytic[pi].v[i];
            ++report.checks;
            const double err = std::abs(an - fd);
            const double denom = std::max(std::abs(an), std::abs(fd));
            const double rel = denom > 0.0 ? err / denom : 0.0;
            if (err > 1e-3 * denom && err > 1e-8) {
                ++report.failures;
                if (rel > report.worst_rel) {
                    report.worst_rel = rel;
                    report.worst_label = "bptt_param_" + std::to_string(pi);
                }
            } else if (rel > report.worst_rel && err > 1e-8) {
                report.worst_rel = rel;
                report.worst_label = "bptt_param_" + std::to_string(pi);
            }
        }
    }
    return report;
}

}  // namespace mf
