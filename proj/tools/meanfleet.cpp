// meanfleet command-line interface: scenario generation, MFC / MFRL
// training, fleet evaluation, LP benchmarks, Pareto sweeps, and the
// gradient-check suites.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meanfleet/gradcheck.hpp"
#include "meanfleet/harness.hpp"
#include "meanfleet/mfrl.hpp"
#include "meanfleet/policy.hpp"
#include "meanfleet/scenario.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTrainingFailure = 3;

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << text;
}

struct ScenarioArgs {
    std::string scenario_file;
    std::string variant = "base";
    std::uint64_t variant_seed = 0;
    double shock_factor = 8.0;

    mf::ScenarioSpec load() const {
        mf::ScenarioSpec spec = mf::ScenarioSpec::from_json(read_file(scenario_file));
        if (variant != "base") {
            if (variant == "gauss-noise") {
                spec.variant.kind = mf::DemandVariant::Kind::GaussNoise;
                spec.variant.seed = variant_seed;
            } else if (variant == "permuted") {
                spec.variant.kind = mf::DemandVariant::Kind::Permuted;
                spec.variant.seed = variant_seed;
            } else if (variant == "shock") {
                spec.variant.kind = mf::DemandVariant::Kind::Shock;
                if (spec.variant.shock_zones.empty())
                    throw std::runtime_error("scenario file carries no shock region");
                spec.variant.shock_factor = shock_factor;
            } else {
                throw std::runtime_error("unknown variant: " + variant);
            }
        }
        return spec;
    }
};

void add_scenario_options(CLI::App* cmd, ScenarioArgs& args) {
    cmd->add_option("--scenario", args.scenario_file, "scenario JSON file")->required();
    cmd->add_option("--variant", args.variant, "demand variant: base, gauss-noise, permuted, shock");
    cmd->add_option("--variant-seed", args.variant_seed, "seed of the demand variant");
    cmd->add_option("--shock-factor", args.shock_factor, "demand multiplier of the shock variant");
}

mf::PolicyNetConfig policy_config(const mf::ScenarioSpec& spec, const std::vector<int>& hidden) {
    mf::PolicyNetConfig pc;
    pc.grid_m = spec.grid_m;
    pc.horizon = spec.steps;
    if (!hidden.empty()) pc.hidden = hidden;
    return pc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meanfleet: constrained mean-field fleet rebalancing laboratory"};
    app.set_config("--config", "", "read options from a TOML file");
    app.require_subcommand(1);

    // gen-scenario
    auto* gen = app.add_subcommand("gen-scenario", "write the desk city scenario and its demand pattern");
    std::string gen_out = "scenario_out";
    int gen_grid = 10;
    int gen_fleet = 1000;
    std::uint64_t gen_seed = 0;
    double gen_alpha = 0.0;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--grid", gen_grid, "grid side length (10 = desk default)");
    gen->add_option("--fleet", gen_fleet, "number of vehicles");
    gen->add_option("--seed", gen_seed, "seed recorded for variants");
    gen->add_option("--alpha", gen_alpha, "uniform fraction of the initial distribution");

    // train-mfc
    auto* mfc = app.add_subcommand("train-mfc", "train a policy against the optimal-transport matching model");
    ScenarioArgs mfc_scen;
    add_scenario_options(mfc, mfc_scen);
    std::string mfc_out = "mfc_out";
    double mfc_p = 0.0;
    double mfc_lambda = 1.0;
    std::uint64_t mfc_seed = 0;
    int mfc_epochs = 1000;
    std::vector<int> mfc_hidden;
    mfc->add_option("--out", mfc_out, "output directory");
    mfc->add_option("--p-fraction", mfc_p, "accessibility bound fraction of h_max");
    mfc->add_option("--lambda", mfc_lambda, "log-barrier weight");
    mfc->add_option("--seed", mfc_seed, "training seed");
    mfc->add_option("--epochs", mfc_epochs, "maximum training epochs");
    mfc->add_option("--hidden", mfc_hidden, "policy hidden widths override");

    // train-mfrl
    auto* mfrl = app.add_subcommand("train-mfrl", "episodic model-based training with a learned matching model");
    ScenarioArgs mfrl_scen;
    add_scenario_options(mfrl, mfrl_scen);
    std::string mfrl_out = "mfrl_out";
    double mfrl_p = 0.0;
    double mfrl_lambda = 1.0;
    std::uint64_t mfrl_seed = 0;
    int mfrl_epochs = 1000;
    int mfrl_episodes = 10;
    std::vector<int> mfrl_hidden;
    mfrl->add_option("--out", mfrl_out, "output directory");
    mfrl->add_option("--p-fraction", mfrl_p, "accessibility bound fraction of h_max");
    mfrl->add_option("--lambda", mfrl_lambda, "log-barrier weight");
    mfrl->add_option("--seed", mfrl_seed, "seed tuple root");
    mfrl->add_option("--epochs", mfrl_epochs, "maximum policy epochs per episode");
    mfrl->add_option("--episodes", mfrl_episodes, "protocol episodes");
    mfrl->add_option("--hidden", mfrl_hidden, "policy hidden widths override");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "run the discrete-fleet evaluation and write metrics");
    ScenarioArgs eval_scen;
    add_scenario_options(eval, eval_scen);
    std::string eval_out = "eval_out";
    std::string eval_policy = "none";
    std::string eval_checkpoint;
    int eval_runs = 10;
    std::uint64_t eval_seed = 0;
    double eval_p = 0.0;
    double eval_alpha = -1.0;
    eval->add_option("--out", eval_out, "output directory");
    eval->add_option("--policy", eval_policy, "mfc | mfrl | lp-static | lp-dynamic | none");
    eval->add_option("--checkpoint", eval_checkpoint, "policy checkpoint (mfc/mfrl)");
    eval->add_option("--runs", eval_runs, "number of evaluation runs");
    eval->add_option("--seed", eval_seed, "root seed");
    eval->add_option("--p-fraction", eval_p, "constraint fraction used for gap reporting");
    eval->add_option("--alpha", eval_alpha, "override the scenario initialization alpha");

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "evaluate the LP rebalancers and no-rebalancing side by side");
    ScenarioArgs bench_scen;
    add_scenario_options(bench, bench_scen);
    std::string bench_out = "benchmark_out";
    int bench_runs = 10;
    std::uint64_t bench_seed = 0;
    bench->add_option("--out", bench_out, "output directory");
    bench->add_option("--runs", bench_runs, "number of evaluation runs");
    bench->add_option("--seed", bench_seed, "root seed");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "evaluate trained policies across accessibility fractions");
    ScenarioArgs sweep_scen;
    add_scenario_options(sweep, sweep_scen);
    std::string sweep_out = "sweep_out";
    std::string sweep_ckpt_dir;
    std::string sweep_kind = "mfc";
    std::vector<double> sweep_p = {0.0, 0.25, 0.5, 0.75};
    int sweep_runs = 10;
    std::uint64_t sweep_seed = 0;
    sweep->add_option("--out", sweep_out, "output directory");
    sweep->add_option("--checkpoint-dir", sweep_ckpt_dir,
                      "directory holding <kind>_p<percent>.mfnet checkpoints")->required();
    sweep->add_option("--kind", sweep_kind, "mfc or mfrl checkpoints");
    sweep->add_option("--p-fractions", sweep_p, "accessibility fractions to sweep");
    sweep->add_option("--runs", sweep_runs, "runs per point");
    sweep->add_option("--seed", sweep_seed, "root seed");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suites");
    std::uint64_t gc_seed = 20240901;
    gc->add_option("--seed", gc_seed, "suite seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen->parsed()) {
            mf::ScenarioSpec spec = mf::ScenarioSpec::desk_city();
            if (gen_grid != 10) {
                // Non-desk sizes: operational everywhere, rescaled desk demand.
                spec.grid_m = gen_grid;
                spec.operational_mask.assign(static_cast<size_t>(gen_grid) * gen_grid, 1);
                spec.od_attraction.clear();
            }
            spec.fleet_size = gen_fleet;
            spec.init_alpha = gen_alpha;
            spec.variant.seed = gen_seed;
            // Default shock region: the north-east corner block.
            spec.variant.shock_zones = {spec.grid_m * spec.grid_m - 1, spec.grid_m * spec.grid_m - 2,
                                        spec.grid_m * (spec.grid_m - 1) - 1,
                                        spec.grid_m * (spec.grid_m - 1) - 2};
            spec.variant.shock_begin = 12;
            spec.variant.shock_end = 15;
            const mf::CityGrid grid = spec.make_grid();
            const mf::DemandPattern demand = mf::build_demand(spec, grid);
            fs::create_directories(gen_out);
            write_file(gen_out + "/scenario.json", spec.to_json());
            write_file(gen_out + "/grid.json", grid.to_json());
            write_file(gen_out + "/demand.json", demand.to_json());
            std::printf("wrote %s/{scenario,grid,demand}.json (grid %dx%d, %d operational zones)\n",
                        gen_out.c_str(), grid.M(), grid.M(), grid.n_operational());
            return kExitOk;
        }

        if (mfc->parsed()) {
            const mf::ScenarioSpec spec = mfc_scen.load();
            const mf::CityGrid grid = spec.make_grid();
            const mf::DemandPattern demand = mf::build_demand(spec, grid);
            const double lambda = mfc_p == 0.0 ? 0.0 : mfc_lambda;
            const mf::AccessSpec access = mf::AccessSpec::from_grid(grid, mfc_p, lambda);

            mf::Rng rng(mfc_seed);
            mf::PolicyNet policy(policy_config(spec, mfc_hidden), rng);
            mf::TrainConfig tc;
            tc.epochs = mfc_epochs;
            tc.seed = mfc_seed;

            // Training protocol: profit-driven runs start uniform, constrained
            // runs start on the demand distribution.
            const double alpha = mfc_p == 0.0 ? 1.0 : 0.0;
            const mf::GridMeasure uniform = mf::GridMeasure::uniform_operational(grid);
            mf::GridMeasure mu0(grid.n_zones());
            for (int i = 0; i < grid.n_zones(); ++i)
                mu0[i] = alpha * uniform[i] + (1.0 - alpha) * demand.dist[0][i];

            const mf::TrainResult tr =
                mf::train_policy(policy, tc, mu0, demand, spec.fleet_size,
                                 mf::MatchModel::ot(spec.match), access, grid, spec.noise);
            fs::create_directories(mfc_out);
            policy.save(mfc_out + "/policy.mfnet");
            mf::write_train_log_csv(mfc_out + "/training_log.csv", tr.log);
            std::printf("best objective %.6f at epoch %d (%zu epochs run)\n", tr.best_objective,
                        tr.best_epoch, tr.log.size());
            if (tr.failed) {
                std::fprintf(stderr, "training failed: objective stuck at the constraint penalty\n");
                return kExitTrainingFailure;
            }
            return kExitOk;
        }

        if (mfrl->parsed()) {
            const mf::ScenarioSpec spec0 = mfrl_scen.load();
            mf::ScenarioSpec spec = spec0;
            spec.init_alpha = mfrl_p == 0.0 ? 1.0 : 0.0;
            const mf::CityGrid grid = spec.make_grid();
            const mf::DemandPattern demand = mf::build_demand(spec, grid);

            mf::ProtocolConfig pc;
            pc.episodes = mfrl_episodes;
            pc.p_fraction = mfrl_p;
            pc.lambda = mfrl_lambda;
            pc.policy_net = policy_config(spec, mfrl_hidden);
            pc.policy_train.epochs = mfrl_epochs;
            pc.policy_train.seed = mfrl_seed;
            pc.classifier = mf::ClassifierConfig::for_grid(spec.grid_m);
            pc.classifier.seed = mfrl_seed + 1;
            pc.env_seed = mfrl_seed + 2;
            fs::create_directories(mfrl_out);
            pc.artifact_dir = mfrl_out;

            const mf::ProtocolResult res = mf::run_protocol(pc, spec, grid, demand);
            res.policy.save(mfrl_out + "/policy.mfnet");
            std::printf("episodes: ");
            for (const auto& e : res.episodes) std::printf("%.4f ", e.realized_reward_mean);
            std::printf("\n");
            return kExitOk;
        }

        if (eval->parsed()) {
            const mf::ScenarioSpec spec = eval_scen.load();
            const mf::CityGrid grid = spec.make_grid();
            const mf::DemandPattern demand = mf::build_demand(spec, grid);

            mf::RunConfig rc;
            rc.kind = mf::policy_kind_from_string(eval_policy);
            rc.runs = eval_runs;
            rc.seed = eval_seed;
            rc.p_fraction = eval_p;
            if (eval_alpha >= 0.0) rc.init_alpha = eval_alpha;
            mf::PolicyNet policy;
            if (rc.kind == mf::PolicyKind::Mfc || rc.kind == mf::PolicyKind::Mfrl) {
                if (eval_checkpoint.empty()) throw std::runtime_error("--checkpoint required for mean-field policies");
                policy = mf::PolicyNet::load(eval_checkpoint);
                rc.policy = &policy;
            }
            const mf::MetricsReport report = mf::evaluate(rc, spec, grid, demand);
            fs::create_directories(eval_out);
            mf::write_metrics_csv(eval_out + "/metrics.csv", report);
            mf::write_summary_json(eval_out + "/summary.json", report, eval_policy);
            std::printf("%s: accessibility %.4f  utilization %.4f  service %.4f  pickup %.1f m\n",
                        eval_policy.c_str(), report.mean.accessibility, report.mean.utilization,
                        report.mean.service_rate, report.mean.pickup_distance_m);
            return kExitOk;
        }

        if (bench->parsed()) {
            const mf::ScenarioSpec spec = bench_scen.load();
            const mf::CityGrid grid = spec.make_grid();
            const mf::DemandPattern demand = mf::build_demand(spec, grid);
            fs::create_directories(bench_out);
            std::vector<mf::SweepEntry> entries;
            for (const char* name : {"none", "lp-static", "lp-dynamic"}) {
                mf::RunConfig rc;
                rc.kind = mf::policy_kind_from_string(name);
                rc.runs = bench_runs;
                rc.seed = bench_seed;
                const auto t0 = std::chrono::steady_clock::now();
                mf::SweepEntry e;
                e.variant = name;
                e.report = mf::evaluate(rc, spec, grid, demand);
                const auto t1 = std::chrono::steady_clock::now();
                entries.push_back(std::move(e));
                std::printf("%-10s  accessibility %.4f  utilization %.4f  service %.4f  wall %.2f s\n",
                            name, entries.back().report.mean.accessibility,
                            entries.back().report.mean.utilization,
                            entries.back().report.mean.service_rate,
                            std::chrono::duration<double>(t1 - t0).count());
            }
            mf::write_sweep_csv(bench_out + "/benchmark.csv", entries);
            return kExitOk;
        }

        if (sweep->parsed()) {
            const mf::ScenarioSpec spec = sweep_scen.load();
            const mf::CityGrid grid = spec.make_grid();
            const mf::DemandPattern demand = mf::build_demand(spec, grid);
            std::vector<mf::SweepEntry> entries;
            std::vector<mf::PolicyNet> nets;
            nets.reserve(sweep_p.size());
            for (const double p : sweep_p) {
                const int percent = static_cast<int>(std::lround(p * 100));
                const std::string ckpt =
                    sweep_ckpt_dir + "/" + sweep_kind + "_p" + std::to_string(percent) + ".mfnet";
                nets.push_back(mf::PolicyNet::load(ckpt));
                mf::RunConfig rc;
                rc.kind = mf::policy_kind_from_string(sweep_kind);
                rc.policy = &nets.back();
                rc.runs = sweep_runs;
                rc.seed = sweep_seed;
                rc.p_fraction = p;
                mf::SweepEntry e;
                e.p_fraction = p;
                e.variant = sweep_scen.variant;
                e.report = mf::evaluate(rc, spec, grid, demand);
                entries.push_back(std::move(e));
                std::printf("p=%.2f  accessibility %.4f  utilization %.4f\n", p,
                            entries.back().report.mean.accessibility,
                            entries.back().report.mean.utilization);
            }
            mf::mark_pareto_front(entries);
            fs::create_directories(sweep_out);
            mf::write_sweep_csv(sweep_out + "/sweep.csv", entries);
            int front = 0;
            for (const auto& e : entries) front += e.pareto_front ? 1 : 0;
            std::printf("pareto front members: %d of %zu\n", front, entries.size());
            return kExitOk;
        }

        if (gc->parsed()) {
            const mf::GradCheckReport prim = mf::gradcheck_primitives(gc_seed);
            std::printf("primitives: %d checks, %d failures, worst rel %.3e (%s)\n", prim.checks,
                        prim.failures, prim.worst_rel, prim.worst_label.c_str());
            const mf::GradCheckReport bptt = mf::gradcheck_bptt(gc_seed + 1);
            std::printf("mf-bptt:    %d checks, %d failures, worst rel %.3e (%s)\n", bptt.checks,
                        bptt.failures, bptt.worst_rel, bptt.worst_label.c_str());
            return prim.passed() && bptt.passed() ? kExitOk : 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitOk;
}
