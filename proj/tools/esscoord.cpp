#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "esscoord/config.hpp"
#include "esscoord/controller.hpp"
#include "esscoord/dualnet.hpp"
#include "esscoord/error.hpp"
#include "esscoord/grid.hpp"
#include "esscoord/sim.hpp"
#include "esscoord/storage.hpp"

namespace fs = std::filesystem;
using namespace esscoord;

namespace {

enum Exit { kOk = 0, kUsage = 2, kMissingFile = 3, kInvalid = 4, kRuntime = 5 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingFile : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) throw MissingFile(std::string(what) + " not found: " + p.string());
}

// Settings shared by run, tune and solve-step; empty strings mean "not given".
struct Common {
    std::string config, scenario, feeder, fleet, trace, mode, solver, envelope, schedule, backend, fallback,
        measurement;
    std::optional<long> seed, horizon, max_iters;
    std::optional<double> tol;
    bool random_tree = false;

    void add(CLI::App* app) {
        app->add_option("--config", config, "key=value settings file");
        app->add_option("--scenario", scenario, "synthetic|random|trace, a shipped scenario name, or a .cfg path");
        app->add_option("--feeder", feeder, "feeder file");
        app->add_option("--fleet", fleet, "fleet file");
        app->add_option("--trace-file", trace, "market trace file");
        app->add_option("--mode", mode, "weighted|nonweighted|greedy|relaxed_sign");
        app->add_option("--solver", solver, "centralized|distributed");
        app->add_option("--seed", seed, "seed for random scenarios");
        app->add_option("--horizon", horizon, "number of periods");
        app->add_option("--envelope", envelope, "proof|statement");
        app->add_option("--schedule", schedule, "dual step schedule: metric|scaled|diminishing");
        app->add_option("--dual-tol", tol, "dual stopping tolerance");
        app->add_option("--dual-max-iters", max_iters, "dual iteration cap");
        app->add_option("--backend", backend, "serial|openmp");
        app->add_option("--fallback", fallback, "strict|force_zero");
        app->add_option("--measurement", measurement, "ldf|ac");
        app->add_flag("--random-tree", random_tree, "redraw the communication tree each period");
    }

    // Loads the config (explicit or via --scenario) and applies overrides.
    config::RunConfig resolve(bool need_seed = true) const {
        fs::path cfg_path = config;
        std::string kind;
        if (!scenario.empty()) {
            if (scenario == "synthetic" || scenario == "random" || scenario == "trace") {
                kind = scenario;
            } else if (cfg_path.empty()) {
                cfg_path = scenario;
                if (!fs::exists(cfg_path)) cfg_path = fs::path(ESSCOORD_DATA_DIR) / "scenarios" / (scenario + ".cfg");
                if (!fs::exists(cfg_path)) throw MissingFile("scenario not found: " + scenario);
            } else {
                throw UsageError("--scenario names a config file and --config is also given");
            }
        }
        config::KeyValues kv;
        fs::path base = fs::current_path();
        if (!cfg_path.empty()) {
            require_file(cfg_path, "config");
            kv = config::KeyValues::load(cfg_path);
            base = fs::absolute(cfg_path).parent_path();
        }
        // command-line paths are relative to the working directory
        const auto set_path = [&](const char* key, const std::string& v) {
            if (!v.empty()) kv.set(key, fs::absolute(v).string());
        };
        const auto set = [&](const char* key, const std::string& v) {
            if (!v.empty()) kv.set(key, v);
        };
        set("scenario", kind);
        set_path("feeder", feeder);
        set_path("fleet", fleet);
        set_path("trace", trace);
        set("mode", mode);
        set("solver", solver);
        set("envelope", envelope);
        set("dual.schedule", schedule);
        set("dual.backend", backend);
        set("fallback", fallback);
        set("measurement", measurement);
        if (seed) kv.set("seed", std::to_string(*seed));
        if (horizon) kv.set("horizon", std::to_string(*horizon));
        if (max_iters) kv.set("dual.max_iters", std::to_string(*max_iters));
        if (tol) kv.set("dual.tol", text_of(*tol));
        if (random_tree) kv.set("random_tree", "true");

        auto rc = config::parse_run_config(kv, base);
        if (need_seed && rc.scenario == sim::Scenario::Kind::Random && !rc.seed_given)
            throw UsageError("--seed is required for random scenarios");
        require_file(rc.feeder, "feeder");
        require_file(rc.fleet, "fleet");
        if (rc.scenario == sim::Scenario::Kind::Trace) require_file(rc.trace, "trace");
        return rc;
    }

    static std::string text_of(double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }
};

void open_out(std::ofstream& os, const fs::path& p) {
    os.open(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
}

int cmd_run(const Common& common, const std::string& trajectory, const std::string& metrics) {
    auto rc = common.resolve();
    if (!trajectory.empty()) rc.trajectory_out = trajectory;
    if (!metrics.empty()) rc.metrics_out = metrics;
    const auto world = config::build_world(rc);
    const auto res = sim::run(world, rc.options);
    if (!rc.trajectory_out.empty()) {
        std::ofstream os;
        open_out(os, rc.trajectory_out);
        sim::write_trajectory(os, res, rc.options);
    }
    if (!rc.metrics_out.empty()) {
        std::ofstream os;
        open_out(os, rc.metrics_out);
        sim::write_metrics(os, res, rc.options);
    }
    sim::write_metrics(std::cout, res, rc.options);
    return kOk;
}

int cmd_tune(const Common& common) {
    const auto rc = common.resolve(false);
    const auto world = config::build_world(rc);
    const auto bounds = world.scenario.bounds();
    bounds.validate();
    bounds.require_positive_cp();
    const auto g = storage::price_envelopes(bounds, rc.options.envelope);
    const auto wt = storage::tune_weighted(world.fleet, g);
    const auto nw = storage::tune_nonweighted(world.fleet, g);
    const auto gaps = sim::suboptimality_report(world.fleet, g, bounds.cp.lo);
    std::printf("%6s %12s %12s %12s %12s %12s %12s %12s\n", "bus", "g_lo", "g_hi", "delta", "w", "gamma", "k",
                "gamma_nw");
    for (std::size_t i = 0; i < world.size(); ++i) {
        const auto& p = wt[i];
        std::printf("%6ld %12.6g %12.6g %12.6g %12.6g %12.6g %12.6g %12.6g\n", world.feeder.labels()[i], p.g.lo,
                    p.g.hi, p.delta, p.w, p.gamma, p.k, nw[i].gamma);
    }
    std::printf("w_nonweighted=%.10g\nk_star=%.10g\nk_prime=%.10g\ndistance_bound=%.10g\n", nw.front().w, gaps.k_star,
                gaps.k_prime, gaps.distance_bound);
    return kOk;
}

int cmd_solve_step(const Common& common, long period, bool compare, const std::string& trace_out) {
    const auto rc = common.resolve();
    const auto world = config::build_world(rc);
    const auto& o = rc.options;
    const auto params = sim::tune(o.mode, world.fleet, world.scenario.bounds(), o.envelope);
    const auto n = static_cast<Eigen::Index>(world.size());
    const Eigen::VectorXd gamma = uses_queues(o.mode) ? storage::gammas(params) : Eigen::VectorXd::Zero(n);
    const auto state = storage::initial_state(world.fleet, gamma);
    const auto tick = world.scenario.tick(static_cast<std::size_t>(period), o.seed);
    const auto problem = controller::assemble_step(o.mode, state, tick, params, world.fleet, world.voltage);

    const auto central = controller::solve_centralized(problem);
    dualnet::Trace trace;
    const auto dist = dualnet::solve_distributed(problem, o.dual, nullptr, nullptr, &trace);

    std::printf("period=%ld r=%d c0=%.6g cp=%.6g cr=%.6g\n", period, tick.r, tick.c0, tick.cp, tick.cr);
    std::printf("%6s %16s %16s\n", "bus", "b_centralized", "b_distributed");
    for (Eigen::Index i = 0; i < n; ++i)
        std::printf("%6ld %16.10g %16.10g\n", world.feeder.labels()[static_cast<std::size_t>(i)], central.b(i),
                    dist.decision.b(i));
    std::printf("objective_centralized=%.12g\nobjective_distributed=%.12g\n", central.objective,
                dist.decision.objective);
    std::printf("kkt_residual=%.3g\niterations=%d\nresidual=%.3g\nconverged=%s\n", central.kkt_residual,
                dist.decision.iterations, dist.residual, dist.converged ? "true" : "false");
    int code = kOk;
    if (compare) {
        const double gap = (central.b - dist.decision.b).lpNorm<Eigen::Infinity>();
        std::printf("max_abs_difference=%.3g\nwithin_1e-6=%s\n", gap, gap <= 1e-6 ? "true" : "false");
        if (gap > 1e-6) code = kRuntime;
    }
    if (!trace_out.empty()) {
        if (trace_out == "-") {
            dualnet::write_trace(std::cout, trace);
        } else {
            std::ofstream os;
            open_out(os, trace_out);
            dualnet::write_trace(os, trace);
        }
    }
    if (!dist.converged) {
        std::fprintf(stderr, "error: distributed solver did not reach tolerance\n");
        return kRuntime;
    }
    return code;
}

int cmd_validate_feeder(const std::string& path, double load, double pf, double limit) {
    require_file(path, "feeder");
    const auto feeder = grid::load_feeder(path);
    const auto sens = grid::build_sensitivities(feeder);
    const auto n = static_cast<Eigen::Index>(feeder.bus_count());
    const Eigen::VectorXd p = Eigen::VectorXd::Constant(n, load);
    const Eigen::VectorXd q = config::reactive_from_pf(p, pf);
    const auto ldf = grid::ldf_voltages(sens, p, q, feeder.v0());
    const auto ac = grid::ac_sweep(feeder, p, q);
    const auto margins = grid::voltage_margins(sens, p, q, feeder.band());
    double worst = 0.0;
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = std::abs(std::sqrt(ldf.v(i)) - std::sqrt(ac.voltage.v(i)));
        if (d > worst) worst = d, at = i;
    }
    std::printf("buses=%ld\nload_p=%.6g\npower_factor=%.6g\n", static_cast<long>(n), load, pf);
    std::printf("ldf_v_min=%.10g\nac_v_min=%.10g\nac_iterations=%d\nac_residual=%.3g\n", ldf.min(), ac.voltage.min(),
                ac.iterations, ac.residual);
    std::printf("band_feasible=%s\nworst_band_slack=%.6g\n", margins.feasible() ? "true" : "false", margins.worst());
    std::printf("max_magnitude_error=%.6g\nworst_bus=%ld\nlimit=%.6g\n", worst,
                feeder.labels()[static_cast<std::size_t>(at)], limit);
    if (worst >= limit) {
        std::fprintf(stderr, "error: linearization error %.6g pu exceeds %.6g pu\n", worst, limit);
        return kInvalid;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Real-time coordination of networked storage units on a radial feeder"};
    app.require_subcommand(1);

    Common run_opts, tune_opts, step_opts;
    std::string trajectory, metrics;
    auto* run = app.add_subcommand("run", "simulate a horizon and print metrics");
    run_opts.add(run);
    run->add_option("--trajectory", trajectory, "trajectory CSV output");
    run->add_option("--metrics", metrics, "metrics output");

    auto* tune = app.add_subcommand("tune", "print tuned parameters and gaps");
    tune_opts.add(tune);

    long period = 0;
    bool compare = false;
    std::string trace_out;
    auto* step = app.add_subcommand("solve-step", "solve one period with both solvers");
    step_opts.add(step);
    step->add_option("--period", period, "period index")->check(CLI::NonNegativeNumber);
    step->add_flag("--compare", compare, "report the distance between the two solutions");
    step->add_option("--trace", trace_out, "iteration trace CSV ('-' for stdout)");

    std::string feeder_path;
    double load = 0.05, pf = 0.9, limit = 0.005;
    auto* vf = app.add_subcommand("validate-feeder", "compare linearized and exact voltages");
    vf->add_option("feeder", feeder_path, "feeder file")->required();
    vf->add_option("--load", load, "uniform active load per bus (pu)");
    vf->add_option("--pf", pf, "power factor");
    vf->add_option("--limit", limit, "allowed magnitude error (pu)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        if (*run) return cmd_run(run_opts, trajectory, metrics);
        if (*tune) return cmd_tune(tune_opts);
        if (*step) return cmd_solve_step(step_opts, period, compare, trace_out);
        if (*vf) return cmd_validate_feeder(feeder_path, load, pf, limit);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const MissingFile& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kMissingFile;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const TopologyError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const AssumptionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const DegenerateEnvelopeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kUsage;
}
