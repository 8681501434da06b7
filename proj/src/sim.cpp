#include "esscoord/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "esscoord/error.hpp"
#include "text.hpp"

namespace esscoord::sim {

market::MarketTick Scenario::tick(std::size_t t, std::uint64_t seed) const {
    switch (kind) {
    case Kind::Synthetic:
        return market::scenario_synthetic(synthetic, t);
    case Kind::Random:
        return market::scenario_random(random, seed, t);
    case Kind::Trace:
        if (!trace || t >= trace->ticks.size())
            throw ValidationError("trace has no period " + std::to_string(t));
        return trace->ticks[t];
    }
    throw InternalError("unknown scenario kind");
}

market::WorldBounds Scenario::bounds() const {
    switch (kind) {
    case Kind::Synthetic:
        return market::synthetic_bounds(synthetic);
    case Kind::Random:
        return market::random_bounds(random);
    case Kind::Trace:
        if (!trace) throw ValidationError("trace scenario without data");
        return trace->bounds;
    }
    throw InternalError("unknown scenario kind");
}

std::optional<std::size_t> Scenario::length() const {
    if (kind == Kind::Trace && trace) return trace->ticks.size();
    return std::nullopt;
}

World::World(grid::Feeder f, storage::Fleet fl, Scenario sc)
    : feeder(std::move(f)), fleet(std::move(fl)), scenario(std::move(sc)) {
    if (fleet.size() != feeder.bus_count()) throw ValidationError("fleet size differs from the feeder's bus count");
    if (scenario.bounds().size() != fleet.size()) throw ValidationError("scenario load vectors differ from fleet size");
    voltage.sens = std::make_shared<grid::SensitivityMatrices>(grid::build_sensitivities(feeder));
    voltage.band = feeder.band();
    voltage.v0 = feeder.v0();
}

std::vector<storage::TunedParams> tune(Mode mode, const storage::Fleet& fleet, const market::WorldBounds& bounds,
                                       storage::EnvelopeConvention convention) {
    if (!uses_queues(mode)) return {};
    bounds.validate();
    bounds.require_positive_cp();
    const auto g = storage::price_envelopes(bounds, convention);
    return mode == Mode::NonWeighted ? storage::tune_nonweighted(fleet, g) : storage::tune_weighted(fleet, g);
}

storage::Gaps suboptimality_report(const storage::Fleet& fleet, const std::vector<storage::PriceEnvelope>& g,
                                   double cp_lo) {
    const auto gaps = storage::suboptimality_gaps(fleet, storage::tune_weighted(fleet, g), cp_lo);
    if (gaps.k_star > gaps.k_prime * (1.0 + 1e-12))
        throw InternalError("weighted gap " + text::fmt(gaps.k_star) + " exceeds the common-weight gap " +
                            text::fmt(gaps.k_prime));
    return gaps;
}

std::size_t characterization_violations(const TrajectoryRecord& rec, const std::vector<storage::TunedParams>& params,
                                        double tol) {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto n = static_cast<Eigen::Index>(i);
        const auto& p = params[i];
        const double x = rec.x_before(n);
        const bool pinned = (rec.tick.r == 1 && x + p.g.lo / p.w >= 0.0) || (rec.tick.r == -1 && x + p.g.hi / p.w <= 0.0);
        if (pinned && std::abs(rec.b(n)) > tol) ++bad;
    }
    return bad;
}

namespace {

std::string with_period(std::size_t t, const std::string& what) { return "period " + std::to_string(t) + ": " + what; }

std::uint64_t tree_seed(std::uint64_t seed, std::size_t t) {
    // splitmix64 finaliser over (seed, t)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(t) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

RunResult run(const World& world, const RunOptions& opt) {
    if (opt.horizon == 0) throw ValidationError("horizon must be at least 1");
    if (auto len = world.scenario.length(); len && opt.horizon > *len)
        throw ValidationError("horizon " + std::to_string(opt.horizon) + " exceeds the trace length " +
                              std::to_string(*len));
    const auto bounds = world.scenario.bounds();
    bounds.validate();
    const auto n = static_cast<Eigen::Index>(world.size());

    RunResult res;
    res.params = tune(opt.mode, world.fleet, bounds, opt.envelope);
    const bool queues = uses_queues(opt.mode);
    const Eigen::VectorXd gamma = queues ? storage::gammas(res.params) : Eigen::VectorXd::Zero(n);
    const Eigen::VectorXd w = queues ? storage::weights(res.params) : Eigen::VectorXd::Zero(n);

    if (bounds.cp.lo > 0.0) {
        try {
            res.metrics.gaps = suboptimality_report(world.fleet, storage::price_envelopes(bounds, opt.envelope),
                                                    bounds.cp.lo);
        } catch (const DegenerateEnvelopeError&) {
        } catch (const AssumptionError&) {
        }
    }

    controller::PolicyOptions popt;
    popt.solver = opt.solver;
    popt.dual = opt.dual;
    popt.force_zero_fallback = opt.force_zero_fallback;

    auto state = storage::initial_state(world.fleet, gamma);
    res.s_initial = state.s;
    Eigen::VectorXd b_prev = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd cost_sum = Eigen::VectorXd::Zero(n);
    double total = 0.0;
    long iter_sum = 0;
    const auto& sens = *world.voltage.sens;
    res.records.reserve(opt.horizon);

    for (std::size_t t = 0; t < opt.horizon; ++t) {
        TrajectoryRecord rec;
        rec.t = t;
        rec.tick = world.scenario.tick(t, opt.seed);
        if (rec.tick.size() != world.size()) throw ValidationError(with_period(t, "tick size differs from fleet"));
        rec.x_before = state.x;

        dualnet::Measurement meas;
        dualnet::SpanningTree tree;
        controller::PolicyContext ctx;
        if (opt.solver == controller::Solver::Distributed) {
            const Eigen::VectorXd p = rec.tick.load_p + b_prev;
            meas.v = opt.measurement == MeasurementModel::Ac
                         ? grid::ac_sweep(world.feeder, p, rec.tick.load_q).voltage.v
                         : grid::ldf_voltages(sens, p, rec.tick.load_q, world.voltage.v0).v;
            meas.b_prev = b_prev;
            ctx.measurement = &meas;
            if (opt.random_tree) {
                tree = dualnet::SpanningTree::random(world.size(), tree_seed(opt.seed, t));
                ctx.tree = &tree;
            }
        }

        Decision d;
        try {
            d = controller::policy_step(opt.mode, state, rec.tick, res.params, world.fleet, world.voltage, popt, ctx);
            const auto next = storage::advance_soc(state, d.b, world.fleet);
            if (queues) {
                const auto drift = storage::drift_bound(state.x, d.b, w, world.fleet);
                rec.drift_slack = drift.slack;
                if (!drift.holds) ++res.metrics.drift_violations;
            } else {
                rec.drift_slack = std::numeric_limits<double>::quiet_NaN();
            }
            state = next;
        } catch (const SocViolation& e) {
            throw SocViolation(e.unit(), e.soc(), with_period(t, e.what()));
        } catch (const InfeasibleStep& e) {
            throw InfeasibleStep(with_period(t, e.what()));
        } catch (const DivergenceError& e) {
            throw DivergenceError(with_period(t, e.what()));
        }

        rec.b = d.b;
        rec.fallback = d.fallback;
        rec.iterations = d.iterations;
        rec.cost = controller::aggregate_cost(d.b, rec.tick);
        rec.user_cost = controller::per_user_cost(d.b, rec.tick);
        rec.s = state.s;
        const Eigen::VectorXd p = rec.tick.load_p + d.b;
        const auto v = grid::ldf_voltages(sens, p, rec.tick.load_q, world.voltage.v0);
        rec.v_min = v.min();
        rec.v_max = v.max();
        rec.voltage_slack = grid::voltage_margins(sens, p, rec.tick.load_q, world.voltage.band).worst();
        if (opt.mode == Mode::Weighted)
            res.metrics.characterization_violations += characterization_violations(rec, res.params);

        total += rec.cost;
        cost_sum += rec.user_cost;
        iter_sum += d.iterations;
        res.metrics.max_iterations = std::max(res.metrics.max_iterations, d.iterations);
        b_prev = d.b;
        res.records.push_back(std::move(rec));
    }

    auto& m = res.metrics;
    const double T = static_cast<double>(opt.horizon);
    m.periods = opt.horizon;
    m.average_cost = total / T;
    m.average_user_cost = cost_sum / T;
    m.mean_iterations = static_cast<double>(iter_sum) / T;
    const auto report = audit(res.records, world.fleet, opt.mode);
    m.soc_violations = report.soc_violations;
    m.voltage_violations = report.voltage_violations;
    m.sign_violations = report.sign_violations;
    m.fallbacks = report.fallbacks;
    m.alignment = report.alignment;
    return res;
}

FeasibilityReport audit(const std::vector<TrajectoryRecord>& records, const storage::Fleet& fleet, Mode mode,
                        double tol) {
    FeasibilityReport rep;
    const auto n = static_cast<Eigen::Index>(fleet.size());
    Eigen::VectorXd sum_b = Eigen::VectorXd::Zero(n);
    std::size_t moves = 0, aligned = 0;
    for (const auto& rec : records) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& u = fleet.units[static_cast<std::size_t>(i)];
            if (rec.s(i) < u.s_min - tol || rec.s(i) > u.s_max + tol) ++rep.soc_violations;
            const double rb = rec.tick.r * rec.b(i);
            if (std::abs(rec.b(i)) > tol) {
                ++moves;
                if (rb >= 0.0) ++aligned;
            }
            if (sign_constrained(mode) && rb < -tol) ++rep.sign_violations;
        }
        if (rec.voltage_slack < -tol) ++rep.voltage_violations;
        if (rec.fallback) ++rep.fallbacks;
        sum_b += rec.b;
    }
    rep.alignment = moves ? static_cast<double>(aligned) / static_cast<double>(moves) : 1.0;
    rep.worst_average_margin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& u = fleet.units[static_cast<std::size_t>(i)];
        const double margin = (u.s_max - u.s_min) - std::abs(sum_b(i));
        rep.worst_average_margin = std::min(rep.worst_average_margin, margin);
        if (margin < -tol) ++rep.average_violations;
    }
    return rep;
}

namespace {

void csv_vec(std::ostream& os, const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << text::fmt(v(i));
}

void csv_names(std::ostream& os, const char* prefix, Eigen::Index n) {
    for (Eigen::Index i = 1; i <= n; ++i) os << ',' << prefix << i;
}

}  // namespace

void write_trajectory(std::ostream& os, const RunResult& res, const RunOptions& opt) {
    const auto n = static_cast<Eigen::Index>(res.s_initial.size());
    os << "# esscoord trajectory v" << kTrajectoryVersion << " mode=" << to_string(opt.mode)
       << " solver=" << (opt.solver == controller::Solver::Centralized ? "centralized" : "distributed")
       << " seed=" << opt.seed << " horizon=" << opt.horizon << '\n';
    os << "t,r,c0,cp,cr,cost,avg_cost,v_min,v_max,voltage_slack,drift_slack,iterations,fallback";
    csv_names(os, "b_", n);
    csv_names(os, "s_", n);
    csv_names(os, "f_", n);
    os << '\n';
    double total = 0.0;
    for (const auto& r : res.records) {
        total += r.cost;
        os << r.t << ',' << r.tick.r << ',' << text::fmt(r.tick.c0) << ',' << text::fmt(r.tick.cp) << ','
           << text::fmt(r.tick.cr) << ',' << text::fmt(r.cost) << ',' << text::fmt(total / static_cast<double>(r.t + 1))
           << ',' << text::fmt(r.v_min) << ',' << text::fmt(r.v_max) << ',' << text::fmt(r.voltage_slack) << ','
           << (std::isnan(r.drift_slack) ? std::string("nan") : text::fmt(r.drift_slack)) << ',' << r.iterations << ','
           << (r.fallback ? 1 : 0);
        csv_vec(os, r.b);
        csv_vec(os, r.s);
        csv_vec(os, r.user_cost);
        os << '\n';
    }
}

void write_metrics(std::ostream& os, const RunResult& res, const RunOptions& opt) {
    const auto& m = res.metrics;
    os << "mode=" << to_string(opt.mode) << '\n'
       << "solver=" << (opt.solver == controller::Solver::Centralized ? "centralized" : "distributed") << '\n'
       << "seed=" << opt.seed << '\n'
       << "periods=" << m.periods << '\n'
       << "average_cost=" << text::fmt(m.average_cost) << '\n';
    for (Eigen::Index i = 0; i < m.average_user_cost.size(); ++i)
        os << "average_cost_" << i + 1 << '=' << text::fmt(m.average_user_cost(i)) << '\n';
    os << "k_star=" << text::fmt(m.gaps.k_star) << '\n'
       << "k_prime=" << text::fmt(m.gaps.k_prime) << '\n'
       << "distance_bound=" << text::fmt(m.gaps.distance_bound) << '\n'
       << "soc_violations=" << m.soc_violations << '\n'
       << "voltage_violations=" << m.voltage_violations << '\n'
       << "sign_violations=" << m.sign_violations << '\n'
       << "drift_violations=" << m.drift_violations << '\n'
       << "characterization_violations=" << m.characterization_violations << '\n'
       << "fallbacks=" << m.fallbacks << '\n'
       << "alignment=" << text::fmt(m.alignment) << '\n'
       << "mean_iterations=" << text::fmt(m.mean_iterations) << '\n'
       << "max_iterations=" << m.max_iterations << '\n';
}

}  // namespace esscoord::sim
