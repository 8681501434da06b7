#include "esscoord/controller.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "esscoord/error.hpp"

namespace esscoord {

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::Weighted: return "weighted";
        case Mode::NonWeighted: return "nonweighted";
        case Mode::Greedy: return "greedy";
        case Mode::RelaxedSign: return "relaxed_sign";
    }
    return "?";
}

Mode parse_mode(std::string_view name) {
    if (name == "weighted") return Mode::Weighted;
    if (name == "nonweighted") return Mode::NonWeighted;
    if (name == "greedy") return Mode::Greedy;
    if (name == "relaxed_sign") return Mode::RelaxedSign;
    throw ValidationError("unknown mode '" + std::string(name) + "'");
}

double StepProblem::objective(const Eigen::VectorXd& b) const {
    const Eigen::VectorXd p = b + load_p;
    const double s = p.sum();
    return queue.dot(b) + c0 * s + 0.5 * cp * (p.squaredNorm() + s * s) - r * cr * b.sum();
}

grid::VoltageMargins StepProblem::margins(const Eigen::VectorXd& b) const {
    const Eigen::VectorXd drop = voltage.sens->R * b + background;
    grid::VoltageMargins m;
    m.lower = (-drop.array() - voltage.band.alpha).matrix();
    m.upper = (drop.array() + voltage.band.beta).matrix();
    return m;
}

void annotate(const StepProblem& p, Decision& d, double tol) {
    const auto n = p.size();
    d.objective = p.objective(d.b);
    const auto m = p.margins(d.b);
    d.lower_active.assign(n, false);
    d.upper_active.assign(n, false);
    d.at_lo.assign(n, false);
    d.at_hi.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        d.lower_active[i] = m.lower(k) <= tol;
        d.upper_active[i] = m.upper(k) <= tol;
        d.at_lo[i] = d.b(k) - p.lo(k) <= tol;
        d.at_hi[i] = p.hi(k) - d.b(k) <= tol;
    }
}

}  // namespace esscoord

namespace esscoord::controller {

StepProblem assemble_step(Mode mode, const storage::FleetState& state, const market::MarketTick& tick,
                          const std::vector<storage::TunedParams>& params, const storage::Fleet& fleet,
                          const VoltageModel& voltage) {
    const auto n = fleet.size();
    if (tick.size() != n || static_cast<std::size_t>(state.s.size()) != n || voltage.size() != n)
        throw ValidationError("assemble_step: dimension mismatch");
    if (uses_queues(mode) && params.size() != n) throw ValidationError("assemble_step: missing tuned parameters");
    if (tick.r != 1 && tick.r != -1) throw ValidationError("assemble_step: r must be +1 or -1");
    if (!(tick.cp >= 0.0)) throw ValidationError("assemble_step: negative competitive price");

    StepProblem p;
    p.mode = mode;
    p.r = tick.r;
    p.c0 = tick.c0;
    p.cp = tick.cp;
    p.cr = tick.cr;
    p.load_p = tick.load_p;
    p.load_q = tick.load_q;
    p.voltage = voltage;
    const auto N = static_cast<Eigen::Index>(n);
    p.queue = Eigen::VectorXd::Zero(N);
    p.lo.resize(N);
    p.hi.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const auto& u = fleet.units[static_cast<std::size_t>(i)];
        if (uses_queues(mode)) p.queue(i) = params[static_cast<std::size_t>(i)].w * state.x(i);
        double lo = u.b_min, hi = u.b_max;
        if (sign_constrained(mode)) {
            if (tick.r > 0) lo = 0.0;
            else hi = 0.0;
        }
        if (mode == Mode::Greedy || mode == Mode::RelaxedSign) {
            const double s = std::clamp(state.s(i), u.s_min, u.s_max);
            lo = std::max(lo, u.s_min - s);
            hi = std::min(hi, u.s_max - s);
        }
        if (lo > hi) throw InfeasibleStep("empty box for unit " + std::to_string(i + 1));
        p.lo(i) = lo;
        p.hi(i) = hi;
    }
    p.linear = (p.queue.array() - tick.r * tick.cr + tick.c0).matrix();
    p.background = voltage.sens->R * tick.load_p + voltage.sens->X * tick.load_q;
    return p;
}

namespace {

// Proximal weight used only when the competitive price vanishes, so that the
// program keeps a unique minimizer.
constexpr double kZeroPriceProx = 1e-9;

Eigen::MatrixXd hessian(const StepProblem& p) {
    const auto n = static_cast<Eigen::Index>(p.size());
    Eigen::MatrixXd G = p.cp * (Eigen::MatrixXd::Identity(n, n) + Eigen::MatrixXd::Ones(n, n));
    if (p.cp == 0.0) G += kZeroPriceProx * Eigen::MatrixXd::Identity(n, n);
    return G;
}

Eigen::VectorXd gradient_at_zero(const StepProblem& p) {
    return p.linear + p.cp * (p.load_p.array() + p.load_p.sum()).matrix();
}

}  // namespace

qp::Problem to_qp(const StepProblem& p) {
    const auto n = static_cast<Eigen::Index>(p.size());
    const auto& R = p.voltage.sens->R;
    const auto& band = p.voltage.band;
    qp::Problem q;
    q.G = hessian(p);
    q.g = gradient_at_zero(p);
    q.C = Eigen::MatrixXd::Zero(n, 4 * n);
    q.d.resize(4 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        q.C(i, i) = 1.0;
        q.d(i) = -p.lo(i);
        q.C(i, n + i) = -1.0;
        q.d(n + i) = p.hi(i);
        q.C.col(2 * n + i) = -R.row(i).transpose();
        q.d(2 * n + i) = -p.background(i) - band.alpha;
        q.C.col(3 * n + i) = R.row(i).transpose();
        q.d(3 * n + i) = p.background(i) + band.beta;
    }
    return q;
}

Decision solve_centralized(const StepProblem& p) {
    const auto n = static_cast<Eigen::Index>(p.size());
    if (n == 0) throw ValidationError("solve_centralized: empty problem");
    if (!(p.cp >= 0.0)) throw ValidationError("solve_centralized: negative competitive price");
    const auto& R = p.voltage.sens->R;
    const auto& band = p.voltage.band;

    // Coordinates pinned by their box are substituted out.
    std::vector<Eigen::Index> free, fixed;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (p.hi(i) - p.lo(i) <= 0.0) {
            fixed.push_back(i);
            b(i) = p.lo(i);
        } else {
            free.push_back(i);
        }
    }
    const Eigen::MatrixXd G = hessian(p);
    const Eigen::VectorXd g0 = gradient_at_zero(p);
    const Eigen::VectorXd fixed_drop = R * b + p.background;

    Decision d;
    const auto m = static_cast<Eigen::Index>(free.size());
    Eigen::VectorXd mu_lo = Eigen::VectorXd::Zero(n), mu_hi = Eigen::VectorXd::Zero(n);
    if (m > 0) {
        qp::Problem q;
        q.G.resize(m, m);
        q.g.resize(m);
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index c = 0; c < m; ++c) q.G(a, c) = G(free[a], free[c]);
            q.g(a) = g0(free[a]) + G.row(free[a]).dot(b);
        }
        q.C = Eigen::MatrixXd::Zero(m, 2 * m + 2 * n);
        q.d.resize(2 * m + 2 * n);
        for (Eigen::Index a = 0; a < m; ++a) {
            q.C(a, a) = 1.0;
            q.d(a) = -p.lo(free[a]);
            q.C(a, m + a) = -1.0;
            q.d(m + a) = p.hi(free[a]);
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index a = 0; a < m; ++a) {
                q.C(a, 2 * m + i) = -R(i, free[a]);
                q.C(a, 2 * m + n + i) = R(i, free[a]);
            }
            q.d(2 * m + i) = -fixed_drop(i) - band.alpha;
            q.d(2 * m + n + i) = fixed_drop(i) + band.beta;
        }
        const auto sol = qp::solve(q);
        if (sol.status == qp::Status::Infeasible) throw InfeasibleStep("voltage band cannot be met this period");
        if (sol.status == qp::Status::IterationLimit) throw InternalError("active-set solver hit its iteration cap");
        for (Eigen::Index a = 0; a < m; ++a) b(free[a]) = sol.x(a);
        mu_lo = sol.multipliers.segment(2 * m, n);
        mu_hi = sol.multipliers.segment(2 * m + n, n);
        d.iterations = sol.iterations;
    } else {
        const Eigen::VectorXd drop = fixed_drop;
        if ((-drop.array() - band.alpha).minCoeff() < -1e-12 || (drop.array() + band.beta).minCoeff() < -1e-12)
            throw InfeasibleStep("voltage band cannot be met this period");
    }

    d.b = b;
    d.lambda_lo = mu_lo;
    d.lambda_hi = mu_hi;
    annotate(p, d);

    // KKT check on the full program; box multipliers follow from stationarity.
    const auto full = to_qp(p);
    qp::Solution s;
    s.x = b;
    s.multipliers = Eigen::VectorXd::Zero(4 * n);
    s.multipliers.segment(2 * n, n) = mu_lo;
    s.multipliers.segment(3 * n, n) = mu_hi;
    const Eigen::VectorXd r = full.G * b + full.g - full.C * s.multipliers;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (r(i) > 0.0 && d.at_lo[static_cast<std::size_t>(i)]) s.multipliers(i) = r(i);
        else if (r(i) < 0.0 && d.at_hi[static_cast<std::size_t>(i)]) s.multipliers(n + i) = -r(i);
    }
    d.kkt_residual = qp::kkt(full, s).worst();
    return d;
}

Eigen::VectorXd per_user_cost(const Eigen::VectorXd& b, const market::MarketTick& t) {
    if (b.size() != t.load_p.size()) throw ValidationError("per_user_cost: size mismatch");
    const Eigen::VectorXd p = b + t.load_p;
    const double price = t.c0 + t.cp * p.sum();
    return (price * p.array() - t.r * t.cr * b.array()).matrix();
}

double aggregate_cost(const Eigen::VectorXd& b, const market::MarketTick& t) {
    if (b.size() != t.load_p.size()) throw ValidationError("aggregate_cost: size mismatch");
    const Eigen::VectorXd p = b + t.load_p;
    const double s = p.sum();
    return t.c0 * s + 0.5 * t.cp * (p.squaredNorm() + s * s) - t.r * t.cr * b.sum();
}

Decision policy_step(Mode mode, const storage::FleetState& state, const market::MarketTick& tick,
                     const std::vector<storage::TunedParams>& params, const storage::Fleet& fleet,
                     const VoltageModel& voltage, const PolicyOptions& options, const PolicyContext& ctx) {
    const auto problem = assemble_step(mode, state, tick, params, fleet, voltage);
    try {
        if (options.solver == Solver::Centralized) return solve_centralized(problem);
        auto res = dualnet::solve_distributed(problem, options.dual, ctx.measurement, ctx.tree, ctx.trace);
        if (!res.converged)
            throw DivergenceError("distributed solver stopped at residual " + std::to_string(res.residual) +
                                  " after " + std::to_string(res.decision.iterations) + " iterations");
        return res.decision;
    } catch (const InfeasibleStep&) {
        Decision d;
        d.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.size()));
        annotate(problem, d);
        if (!options.force_zero_fallback && !problem.margins(d.b).feasible(1e-9)) throw;
        d.fallback = true;
        d.converged = true;
        d.lambda_lo = d.lambda_hi = Eigen::VectorXd::Zero(d.b.size());
        return d;
    }
}

}  // namespace esscoord::controller
