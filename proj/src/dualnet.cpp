#include "esscoord/dualnet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "esscoord/error.hpp"
#include "text.hpp"

namespace esscoord::dualnet {

std::string_view to_string(Schedule s) {
    switch (s) {
        case Schedule::Diminishing: return "diminishing";
        case Schedule::Scaled: return "scaled";
        case Schedule::Metric: return "metric";
    }
    return "?";
}

Schedule parse_schedule(std::string_view name) {
    if (name == "diminishing") return Schedule::Diminishing;
    if (name == "scaled") return Schedule::Scaled;
    if (name == "metric") return Schedule::Metric;
    throw ValidationError("unknown step schedule '" + std::string(name) + "'");
}

double user_response(double lambda_tilde, double c, double cp, double load, double lo, double hi) {
    const double b = -(c + lambda_tilde) / cp - load;
    return std::max(std::min(b, hi), lo);
}

double primal_a(double nu, double cp) { return -nu / cp; }

namespace {

void ascend(const DualState& from, double g_nu, const Eigen::VectorXd& g_lo, const Eigen::VectorXd& g_hi,
            const StepSizes& eta, DualState& to) {
    to.nu = from.nu + eta.nu * g_nu;
    to.lambda_lo.resize(from.lambda_lo.size());
    to.lambda_hi.resize(from.lambda_hi.size());
    for (Eigen::Index i = 0; i < g_lo.size(); ++i) {
        to.lambda_lo(i) = std::max(from.lambda_lo(i) + eta.lambda(i) * g_lo(i), 0.0);
        to.lambda_hi(i) = std::max(from.lambda_hi(i) + eta.lambda(i) * g_hi(i), 0.0);
    }
    to.j = from.j + 1;
}

}  // namespace

DualState dual_ascent(const DualState& state, double a, double total, const Eigen::VectorXd& drop,
                      const grid::VoltageBand& band, const StepSizes& eta) {
    if (eta.nu <= 0.0 || eta.lambda.size() != drop.size() || (eta.lambda.array() <= 0.0).any())
        throw ValidationError("dual_ascent: step sizes must be positive");
    const Eigen::VectorXd g_lo = drop.array() + band.alpha;
    const Eigen::VectorXd g_hi = -(drop.array() + band.beta);
    DualState next;
    ascend(state, a - total, g_lo, g_hi, eta, next);
    return next;
}

DualState dual_ascent(const DualState& state, double a, const Eigen::VectorXd& b, const Eigen::VectorXd& load_p,
                      const Eigen::VectorXd& load_q, const grid::SensitivityMatrices& sens,
                      const grid::VoltageBand& band, const StepSizes& eta) {
    const Eigen::VectorXd p = b + load_p;
    const Eigen::VectorXd drop = sens.R * p + sens.X * load_q;
    return dual_ascent(state, a, p.sum(), drop, band, eta);
}

StepSizes scaled_steps(const Eigen::MatrixXd& R, double cp, double scale) {
    if (!(cp > 0.0) || !(scale > 0.0)) throw ValidationError("scaled_steps: cp and scale must be positive");
    const auto n = R.rows();
    const Eigen::VectorXd rowsum = R.cwiseAbs().rowwise().sum();
    const Eigen::MatrixXd R2 = R * R;
    StepSizes eta;
    eta.lambda.resize(n);
    eta.nu = scale * cp / (static_cast<double>(n) + 1.0 + 2.0 * rowsum.sum());
    for (Eigen::Index i = 0; i < n; ++i) eta.lambda(i) = scale * cp / (rowsum(i) + 2.0 * R2.row(i).cwiseAbs().sum());
    return eta;
}

SpanningTree SpanningTree::from_feeder(const grid::Feeder& feeder) {
    SpanningTree t;
    for (std::size_t n = 0; n < feeder.bus_count(); ++n) t.parent.push_back(feeder.parent_of(static_cast<int>(n)));
    return t;
}

SpanningTree SpanningTree::star(std::size_t n) { return {std::vector<int>(n, kAggregator)}; }

SpanningTree SpanningTree::chain(std::size_t n) {
    SpanningTree t;
    for (std::size_t i = 0; i < n; ++i) t.parent.push_back(static_cast<int>(i) - 1);
    return t;
}

SpanningTree SpanningTree::random(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[g() % i]);
    SpanningTree t;
    t.parent.assign(n, kAggregator);
    for (std::size_t k = 1; k < n; ++k) {
        const auto pick = g() % (k + 1);
        t.parent[static_cast<std::size_t>(order[k])] = pick == k ? kAggregator : order[pick];
    }
    return t;
}

double tree_sum(const SpanningTree& tree, const Eigen::VectorXd& values, MessageLog* log) {
    const auto n = tree.size();
    if (static_cast<std::size_t>(values.size()) != n) throw ValidationError("tree_sum: size mismatch");
    std::vector<std::vector<int>> children(n);
    std::vector<int> roots;
    for (std::size_t i = 0; i < n; ++i) {
        const int p = tree.parent[i];
        if (p == kAggregator)
            roots.push_back(static_cast<int>(i));
        else if (p < 0 || static_cast<std::size_t>(p) >= n || static_cast<std::size_t>(p) == i)
            throw TopologyError("tree_sum: bad parent for node " + std::to_string(i + 1));
        else
            children[static_cast<std::size_t>(p)].push_back(static_cast<int>(i));
    }
    // Top-down order from the aggregator; anything missed sits on a cycle.
    std::vector<int> order;
    order.reserve(n);
    for (int r : roots) order.push_back(r);
    for (std::size_t k = 0; k < order.size(); ++k)
        for (int c : children[static_cast<std::size_t>(order[k])]) order.push_back(c);
    if (order.size() != n) throw TopologyError("tree_sum: communication tree is disconnected");

    std::vector<double> sub(n, 0.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const auto i = static_cast<std::size_t>(*it);
        double s = values(static_cast<Eigen::Index>(i));
        for (int c : children[i]) s += sub[static_cast<std::size_t>(c)];
        sub[i] = s;
        if (log) log->record(MessageKind::PartialSum, static_cast<int>(i), tree.parent[i]);
    }
    double total = 0.0;
    for (int r : roots) total += sub[static_cast<std::size_t>(r)];
    return total;
}

Eigen::VectorXd estimate_background(const Eigen::VectorXd& v, double v0, const Eigen::MatrixXd& R,
                                    const Eigen::VectorXd& b_prev) {
    if (v.size() != R.rows() || b_prev.size() != R.cols()) throw ValidationError("estimate_background: size mismatch");
    return (v0 - v.array()).matrix() - R * b_prev;
}

UserGroup::UserGroup(const std::vector<UserAgent>& users) {
    const auto n = static_cast<Eigen::Index>(users.size());
    c_.resize(n);
    load_.resize(n);
    lo_.resize(n);
    hi_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& u = users[static_cast<std::size_t>(i)];
        c_(i) = u.c_;
        load_(i) = u.load_;
        lo_(i) = u.lo_;
        hi_(i) = u.hi_;
    }
}

void UserGroup::respond(const Eigen::VectorXd& lt, double cp, kernels::Backend backend, Eigen::VectorXd& out) const {
    kernels::responses(backend, lt, c_, cp, load_, lo_, hi_, out);
}

double UserGroup::total_load(const SpanningTree& tree, MessageLog* log) const { return tree_sum(tree, load_, log); }

Aggregator::Aggregator(VoltageModel voltage, double cp, const Config& config, MessageLog* log)
    : voltage_(std::move(voltage)), cp_(cp), config_(config), log_(log) {
    if (!(cp_ > 0.0)) throw ValidationError("distributed solver needs a positive competitive price");
    if (config_.max_iters < 1 || !(config_.tol > 0.0)) throw ValidationError("distributed solver: bad config");
    const auto n = static_cast<Eigen::Index>(voltage_.size());
    if (config_.schedule != Schedule::Diminishing)
        scaled_ = scaled_steps(voltage_.sens->R, cp_, config_.step_scale);
    else if (!(config_.eta_nu0 > 0.0) || !(config_.eta_lambda0 > 0.0))
        throw ValidationError("distributed solver: step numerators must be positive");
    if (config_.schedule == Schedule::Metric) {
        const auto& R = voltage_.sens->R;
        metric_.resize(n + 1, n + 1);
        metric_(0, 0) = static_cast<double>(n) + 1.0;
        metric_.block(1, 0, n, 1) = -R.rowwise().sum();
        metric_.block(0, 1, 1, n) = metric_.block(1, 0, n, 1).transpose();
        metric_.block(1, 1, n, n) = R * R;
        metric_ /= cp_;
    }
    background_ = Eigen::VectorXd::Zero(n);
    state_.lambda_lo = Eigen::VectorXd::Zero(n);
    state_.lambda_hi = Eigen::VectorXd::Zero(n);
}

void Aggregator::observe_voltages(const Eigen::VectorXd& v, const Eigen::VectorXd& b_prev) {
    if (log_) log_->record(MessageKind::VoltageMeasurement, kMeter, kAggregator);
    background_ = estimate_background(v, voltage_.v0, voltage_.sens->R, b_prev);
}

void Aggregator::observe_total_load(double total) {
    total_load_ = total;
    // Start from the multiplier that balances a against the bare load.
    state_.nu = -cp_ * total;
    state_.lambda_lo.setZero();
    state_.lambda_hi.setZero();
    state_.j = 0;
}

const Eigen::VectorXd& Aggregator::broadcast() {
    work_ = state_.lambda_lo - state_.lambda_hi;
    kernels::sym_matvec(config_.backend, voltage_.sens->R, work_, lambda_tilde_);
    lambda_tilde_.array() -= state_.nu;
    if (log_)
        for (Eigen::Index i = 0; i < lambda_tilde_.size(); ++i)
            log_->record(MessageKind::Broadcast, kAggregator, static_cast<int>(i));
    return lambda_tilde_;
}

double Aggregator::collect(const Eigen::VectorXd& b) {
    const auto n = b.size();
    if (n != background_.size()) throw ValidationError("collect: wrong number of responses");
    if (log_)
        for (Eigen::Index i = 0; i < n; ++i) log_->record(MessageKind::Decision, static_cast<int>(i), kAggregator);

    double sum_b = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) sum_b += b(i);
    const double total = sum_b + total_load_;
    a_ = primal_a(state_.nu, cp_);
    kernels::sym_matvec(config_.backend, voltage_.sens->R, b, drop_);
    drop_ += background_;

    const auto& band = voltage_.band;
    const double g_nu = a_ - total;
    Eigen::VectorXd g_lo(n), g_hi(n);
    double residual = std::abs(g_nu);
    for (Eigen::Index i = 0; i < n; ++i) {
        g_lo(i) = drop_(i) + band.alpha;
        g_hi(i) = -(drop_(i) + band.beta);
        // unit-step projected gradient: violation, or complementarity gap
        residual = std::max(residual, std::abs(state_.lambda_lo(i) - std::max(state_.lambda_lo(i) + g_lo(i), 0.0)));
        residual = std::max(residual, std::abs(state_.lambda_hi(i) - std::max(state_.lambda_hi(i) + g_hi(i), 0.0)));
    }

    if (config_.schedule == Schedule::Metric) {
        metric_step(g_nu);
        return residual;
    }

    StepSizes eta;
    if (config_.schedule == Schedule::Diminishing) {
        const double k = static_cast<double>(state_.j + 1);
        eta.nu = config_.eta_nu0 / k;
        eta.lambda = Eigen::VectorXd::Constant(n, config_.eta_lambda0 / k);
    } else {
        eta = scaled_;
    }
    DualState next;
    ascend(state_, g_nu, g_lo, g_hi, eta, next);
    state_ = std::move(next);
    return residual;
}

void Aggregator::metric_step(double g_nu) {
    const auto n = drop_.size();
    const auto& band = voltage_.band;
    // Signed voltage multiplier: positive on the lower row, negative on the upper.
    Eigen::VectorXd mu = state_.lambda_lo - state_.lambda_hi;
    Eigen::VectorXd grad(n + 1);
    std::vector<int> dir(static_cast<std::size_t>(n + 1), 0);  // required sign when entering from zero
    std::vector<Eigen::Index> free{0};
    grad(0) = g_nu;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double up = drop_(i) + band.alpha, down = drop_(i) + band.beta;
        if (mu(i) > 0.0) {
            grad(i + 1) = up;
        } else if (mu(i) < 0.0) {
            grad(i + 1) = down;
        } else if (up > 0.0) {
            grad(i + 1) = up;
            dir[static_cast<std::size_t>(i + 1)] = 1;
        } else if (down < 0.0) {
            grad(i + 1) = down;
            dir[static_cast<std::size_t>(i + 1)] = -1;
        } else {
            continue;
        }
        free.push_back(i + 1);
    }

    Eigen::VectorXd step;
    while (true) {
        const auto m = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd Q(m, m);
        Eigen::VectorXd g(m);
        for (Eigen::Index a = 0; a < m; ++a) {
            g(a) = grad(free[a]);
            for (Eigen::Index c = 0; c < m; ++c) Q(a, c) = metric_(free[a], free[c]);
        }
        step = Q.llt().solve(g);
        // Coordinates leaving zero must move the way their gradient points.
        std::vector<Eigen::Index> keep;
        for (Eigen::Index a = 0; a < m; ++a) {
            const int d = dir[static_cast<std::size_t>(free[a])];
            if (d == 0 || d * step(a) > 0.0) keep.push_back(free[a]);
        }
        if (keep.size() == free.size()) break;
        free = std::move(keep);
    }

    double t = 1.0;
    for (std::size_t a = 1; a < free.size(); ++a) {
        const auto i = free[a] - 1;
        if (mu(i) != 0.0 && mu(i) * (mu(i) + step(static_cast<Eigen::Index>(a))) < 0.0)
            t = std::min(t, -mu(i) / step(static_cast<Eigen::Index>(a)));
    }
    state_.nu += t * step(0);
    for (std::size_t a = 1; a < free.size(); ++a) {
        const auto i = free[a] - 1;
        const double next = mu(i) + t * step(static_cast<Eigen::Index>(a));
        mu(i) = (mu(i) != 0.0 && mu(i) * next <= 0.0) ? 0.0 : next;
    }
    state_.lambda_lo = mu.cwiseMax(0.0);
    state_.lambda_hi = (-mu).cwiseMax(0.0);
    state_.j += 1;
}

void write_trace(std::ostream& os, const Trace& trace) {
    const auto n = trace.rows.empty() ? 0 : trace.rows.front().b.size();
    os << "j,nu,residual";
    for (Eigen::Index i = 1; i <= n; ++i) os << ",b_" << i;
    for (Eigen::Index i = 1; i <= n; ++i) os << ",lambda_lo_" << i;
    for (Eigen::Index i = 1; i <= n; ++i) os << ",lambda_hi_" << i;
    os << '\n';
    for (const auto& r : trace.rows) {
        os << r.j << ',' << text::fmt(r.nu) << ',' << text::fmt(r.residual);
        for (Eigen::Index i = 0; i < n; ++i) os << ',' << text::fmt(r.b(i));
        for (Eigen::Index i = 0; i < n; ++i) os << ',' << text::fmt(r.lambda_lo(i));
        for (Eigen::Index i = 0; i < n; ++i) os << ',' << text::fmt(r.lambda_hi(i));
        os << '\n';
    }
}

Result solve_distributed(const StepProblem& problem, const Config& config, const Measurement* measurement,
                         const SpanningTree* tree, Trace* trace, MessageLog* log) {
    const auto n = problem.size();
    if (!(problem.cp > 0.0)) throw ValidationError("distributed solver needs a positive competitive price");
    std::vector<UserAgent> agents;
    agents.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        agents.emplace_back(problem.linear(k), problem.load_p(k), problem.lo(k), problem.hi(k));
    }
    const UserGroup users(agents);
    const SpanningTree star = SpanningTree::star(n);
    const SpanningTree& comm = tree ? *tree : star;
    if (comm.size() != n) throw ValidationError("communication tree size differs from problem size");

    Aggregator agg(problem.voltage, problem.cp, config, log);
    if (measurement) {
        agg.observe_voltages(measurement->v, measurement->b_prev);
    } else {
        const Eigen::VectorXd v = (problem.voltage.v0 - problem.background.array()).matrix();
        agg.observe_voltages(v, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
    }
    agg.observe_total_load(users.total_load(comm, log));

    Result res;
    Eigen::VectorXd b;
    int j = 0;
    for (; j < config.max_iters; ++j) {
        users.respond(agg.broadcast(), problem.cp, config.backend, b);
        const double r = agg.collect(b);
        res.residual = r;
        const auto& st = agg.state();
        if (!std::isfinite(r) || !std::isfinite(st.nu) || !st.lambda_lo.allFinite() || !st.lambda_hi.allFinite()) {
            ++j;
            break;
        }
        if (trace) {
            trace->rows.push_back({j, st.nu, r, b, st.lambda_lo, st.lambda_hi});
        }
        if (r <= config.tol) {
            res.converged = true;
            ++j;
            break;
        }
    }
    res.decision.b = b;
    res.dual = agg.state();
    annotate(problem, res.decision);
    res.decision.lambda_lo = res.dual.lambda_lo;
    res.decision.lambda_hi = res.dual.lambda_hi;
    res.decision.iterations = j;
    res.decision.kkt_residual = res.residual;
    res.decision.converged = res.converged;
    return res;
}

}  // namespace esscoord::dualnet
