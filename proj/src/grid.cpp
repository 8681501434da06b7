#include "esscoord/grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <string>

#include "esscoord/error.hpp"
#include "text.hpp"

namespace esscoord::grid {

Feeder::Feeder(double v0, VoltageBand band, std::vector<long> labels, std::vector<Branch> branches)
    : v0_(v0), band_(band), labels_(std::move(labels)) {
    const auto n = labels_.size();
    if (n == 0) throw ValidationError("feeder has no buses");
    if (!(v0_ > 0.0)) throw ValidationError("substation squared voltage v0 must be positive");
    if (!(band_.alpha < 0.0 && band_.beta > 0.0))
        throw ValidationError("voltage band requires alpha < 0 < beta");
    if (branches.size() != n)
        throw TopologyError("radial feeder with " + std::to_string(n) + " buses needs exactly " +
                            std::to_string(n) + " branches, got " + std::to_string(branches.size()));

    const auto bad = [n](int i) { return i < 0 || static_cast<std::size_t>(i) >= n; };
    std::vector<int> fed_by(n, -1);
    std::vector<std::vector<std::size_t>> children(n + 1);  // slot n is the substation
    for (std::size_t k = 0; k < branches.size(); ++k) {
        const auto& b = branches[k];
        if (bad(b.child) || (b.parent != kSubstation && bad(b.parent)))
            throw TopologyError("branch references an unknown bus");
        if (b.parent == b.child) throw TopologyError("self-loop at bus " + std::to_string(labels_[b.child]));
        if (!(b.r > 0.0) || !(b.x > 0.0))
            throw ValidationError("nonpositive impedance on branch to bus " + std::to_string(labels_[b.child]));
        if (fed_by[b.child] != -1)
            throw TopologyError("bus " + std::to_string(labels_[b.child]) +
                                " is fed by more than one branch (cycle)");
        fed_by[b.child] = static_cast<int>(k);
        children[b.parent == kSubstation ? n : static_cast<std::size_t>(b.parent)].push_back(k);
    }

    // Breadth-first from the substation; children in ascending bus index.
    for (auto& c : children)
        std::sort(c.begin(), c.end(), [&](std::size_t a, std::size_t b) {
            return branches[a].child < branches[b].child;
        });
    parent_.assign(n, kSubstation);
    feeding_.assign(n, 0);
    branches_.reserve(n);
    std::queue<std::size_t> frontier;
    frontier.push(n);
    while (!frontier.empty()) {
        const auto node = frontier.front();
        frontier.pop();
        for (auto k : children[node]) {
            const auto& b = branches[k];
            parent_[b.child] = b.parent;
            feeding_[b.child] = branches_.size();
            branches_.push_back(b);
            frontier.push(static_cast<std::size_t>(b.child));
        }
    }
    if (branches_.size() != n) {
        for (std::size_t i = 0; i < n; ++i) {
            const bool reached = std::any_of(branches_.begin(), branches_.end(),
                                             [i](const Branch& b) { return b.child == static_cast<int>(i); });
            if (!reached)
                throw TopologyError("bus " + std::to_string(labels_[i]) +
                                    " is not reachable from the substation (cycle or disconnected)");
        }
    }
}

int Feeder::index_of(long label) const {
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw ValidationError("unknown bus label " + std::to_string(label));
    return static_cast<int>(it - labels_.begin());
}

Feeder parse_feeder(std::string_view content) {
    bool have_header = false;
    double v0 = 0.0;
    VoltageBand band;
    struct RawBranch {
        long parent, child;
        double r, x;
        std::size_t line;
    };
    std::vector<RawBranch> raw;

    for (const auto& [lineno, full] : text::numbered_lines(content)) {
        auto line = full;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = text::trim(line);
        if (line.empty()) continue;
        const auto tokens = text::split_ws(line);
        if (!have_header) {
            bool got_v0 = false, got_a = false, got_b = false;
            for (auto tok : tokens) {
                const auto eq = tok.find('=');
                if (eq == std::string_view::npos) throw ParseError(lineno, "header expects key=value tokens");
                const auto key = tok.substr(0, eq);
                const double value = text::to_double(tok.substr(eq + 1), lineno, key);
                if (key == "v0") v0 = value, got_v0 = true;
                else if (key == "alpha") band.alpha = value, got_a = true;
                else if (key == "beta") band.beta = value, got_b = true;
                else throw ParseError(lineno, "unknown header key '" + std::string(key) + "'");
            }
            if (!(got_v0 && got_a && got_b)) throw ParseError(lineno, "header must define v0, alpha and beta");
            have_header = true;
            continue;
        }
        if (tokens.size() != 4) throw ParseError(lineno, "branch line needs '<parent> <child> <r> <x>'");
        RawBranch b{text::to_long(tokens[0], lineno, "parent"), text::to_long(tokens[1], lineno, "child"),
                    text::to_double(tokens[2], lineno, "r"), text::to_double(tokens[3], lineno, "x"), lineno};
        if (!(b.r > 0.0) || !(b.x > 0.0))
            throw ValidationError("line " + std::to_string(lineno) + ": impedance must be strictly positive");
        if (b.child == 0) throw TopologyError("line " + std::to_string(lineno) + ": the substation cannot be a child");
        raw.push_back(b);
    }
    if (!have_header) throw ParseError(0, "missing feeder header 'v0=<f> alpha=<f> beta=<f>'");
    if (raw.empty()) throw ParseError(0, "feeder has no branches");

    std::map<long, int> index;
    for (const auto& b : raw) index.emplace(b.child, 0);
    for (const auto& b : raw)
        if (b.parent != 0 && !index.count(b.parent))
            throw TopologyError("line " + std::to_string(b.line) + ": parent bus " + std::to_string(b.parent) +
                                " is never fed (disconnected)");
    std::vector<long> labels;
    for (auto& [label, idx] : index) {
        idx = static_cast<int>(labels.size());
        labels.push_back(label);
    }
    std::vector<Branch> branches;
    for (const auto& b : raw)
        branches.push_back({b.parent == 0 ? kSubstation : index.at(b.parent), index.at(b.child), b.r, b.x});
    return Feeder(v0, band, std::move(labels), std::move(branches));
}

Feeder load_feeder(const std::filesystem::path& path) { return parse_feeder(text::read_file(path)); }

Eigen::MatrixXi incidence_matrix(const Feeder& feeder, IncidenceSign sign) {
    const auto n = static_cast<Eigen::Index>(feeder.bus_count());
    const int s = sign == IncidenceSign::ParentPositive ? 1 : -1;
    Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
    const auto& branches = feeder.branches();
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& b = branches[static_cast<std::size_t>(k)];
        if (b.parent != kSubstation) a(k, b.parent) = s;
        a(k, b.child) = -s;
    }
    return a;
}

namespace {

Eigen::MatrixXd scaled_inverse(const Eigen::MatrixXd& a, const Eigen::VectorXd& line_values) {
    const Eigen::MatrixXd m = a.transpose() * line_values.cwiseInverse().asDiagonal() * a;
    const Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw InternalError("reduced incidence matrix is singular");
    return 2.0 * llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace

SensitivityMatrices build_sensitivities(const Feeder& feeder, IncidenceSign sign) {
    const Eigen::MatrixXd a = incidence_matrix(feeder, sign).cast<double>();
    const auto n = static_cast<Eigen::Index>(feeder.bus_count());
    Eigen::VectorXd r(n), x(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        r(k) = feeder.branches()[static_cast<std::size_t>(k)].r;
        x(k) = feeder.branches()[static_cast<std::size_t>(k)].x;
    }
    SensitivityMatrices s{scaled_inverse(a, r), scaled_inverse(a, x)};
    // The inverse is symmetric in exact arithmetic; make it so bitwise.
    s.R = 0.5 * (s.R + s.R.transpose()).eval();
    s.X = 0.5 * (s.X + s.X.transpose()).eval();
    return s;
}

VoltageProfile ldf_voltages(const SensitivityMatrices& s, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                            double v0) {
    if (p.size() != s.R.rows() || q.size() != s.X.rows())
        throw ValidationError("power vector length does not match the feeder");
    return {Eigen::VectorXd::Constant(p.size(), v0) - s.R * p - s.X * q};
}

VoltageMargins voltage_margins(const SensitivityMatrices& s, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                               const VoltageBand& band) {
    if (p.size() != s.R.rows() || q.size() != s.X.rows())
        throw ValidationError("power vector length does not match the feeder");
    const Eigen::VectorXd dev = -(s.R * p) - s.X * q;
    return {dev.array() - band.alpha, band.beta - dev.array()};
}

bool base_loads_feasible(const SensitivityMatrices& s, const Eigen::VectorXd& load_p, const Eigen::VectorXd& load_q,
                         const VoltageBand& band, double tol) {
    return voltage_margins(s, load_p, load_q, band).feasible(tol);
}

namespace {

// Branch currents that carry the bus injections for the given phasors.
Eigen::VectorXcd backward_currents(const Feeder& feeder, const Eigen::VectorXcd& v, const Eigen::VectorXd& p,
                                   const Eigen::VectorXd& q) {
    const auto& branches = feeder.branches();
    const auto n = static_cast<Eigen::Index>(branches.size());
    Eigen::VectorXcd j(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto bus = branches[static_cast<std::size_t>(k)].child;
        j(k) = std::conj(std::complex<double>(p(bus), q(bus)) / v(bus));
    }
    for (auto k = n - 1; k >= 0; --k) {
        const auto parent = branches[static_cast<std::size_t>(k)].parent;
        if (parent != kSubstation) j(static_cast<Eigen::Index>(feeder.feeding_branch(parent))) += j(k);
    }
    return j;
}

}  // namespace

AcSolution ac_sweep(const Feeder& feeder, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                    const AcSweepOptions& options) {
    const auto n = static_cast<Eigen::Index>(feeder.bus_count());
    if (p.size() != n || q.size() != n) throw ValidationError("power vector length does not match the feeder");
    const std::complex<double> source(std::sqrt(feeder.v0()), 0.0);
    const auto& branches = feeder.branches();

    AcSolution sol;
    sol.phasors = Eigen::VectorXcd::Constant(n, source);
    bool converged = false;
    for (int it = 1; it <= options.max_iterations; ++it) {
        sol.branch_currents = backward_currents(feeder, sol.phasors, p, q);
        double step = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto& b = branches[static_cast<std::size_t>(k)];
            const auto upstream = b.parent == kSubstation ? source : sol.phasors(b.parent);
            const auto updated = upstream - std::complex<double>(b.r, b.x) * sol.branch_currents(k);
            step = std::max(step, std::abs(updated - sol.phasors(b.child)));
            sol.phasors(b.child) = updated;
        }
        sol.iterations = it;
        if (!std::isfinite(step)) break;
        if (step <= options.step_tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw DivergenceError("backward/forward sweep did not converge in " +
                              std::to_string(options.max_iterations) + " iterations (feeder overloaded?)");

    sol.voltage.v = sol.phasors.cwiseAbs2();
    // Currents consistent with the final phasors.
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& b = branches[static_cast<std::size_t>(k)];
        const auto upstream = b.parent == kSubstation ? source : sol.phasors(b.parent);
        sol.branch_currents(k) = (upstream - sol.phasors(b.child)) / std::complex<double>(b.r, b.x);
    }
    sol.residual = branch_flow_residual(feeder, sol, p, q);
    if (!(sol.residual <= options.residual_tolerance))
        throw DivergenceError("backward/forward sweep stalled with branch-flow residual " +
                              text::fmt(sol.residual));
    return sol;
}

double branch_flow_residual(const Feeder& feeder, const AcSolution& sol, const Eigen::VectorXd& p,
                            const Eigen::VectorXd& q) {
    const auto& branches = feeder.branches();
    const auto n = static_cast<Eigen::Index>(branches.size());
    const double v0 = feeder.v0();
    const std::complex<double> source(std::sqrt(v0), 0.0);

    // Sending-end flows on each branch.
    Eigen::VectorXd pf(n), qf(n), i2(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& b = branches[static_cast<std::size_t>(k)];
        const auto upstream = b.parent == kSubstation ? source : sol.phasors(b.parent);
        const auto s = upstream * std::conj(sol.branch_currents(k));
        pf(k) = s.real();
        qf(k) = s.imag();
        i2(k) = std::norm(sol.branch_currents(k));
    }
    Eigen::VectorXd out_p = Eigen::VectorXd::Zero(n), out_q = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto parent = branches[static_cast<std::size_t>(k)].parent;
        if (parent == kSubstation) continue;
        out_p(parent) += pf(k);
        out_q(parent) += qf(k);
    }
    double worst = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& b = branches[static_cast<std::size_t>(k)];
        const auto bus = b.child;
        const double vp = b.parent == kSubstation ? v0 : std::norm(sol.phasors(b.parent));
        const double ep = -p(bus) - (out_p(bus) - pf(k) + b.r * i2(k));
        const double eq = -q(bus) - (out_q(bus) - qf(k) + b.x * i2(k));
        const double ev = std::norm(sol.phasors(bus)) -
                          (vp - 2.0 * (b.r * pf(k) + b.x * qf(k)) + (b.r * b.r + b.x * b.x) * i2(k));
        worst = std::max({worst, std::abs(ep), std::abs(eq), std::abs(ev)});
    }
    return worst;
}

}  // namespace esscoord::grid
