#pragma once

// Independent reference computations used only by the tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "esscoord/grid.hpp"
#include "esscoord/market.hpp"
#include "esscoord/problem.hpp"
#include "esscoord/storage.hpp"

namespace oracle {

using esscoord::grid::Feeder;

struct Rng {
    std::mt19937_64 g;
    explicit Rng(std::uint64_t seed) : g(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(g); }
    int sign() { return integer(0, 1) ? 1 : -1; }
};

/// Feeder text for a random tree on buses 1..n; bus k hangs off a bus < k.
inline std::string random_feeder_text(int n, Rng& rng, double rmax = 0.02) {
    std::ostringstream os;
    os.precision(17);
    os << "v0=1.0 alpha=-0.0199 beta=0.020\n";
    for (int k = 1; k <= n; ++k)
        os << rng.integer(0, k - 1) << ' ' << k << ' ' << rng.uniform(0.1 * rmax, rmax) << ' '
           << rng.uniform(0.1 * rmax, rmax) << '\n';
    return os.str();
}

inline std::string chain_feeder_text(int n, double r, double x) {
    std::ostringstream os;
    os << "v0=1.0 alpha=-0.0199 beta=0.020\n";
    for (int k = 1; k <= n; ++k) os << k - 1 << ' ' << k << ' ' << r << ' ' << x << '\n';
    return os.str();
}

/// Set of branches (identified by child bus) on the path from the root.
inline std::set<int> root_path(const Feeder& f, int bus) {
    std::set<int> path;
    for (int b = bus; b != esscoord::grid::kSubstation; b = f.parent_of(b)) path.insert(b);
    return path;
}

/// 2 * (sum of impedances shared by the root paths of n and m).
inline Eigen::MatrixXd common_path(const Feeder& f, bool reactance) {
    const int n = static_cast<int>(f.bus_count());
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i) {
        const auto pi = root_path(f, i);
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int b : root_path(f, j))
                if (pi.count(b)) {
                    const auto& br = f.branches()[f.feeding_branch(b)];
                    s += reactance ? br.x : br.r;
                }
            M(i, j) = 2.0 * s;
        }
    }
    return M;
}

/// Receiving-end squared voltage of a two-node line feeding load p + jq:
/// v^2 - (v0 - 2(rp + xq)) v + |z|^2 (p^2 + q^2) = 0, high-voltage root.
inline double two_node_voltage(double v0, double r, double x, double p, double q) {
    const double b = v0 - 2.0 * (r * p + x * q);
    const double c = (r * r + x * x) * (p * p + q * q);
    return 0.5 * (b + std::sqrt(b * b - 4.0 * c));
}

/// Objective of a step problem written out term by term.
inline double step_objective(const esscoord::StepProblem& sp, const Eigen::VectorXd& b) {
    double total = 0.0, sq = 0.0, lin = 0.0;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        const double p = b(i) + sp.load_p(i);
        total += p;
        sq += p * p;
        lin += sp.queue(i) * b(i) + sp.c0 * p - sp.r * sp.cr * b(i);
    }
    return lin + 0.5 * sp.cp * (sq + total * total);
}

inline bool step_feasible(const esscoord::StepProblem& sp, const Eigen::VectorXd& b, double tol = 0.0) {
    for (Eigen::Index i = 0; i < b.size(); ++i)
        if (b(i) < sp.lo(i) - tol || b(i) > sp.hi(i) + tol) return false;
    const auto& s = *sp.voltage.sens;
    const Eigen::VectorXd drop = s.R * (b + sp.load_p) + s.X * sp.load_q;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        const double dv = -drop(i);
        if (dv < sp.voltage.band.alpha - tol || dv > sp.voltage.band.beta + tol) return false;
    }
    return true;
}

struct GridResult {
    Eigen::VectorXd b;
    double objective = std::numeric_limits<double>::infinity();
};

/// Exhaustive search over a box grid of spacing `h` (N <= 3).
inline GridResult grid_search(const esscoord::StepProblem& sp, double h) {
    const auto n = sp.size();
    GridResult best;
    std::vector<int> counts(n), idx(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        counts[i] = static_cast<int>(std::floor((sp.hi(k) - sp.lo(k)) / h + 1e-9)) + 1;
    }
    Eigen::VectorXd b(static_cast<Eigen::Index>(n));
    while (true) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            b(k) = idx[i] + 1 == counts[i] ? sp.hi(k) : sp.lo(k) + h * idx[i];
        }
        if (step_feasible(sp, b)) {
            const double f = step_objective(sp, b);
            if (f < best.objective) best = {b, f};
        }
        std::size_t i = 0;
        while (i < n && ++idx[i] == counts[i]) idx[i++] = 0;
        if (i == n) break;
    }
    return best;
}

/// Repeats the search on shrinking windows around the incumbent; a 1e-3
/// grid alone misses slanted voltage rows by O(|grad| h).
inline GridResult refined_grid_search(const esscoord::StepProblem& sp, double h, double h_min = 1e-11) {
    auto best = grid_search(sp, h);
    const auto n = sp.size();
    while (h > h_min && best.b.size() > 0) {
        const double w = 2 * h;
        h /= 4;
        esscoord::StepProblem win = sp;
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            win.lo(k) = std::max(sp.lo(k), best.b(k) - w);
            win.hi(k) = std::min(sp.hi(k), best.b(k) + w);
        }
        const auto r = grid_search(win, h);
        if (r.objective < best.objective) best = r;
    }
    return best;
}

/// WorldBounds with scalar price ranges and per-bus load bounds.
inline esscoord::market::WorldBounds bounds(std::size_t n, double c0lo, double c0hi, double cplo, double cphi,
                                            double crlo, double crhi, double llo, double lhi, double qlo,
                                            double qhi) {
    esscoord::market::WorldBounds b;
    b.c0 = {c0lo, c0hi};
    b.cp = {cplo, cphi};
    b.cr = {crlo, crhi};
    const auto k = static_cast<Eigen::Index>(n);
    b.p_lo = Eigen::VectorXd::Constant(k, llo);
    b.p_hi = Eigen::VectorXd::Constant(k, lhi);
    b.q_lo = Eigen::VectorXd::Constant(k, qlo);
    b.q_hi = Eigen::VectorXd::Constant(k, qhi);
    return b;
}

/// A unit with s_min = 0 that satisfies slow charging.
inline esscoord::storage::StorageUnit random_unit(Rng& rng) {
    esscoord::storage::StorageUnit u;
    u.s_min = rng.uniform(0.0, 0.2);
    u.b_max = rng.uniform(0.005, 0.1);
    u.b_min = -rng.uniform(0.005, 0.1);
    u.s_max = u.s_min + (u.b_max - u.b_min) * rng.uniform(1.5, 30.0);
    return u;
}

}  // namespace oracle
