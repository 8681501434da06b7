#include "esscoord/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "esscoord/error.hpp"

namespace esscoord::qp {

double KktReport::worst() const { return std::max({stationarity, primal, dual, complementarity}); }

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Givens {
    double c = 1.0, s = 0.0, h = 0.0;

    static Givens zeroing(double a, double b) {
        const double h = std::hypot(a, b);
        if (h == 0.0) return {1.0, 0.0, 0.0};
        return {a / h, b / h, h};
    }
};

// Columns (i, j) of J become (c Ji + s Jj, -s Ji + c Jj).
void rotate_columns(Eigen::MatrixXd& J, Eigen::Index i, Eigen::Index j, const Givens& g) {
    for (Eigen::Index k = 0; k < J.rows(); ++k) {
        const double a = J(k, i), b = J(k, j);
        J(k, i) = g.c * a + g.s * b;
        J(k, j) = -g.s * a + g.c * b;
    }
}

class ActiveSetSolver {
public:
    ActiveSetSolver(const Problem& p) : n_(p.G.rows()), m_(p.C.cols()), d_(p.d) {
        if (p.G.cols() != n_ || p.g.size() != n_ || p.C.rows() != n_ || p.d.size() != m_)
            throw ValidationError("qp: inconsistent problem dimensions");
        scale_ = p.C.colwise().norm().transpose();
        C_ = p.C;
        for (Eigen::Index i = 0; i < m_; ++i) {
            if (scale_(i) == 0.0) scale_(i) = 1.0;
            C_.col(i) /= scale_(i);
            d_(i) /= scale_(i);
        }
        const Eigen::LLT<Eigen::MatrixXd> llt(p.G);
        if (llt.info() != Eigen::Success) throw ValidationError("qp: Hessian is not positive definite");
        const Eigen::MatrixXd L = llt.matrixL();
        J_ = L.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(n_, n_));
        R_ = Eigen::MatrixXd::Zero(n_, n_);
        x_ = -llt.solve(p.g);
    }

    Solution run(const Problem& p) {
        Solution out;
        const int max_iter = static_cast<int>(10 * (n_ + m_) + 50);
        int iter = 0;
        while (true) {
            // Most violated constraint.
            Eigen::Index worst = -1;
            double worst_slack = 0.0;
            for (Eigen::Index i = 0; i < m_; ++i) {
                if (is_active(i)) continue;
                const double s = C_.col(i).dot(x_) + d_(i);
                if (s < -tolerance(i) && s < worst_slack) {
                    worst_slack = s;
                    worst = i;
                }
            }
            if (worst < 0) break;
            if (++iter > max_iter) {
                out.status = Status::IterationLimit;
                break;
            }
            if (!add_violated(worst)) {
                out.status = Status::Infeasible;
                break;
            }
        }
        out.iterations = iter;
        out.x = x_;
        out.multipliers = Eigen::VectorXd::Zero(m_);
        for (std::size_t k = 0; k < active_.size(); ++k) {
            out.multipliers(active_[k]) = u_[k] / scale_(active_[k]);
            out.active.push_back(static_cast<int>(active_[k]));
        }
        out.objective = 0.5 * x_.dot(p.G * x_) + p.g.dot(x_);
        return out;
    }

private:
    double tolerance(Eigen::Index i) const { return 1e-13 * (1.0 + std::abs(d_(i))); }

    bool is_active(Eigen::Index i) const { return std::find(active_.begin(), active_.end(), i) != active_.end(); }

    Eigen::Index iq() const { return static_cast<Eigen::Index>(active_.size()); }

    // Brings constraint p into the active set, dropping others as needed.
    // Returns false when the problem is infeasible.
    bool add_violated(Eigen::Index p) {
        const Eigen::VectorXd np = C_.col(p);
        double u_plus = 0.0;
        for (int guard = 0; guard < static_cast<int>(4 * (n_ + m_) + 10); ++guard) {
            const Eigen::VectorXd dvec = J_.transpose() * np;
            const Eigen::Index q = iq();
            const Eigen::VectorXd z = J_.rightCols(n_ - q) * dvec.tail(n_ - q);
            Eigen::VectorXd r(q);
            if (q > 0) r = R_.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(dvec.head(q));

            double t1 = kInf;
            Eigen::Index drop = -1;
            for (Eigen::Index k = 0; k < q; ++k) {
                if (r(k) > 0.0) {
                    const double ratio = u_[static_cast<std::size_t>(k)] / r(k);
                    if (ratio < t1) {
                        t1 = ratio;
                        drop = k;
                    }
                }
            }
            const double slack = np.dot(x_) + d_(p);
            const double zn = z.dot(np);
            const double t2 = (z.norm() > 1e-14 && zn > 0.0) ? -slack / zn : kInf;
            const double t = std::min(t1, t2);
            if (!std::isfinite(t)) return false;

            if (!std::isfinite(t2)) {
                for (Eigen::Index k = 0; k < q; ++k) u_[static_cast<std::size_t>(k)] -= t * r(k);
                u_plus += t;
                drop_constraint(drop);
                continue;
            }
            x_ += t * z;
            for (Eigen::Index k = 0; k < q; ++k) u_[static_cast<std::size_t>(k)] -= t * r(k);
            u_plus += t;
            if (t == t2) {
                add_constraint(p, dvec, u_plus);
                return true;
            }
            drop_constraint(drop);
        }
        throw InternalError("qp: active-set update did not terminate");
    }

    void add_constraint(Eigen::Index p, Eigen::VectorXd dvec, double u_plus) {
        const Eigen::Index q = iq();
        for (Eigen::Index j = n_ - 1; j > q; --j) {
            const auto g = Givens::zeroing(dvec(j - 1), dvec(j));
            if (g.h == 0.0) continue;
            dvec(j - 1) = g.h;
            dvec(j) = 0.0;
            rotate_columns(J_, j - 1, j, g);
        }
        R_.col(q).head(q + 1) = dvec.head(q + 1);
        active_.push_back(p);
        u_.push_back(u_plus);
    }

    void drop_constraint(Eigen::Index l) {
        const Eigen::Index q = iq();
        for (Eigen::Index k = l; k + 1 < q; ++k) R_.col(k) = R_.col(k + 1);
        R_.col(q - 1).setZero();
        for (Eigen::Index k = l; k + 1 < q; ++k) {
            const auto g = Givens::zeroing(R_(k, k), R_(k + 1, k));
            if (g.h == 0.0) continue;
            for (Eigen::Index c = k; c < q - 1; ++c) {
                const double a = R_(k, c), b = R_(k + 1, c);
                R_(k, c) = g.c * a + g.s * b;
                R_(k + 1, c) = -g.s * a + g.c * b;
            }
            R_(k + 1, k) = 0.0;
            rotate_columns(J_, k, k + 1, g);
        }
        active_.erase(active_.begin() + l);
        u_.erase(u_.begin() + l);
    }

    Eigen::Index n_, m_;
    Eigen::MatrixXd C_;
    Eigen::VectorXd d_, scale_;
    Eigen::MatrixXd J_, R_;
    Eigen::VectorXd x_;
    std::vector<Eigen::Index> active_;
    std::vector<double> u_;
};

}  // namespace

Solution solve(const Problem& problem) {
    ActiveSetSolver solver(problem);
    return solver.run(problem);
}

KktReport kkt(const Problem& p, const Solution& s) {
    KktReport rep;
    rep.stationarity = (p.G * s.x + p.g - p.C * s.multipliers).lpNorm<Eigen::Infinity>();
    const Eigen::VectorXd slack = p.C.transpose() * s.x + p.d;
    for (Eigen::Index i = 0; i < slack.size(); ++i) {
        rep.primal = std::max(rep.primal, -slack(i));
        rep.dual = std::max(rep.dual, -s.multipliers(i));
        rep.complementarity = std::max(rep.complementarity, std::abs(s.multipliers(i) * slack(i)));
    }
    return rep;
}

}  // namespace esscoord::qp
