#pragma once

#include <vector>

#include <Eigen/Dense>

namespace esscoord::qp {

/// Strictly convex inequality-constrained QP
///
///     minimize  1/2 x'Gx + g'x   subject to  C'x + d >= 0
///
/// with G positive definite (n x n) and one constraint per column of C.
struct Problem {
    Eigen::MatrixXd G;
    Eigen::VectorXd g;
    Eigen::MatrixXd C;
    Eigen::VectorXd d;
};

enum class Status { Optimal, Infeasible, IterationLimit };

struct Solution {
    Status status = Status::Optimal;
    Eigen::VectorXd x;
    /// One nonnegative multiplier per constraint; zero off the active set.
    Eigen::VectorXd multipliers;
    std::vector<int> active;
    double objective = 0.0;
    int iterations = 0;
};

struct KktReport {
    double stationarity = 0.0;     ///< ||Gx + g - C mu||_inf
    double primal = 0.0;           ///< worst constraint violation
    double dual = 0.0;             ///< worst negative multiplier
    double complementarity = 0.0;  ///< max |mu_i * slack_i|

    double worst() const;
};

/// Dual active-set method of Goldfarb and Idnani. Constraint columns are
/// normalised internally; multipliers are reported for the original scaling.
Solution solve(const Problem& problem);

KktReport kkt(const Problem& problem, const Solution& solution);

}  // namespace esscoord::qp
