#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "esscoord/grid.hpp"

namespace esscoord {

enum class Mode { Weighted, NonWeighted, Greedy, RelaxedSign };

std::string_view to_string(Mode mode);
/// Accepts weighted, nonweighted, greedy, relaxed_sign. Throws ValidationError.
Mode parse_mode(std::string_view name);
/// Modes that restrict r * b >= 0.
inline bool sign_constrained(Mode m) { return m != Mode::RelaxedSign; }
/// Modes that carry a virtual-queue term.
inline bool uses_queues(Mode m) { return m != Mode::Greedy; }

/// Linearized voltage data shared by all periods of a run.
struct VoltageModel {
    std::shared_ptr<const grid::SensitivityMatrices> sens;
    grid::VoltageBand band;
    double v0 = 1.0;

    std::size_t size() const { return static_cast<std::size_t>(sens->R.rows()); }
};

/// One period's convex program
///
///     min  sum_n c_n b_n + cp/2 |b + l|^2 + cp/2 (1'(b + l))^2
///     s.t. lo <= b <= hi,  alpha <= -R(b + l) - Xq <= beta
///
/// with c_n = queue_n - r cr + c0.
struct StepProblem {
    Mode mode = Mode::Weighted;
    int r = 1;
    double c0 = 0.0, cp = 0.0, cr = 0.0;
    Eigen::VectorXd linear;  ///< c
    Eigen::VectorXd queue;   ///< w x, zero for greedy
    Eigen::VectorXd load_p, load_q;
    Eigen::VectorXd lo, hi;
    VoltageModel voltage;
    /// R l + X q, the voltage drop caused by the loads alone.
    Eigen::VectorXd background;

    std::size_t size() const { return static_cast<std::size_t>(linear.size()); }
    /// queue'b + aggregate cost.
    double objective(const Eigen::VectorXd& b) const;
    /// Lower slack -R(b+l) - Xq - alpha and upper slack beta + R(b+l) + Xq.
    grid::VoltageMargins margins(const Eigen::VectorXd& b) const;
};

struct Decision {
    Eigen::VectorXd b;
    double objective = 0.0;
    std::vector<bool> lower_active, upper_active;  ///< binding voltage rows
    std::vector<bool> at_lo, at_hi;                ///< binding box ends
    /// Voltage-row multipliers (lower row, upper row).
    Eigen::VectorXd lambda_lo, lambda_hi;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool fallback = false;
    bool converged = true;
};

/// Fills objective and activity flags for a given b.
void annotate(const StepProblem& problem, Decision& decision, double tol = 1e-9);

}  // namespace esscoord
