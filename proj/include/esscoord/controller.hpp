#pragma once

#include <vector>

#include <Eigen/Dense>

#include "esscoord/dualnet.hpp"
#include "esscoord/market.hpp"
#include "esscoord/problem.hpp"
#include "esscoord/qp.hpp"
#include "esscoord/storage.hpp"

namespace esscoord::controller {

/// Builds the period problem. Lyapunov modes need one TunedParams per unit;
/// greedy ignores them. Throws InfeasibleStep on an empty box.
StepProblem assemble_step(Mode mode, const storage::FleetState& state, const market::MarketTick& tick,
                          const std::vector<storage::TunedParams>& params, const storage::Fleet& fleet,
                          const VoltageModel& voltage);

/// The QP in standard dense form, with fixed coordinates kept (for tests).
qp::Problem to_qp(const StepProblem& problem);

/// Global minimizer by an active-set method. Throws InfeasibleStep.
Decision solve_centralized(const StepProblem& problem);

/// f_n = (c0 + cp 1'(b + l)) (b_n + l_n) - r cr b_n
Eigen::VectorXd per_user_cost(const Eigen::VectorXd& b, const market::MarketTick& tick);
/// f = c0 1'p + cp/2 p'(I + 11')p - r cr 1'b,  p = l + b
double aggregate_cost(const Eigen::VectorXd& b, const market::MarketTick& tick);

enum class Solver { Centralized, Distributed };

struct PolicyOptions {
    Solver solver = Solver::Centralized;
    dualnet::Config dual;
    /// Use b = 0 even when it breaks the voltage band (stress runs).
    bool force_zero_fallback = false;
};

/// Optional measurement handed to the distributed solver; without it the
/// aggregator sees LDF-consistent voltages.
struct PolicyContext {
    const dualnet::Measurement* measurement = nullptr;
    const dualnet::SpanningTree* tree = nullptr;
    dualnet::Trace* trace = nullptr;
};

Decision policy_step(Mode mode, const storage::FleetState& state, const market::MarketTick& tick,
                     const std::vector<storage::TunedParams>& params, const storage::Fleet& fleet,
                     const VoltageModel& voltage, const PolicyOptions& options, const PolicyContext& context = {});

}  // namespace esscoord::controller
