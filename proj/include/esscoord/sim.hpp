#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "esscoord/controller.hpp"
#include "esscoord/grid.hpp"
#include "esscoord/market.hpp"
#include "esscoord/problem.hpp"
#include "esscoord/storage.hpp"

namespace esscoord::sim {

/// Source of market ticks.
struct Scenario {
    enum class Kind { Synthetic, Random, Trace };

    Kind kind = Kind::Synthetic;
    market::SyntheticConfig synthetic;
    market::RandomConfig random;
    std::shared_ptr<const market::Trace> trace;

    market::MarketTick tick(std::size_t t, std::uint64_t seed) const;
    market::WorldBounds bounds() const;
    /// Number of ticks for traces, nothing for generators.
    std::optional<std::size_t> length() const;
};

struct World {
    grid::Feeder feeder;
    storage::Fleet fleet;
    VoltageModel voltage;
    Scenario scenario;

    World(grid::Feeder feeder, storage::Fleet fleet, Scenario scenario);
    std::size_t size() const { return fleet.size(); }
};

/// What the distributed aggregator measures before each period.
enum class MeasurementModel { Ldf, Ac };

struct RunOptions {
    Mode mode = Mode::Weighted;
    controller::Solver solver = controller::Solver::Centralized;
    std::size_t horizon = 1;
    std::uint64_t seed = 0;
    dualnet::Config dual;
    storage::EnvelopeConvention envelope = storage::EnvelopeConvention::Proof;
    bool force_zero_fallback = false;
    MeasurementModel measurement = MeasurementModel::Ldf;
    /// Redraw the communication tree every period (distributed only).
    bool random_tree = false;
};

/// Queue parameters for a mode: weighted tuning for weighted and relaxed_sign,
/// common weight for nonweighted, empty for greedy.
std::vector<storage::TunedParams> tune(Mode mode, const storage::Fleet& fleet, const market::WorldBounds& bounds,
                                       storage::EnvelopeConvention convention = storage::EnvelopeConvention::Proof);

struct TrajectoryRecord {
    std::size_t t = 0;
    market::MarketTick tick;
    Eigen::VectorXd b;
    double cost = 0.0;
    Eigen::VectorXd user_cost;
    Eigen::VectorXd x_before;  ///< queues seen by the decision
    Eigen::VectorXd s;         ///< SoC after the period
    double v_min = 0.0, v_max = 0.0;
    double voltage_slack = 0.0;  ///< worst band slack
    int iterations = 0;
    double drift_slack = 0.0;    ///< NaN for greedy
    bool fallback = false;
};

struct Metrics {
    std::size_t periods = 0;
    double average_cost = 0.0;
    Eigen::VectorXd average_user_cost;
    storage::Gaps gaps;
    std::size_t soc_violations = 0;
    std::size_t voltage_violations = 0;
    std::size_t sign_violations = 0;
    std::size_t drift_violations = 0;
    std::size_t characterization_violations = 0;
    std::size_t fallbacks = 0;
    double alignment = 1.0;  ///< share of nonzero decisions with r b >= 0
    double mean_iterations = 0.0;
    int max_iterations = 0;
};

struct RunResult {
    Metrics metrics;
    std::vector<TrajectoryRecord> records;
    std::vector<storage::TunedParams> params;
    Eigen::VectorXd s_initial;
};

/// Sequential horizon loop. Errors from a period are rethrown with its index.
RunResult run(const World& world, const RunOptions& options);

struct FeasibilityReport {
    std::size_t soc_violations = 0;
    std::size_t voltage_violations = 0;
    std::size_t sign_violations = 0;
    double alignment = 1.0;
    std::size_t fallbacks = 0;
    /// Units breaking |sum_t b_n| <= s_max - s_min.
    std::size_t average_violations = 0;
    double worst_average_margin = 0.0;  ///< min over n of (s_max - s_min) - |sum_t b_n|

    bool clean() const {
        return soc_violations == 0 && voltage_violations == 0 && sign_violations == 0 && average_violations == 0;
    }
};

inline constexpr double kAuditTolerance = 1e-9;

FeasibilityReport audit(const std::vector<TrajectoryRecord>& records, const storage::Fleet& fleet, Mode mode,
                        double tol = kAuditTolerance);

/// K*, K' and 2 K* / cp_lo for a fleet and its envelopes. Throws
/// InternalError if K* > K'.
storage::Gaps suboptimality_report(const storage::Fleet& fleet, const std::vector<storage::PriceEnvelope>& g,
                                   double cp_lo);

/// Weighted-mode check x_n + g_lo/w >= 0, r = +1 => b_n = 0 (and the mirror
/// case); returns the number of entries breaking it.
std::size_t characterization_violations(const TrajectoryRecord& record,
                                        const std::vector<storage::TunedParams>& params, double tol = 1e-9);

inline constexpr int kTrajectoryVersion = 1;

void write_trajectory(std::ostream& os, const RunResult& result, const RunOptions& options);
void write_metrics(std::ostream& os, const RunResult& result, const RunOptions& options);

}  // namespace esscoord::sim
