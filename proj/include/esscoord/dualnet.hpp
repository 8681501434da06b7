#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "esscoord/grid.hpp"
#include "esscoord/kernels.hpp"
#include "esscoord/problem.hpp"

namespace esscoord::dualnet {

struct DualState {
    double nu = 0.0;
    Eigen::VectorXd lambda_lo;
    Eigen::VectorXd lambda_hi;
    int j = 0;
};

struct StepSizes {
    double nu = 0.0;
    Eigen::VectorXd lambda;  ///< per voltage row, shared by lower and upper rows
};

enum class Schedule {
    Diminishing,  ///< eta0 / (j + 1)
    Scaled,       ///< constant diagonal steps from a Gershgorin bound
    Metric        ///< steps in the metric M M' / cp on the free multipliers
};

std::string_view to_string(Schedule s);
Schedule parse_schedule(std::string_view name);

struct Config {
    Schedule schedule = Schedule::Metric;
    double eta_nu0 = 3e6;       ///< Diminishing numerators
    double eta_lambda0 = 2.0;
    double step_scale = 1.0;    ///< multiplier on the scaled steps
    int max_iters = 2000;
    double tol = 1e-10;
    kernels::Backend backend = kernels::Backend::OpenMP;
};

/// clip(-(c + lambda_tilde)/cp - load, [lo, hi])
double user_response(double lambda_tilde, double c, double cp, double load, double lo, double hi);
/// a = -nu / cp
double primal_a(double nu, double cp);

/// One projected ascent step given the total consumption 1'(b + l) and the
/// voltage drop R(b + l) + Xq.
DualState dual_ascent(const DualState& state, double a, double total, const Eigen::VectorXd& drop,
                      const grid::VoltageBand& band, const StepSizes& eta);
DualState dual_ascent(const DualState& state, double a, const Eigen::VectorXd& b, const Eigen::VectorXd& load_p,
                      const Eigen::VectorXd& load_q, const grid::SensitivityMatrices& sens,
                      const grid::VoltageBand& band, const StepSizes& eta);

/// Diagonal steps cp / (row sums of |M M'|) for the stacked constraint
/// matrix M of the coupling and voltage rows.
StepSizes scaled_steps(const Eigen::MatrixXd& R, double cp, double scale = 1.0);

/// Communication tree over users 0..N-1; parent -1 is the aggregator.
struct SpanningTree {
    std::vector<int> parent;

    std::size_t size() const { return parent.size(); }
    static SpanningTree from_feeder(const grid::Feeder& feeder);
    static SpanningTree star(std::size_t n);
    static SpanningTree chain(std::size_t n);
    /// Uniformly attaches each node (in a random order) to an earlier one.
    static SpanningTree random(std::size_t n, std::uint64_t seed);
};

enum class MessageKind { Broadcast, Decision, PartialSum, VoltageMeasurement };

inline constexpr int kAggregator = -1;
inline constexpr int kMeter = -2;

struct Message {
    MessageKind kind;
    int from;
    int to;
};

/// Records message envelopes as the protocol runs.
class MessageLog {
public:
    void record(MessageKind kind, int from, int to) { messages_.push_back({kind, from, to}); }
    const std::vector<Message>& messages() const { return messages_; }
    void clear() { messages_.clear(); }

private:
    std::vector<Message> messages_;
};

/// Leaf-to-root accumulation; each node adds its own value and then its
/// children's subtotals in ascending index order. Throws TopologyError.
double tree_sum(const SpanningTree& tree, const Eigen::VectorXd& values, MessageLog* log = nullptr);

/// R l + X q recovered from measured voltages and the previous decisions.
Eigen::VectorXd estimate_background(const Eigen::VectorXd& v_measured, double v0, const Eigen::MatrixXd& R,
                                    const Eigen::VectorXd& b_prev);

struct Measurement {
    Eigen::VectorXd v;       ///< squared voltages observed with b_prev in place
    Eigen::VectorXd b_prev;
};

/// Private data of one user. Only responses and partial sums leave it.
class UserAgent {
public:
    UserAgent(double c, double load, double lo, double hi) : c_(c), load_(load), lo_(lo), hi_(hi) {}
    double respond(double lambda_tilde, double cp) const { return user_response(lambda_tilde, c_, cp, load_, lo_, hi_); }

    friend class UserGroup;

private:
    double c_, load_, lo_, hi_;
};

/// All users of a round, laid out for the batched response kernel.
class UserGroup {
public:
    explicit UserGroup(const std::vector<UserAgent>& users);
    std::size_t size() const { return static_cast<std::size_t>(c_.size()); }
    /// b_n for every user n given its broadcast entry.
    void respond(const Eigen::VectorXd& lambda_tilde, double cp, kernels::Backend backend, Eigen::VectorXd& out) const;
    /// Total load over the communication tree.
    double total_load(const SpanningTree& tree, MessageLog* log) const;

private:
    Eigen::VectorXd c_, load_, lo_, hi_;
};

/// Public data only: network sensitivities, band, prices, step rule.
class Aggregator {
public:
    Aggregator(VoltageModel voltage, double cp, const Config& config, MessageLog* log = nullptr);

    void observe_voltages(const Eigen::VectorXd& v_measured, const Eigen::VectorXd& b_prev);
    void observe_total_load(double total);

    /// lambda_tilde at the current multipliers.
    const Eigen::VectorXd& broadcast();
    /// Takes the responses, returns the stopping residual at the current
    /// multipliers and advances them.
    double collect(const Eigen::VectorXd& b);

    const DualState& state() const { return state_; }
    double a() const { return a_; }
    const Eigen::VectorXd& background() const { return background_; }

private:
    VoltageModel voltage_;
    double cp_;
    Config config_;
    MessageLog* log_;
    Eigen::VectorXd background_;
    double total_load_ = 0.0;
    StepSizes scaled_;
    DualState state_;
    Eigen::MatrixXd metric_;  // [nu, mu] block of M M' / cp

    void metric_step(double g_nu);
    double a_ = 0.0;
    Eigen::VectorXd lambda_tilde_, drop_, work_;
};

struct TraceRow {
    int j = 0;
    double nu = 0.0;
    double residual = 0.0;
    Eigen::VectorXd b, lambda_lo, lambda_hi;
};

struct Trace {
    std::vector<TraceRow> rows;
};

void write_trace(std::ostream& os, const Trace& trace);

struct Result {
    Decision decision;
    DualState dual;
    double residual = 0.0;
    bool converged = false;
};

/// Synchronous aggregator/user rounds of dual decomposition over `problem`.
/// Without a measurement the aggregator sees LDF voltages at b_prev = 0.
Result solve_distributed(const StepProblem& problem, const Config& config, const Measurement* measurement = nullptr,
                         const SpanningTree* tree = nullptr, Trace* trace = nullptr, MessageLog* log = nullptr);

}  // namespace esscoord::dualnet
