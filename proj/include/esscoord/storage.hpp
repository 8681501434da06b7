#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "esscoord/grid.hpp"
#include "esscoord/market.hpp"

namespace esscoord::storage {

struct StorageUnit {
    double s_min = 0.0;
    double s_max = 0.0;
    double b_min = 0.0;  ///< most negative per-period change (discharge), < 0
    double b_max = 0.0;  ///< largest per-period charge, > 0
    std::optional<double> s_init;

    /// Throws ValidationError on malformed limits.
    void validate() const;
    /// Slow-charging assumption: capacity exceeds the charge range.
    bool slow_charging() const { return s_max - s_min > b_max - b_min; }
    double max_step_sq() const { return std::max(b_max * b_max, b_min * b_min); }
};

/// Units indexed like the feeder's internal buses.
struct Fleet {
    std::vector<StorageUnit> units;

    std::size_t size() const { return units.size(); }
    Eigen::VectorXd s_min() const;
    Eigen::VectorXd s_max() const;
    Eigen::VectorXd b_min() const;
    Eigen::VectorXd b_max() const;
};

/// Fleet file `bus,s_min,s_max,b_min,b_max[,s_init]`; every feeder bus once.
Fleet parse_fleet(std::string_view text, const grid::Feeder& feeder);
Fleet load_fleet(const std::filesystem::path& path, const grid::Feeder& feeder);

/// Range of the marginal price a unit can face.
struct PriceEnvelope {
    double lo = 0.0;
    double hi = 0.0;
};

enum class EnvelopeConvention {
    Proof,     ///< cp times the full load sums
    Statement  ///< cp / N scaling
};

PriceEnvelope price_envelope(std::size_t n, const market::WorldBounds& bounds,
                             EnvelopeConvention convention = EnvelopeConvention::Proof);
std::vector<PriceEnvelope> price_envelopes(const market::WorldBounds& bounds,
                                           EnvelopeConvention convention = EnvelopeConvention::Proof);

struct TunedParams {
    PriceEnvelope g;
    double delta = 0.0;
    double w = 0.0;
    double gamma = 0.0;
    double k = 0.0;  ///< contribution max(b_max^2, b_min^2) / (2 delta)
};

struct GammaInterval {
    double lo = 0.0;
    double hi = 0.0;
};

double delta(const StorageUnit& unit, const PriceEnvelope& g);
/// Admissible queue shifts for weight w; empty (lo > hi) when w delta < 1.
GammaInterval gamma_interval(const StorageUnit& unit, const PriceEnvelope& g, double w);

TunedParams tune_weighted(const StorageUnit& unit, const PriceEnvelope& g);
std::vector<TunedParams> tune_weighted(const Fleet& fleet, const std::vector<PriceEnvelope>& g);
/// Common weight 1/min(delta), shifts at the interval midpoints.
std::vector<TunedParams> tune_nonweighted(const Fleet& fleet, const std::vector<PriceEnvelope>& g);

struct Gaps {
    double k_star = 0.0;
    double k_prime = 0.0;
    double distance_bound = 0.0;  ///< 2 K* / cp_lo
};

Gaps suboptimality_gaps(const Fleet& fleet, const std::vector<TunedParams>& weighted, double cp_lo);

struct FleetState {
    Eigen::VectorXd s;
    Eigen::VectorXd x;  ///< virtual queues s + gamma
};

/// s = s_init when given, else s_min; x = s + gamma.
FleetState initial_state(const Fleet& fleet, const Eigen::VectorXd& gamma);

inline constexpr double kSocTolerance = 1e-9;

/// s += b, x += b. Throws SocViolation when a unit leaves its limits by more
/// than `tol`.
FleetState advance_soc(const FleetState& state, const Eigen::VectorXd& b, const Fleet& fleet,
                       double tol = kSocTolerance);

struct DriftCheck {
    bool holds = true;
    double slack = 0.0;
};

/// Pathwise drift bound for the weighted quadratic queue function.
DriftCheck drift_bound(const Eigen::VectorXd& x, const Eigen::VectorXd& b, const Eigen::VectorXd& w,
                       const Fleet& fleet, double tol = 1e-9);

Eigen::VectorXd weights(const std::vector<TunedParams>& params);
Eigen::VectorXd gammas(const std::vector<TunedParams>& params);

}  // namespace esscoord::storage
