#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace esscoord::market {

/// One period of exogenous data.
struct MarketTick {
    int r = 1;          ///< regulation signal, +1 charge-only / -1 discharge-only
    double c0 = 0.0;    ///< base energy price
    double cp = 0.0;    ///< competitive (congestion) price
    double cr = 0.0;    ///< regulation reward
    Eigen::VectorXd load_p;
    Eigen::VectorXd load_q;

    std::size_t size() const { return static_cast<std::size_t>(load_p.size()); }
    bool operator==(const MarketTick& o) const;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
};

struct WorldBounds {
    Range c0, cp, cr;
    Eigen::VectorXd p_lo, p_hi, q_lo, q_hi;

    std::size_t size() const { return static_cast<std::size_t>(p_lo.size()); }

    /// Ordering and sign checks; throws ValidationError.
    void validate() const;
    /// Additionally requires a strictly positive competitive-price floor.
    void require_positive_cp() const;
    bool contains(const MarketTick& tick, double tol = 0.0) const;
    /// Describes the first bound `tick` breaks, empty when it fits.
    std::string violation(const MarketTick& tick, double tol = 0.0) const;
};

/// Periodic two-level price pattern with a square-wave regulation signal.
struct SyntheticConfig {
    double low_price = 5.0;
    double high_price = 20.0;
    int long_dwell = 10;
    int short_dwell = 5;
    /// Hold the high level for the long dwell instead of the low one.
    bool high_long = false;
    int regulation_half_period = 15;
    Eigen::VectorXd load_p;
    Eigen::VectorXd load_q;
};

/// The price level (applied to N*cp, c0 and cr) at period t.
double synthetic_price(const SyntheticConfig& cfg, std::size_t t);
MarketTick scenario_synthetic(const SyntheticConfig& cfg, std::size_t t);
WorldBounds synthetic_bounds(const SyntheticConfig& cfg);

struct RandomConfig {
    WorldBounds bounds;
    /// Draw c0 and set cp = c0 / N instead of drawing cp.
    bool cp_from_c0 = false;
};

/// Uniform draws inside the bounds, fair +-1 regulation. Pure in (cfg, seed, t).
MarketTick scenario_random(const RandomConfig& cfg, std::uint64_t seed, std::size_t t);
/// Bounds actually reachable by scenario_random (cp tightened in cp_from_c0 mode).
WorldBounds random_bounds(const RandomConfig& cfg);

struct Trace {
    std::vector<MarketTick> ticks;
    WorldBounds bounds;
    bool declared_bounds = false;
};

Trace parse_trace(std::string_view text);
Trace load_trace(const std::filesystem::path& path);
/// Header row plus one row per tick; `#bounds` lines when requested.
std::string format_trace(const Trace& trace, bool with_bounds);

/// Componentwise envelope of a tick sequence.
WorldBounds infer_bounds(const std::vector<MarketTick>& ticks);

/// Each tick repeated k times, e.g. hourly data on a 5-minute grid.
std::vector<MarketTick> repeat_each(const std::vector<MarketTick>& ticks, std::size_t k);

}  // namespace esscoord::market
