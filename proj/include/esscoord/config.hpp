#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "esscoord/sim.hpp"

namespace esscoord::config {

/// Flat `key = value` settings; `#` starts a comment. Keys are unique.
class KeyValues {
public:
    static KeyValues parse(std::string_view text);
    static KeyValues load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value);

    std::optional<std::string> get(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    double number(const std::string& key, double fallback) const;
    long integer(const std::string& key, long fallback) const;
    bool flag(const std::string& key, bool fallback) const;
    /// Comma-separated numbers; empty when the key is absent.
    std::vector<double> numbers(const std::string& key) const;

    /// Keys never read, in order; typically typos.
    std::vector<std::string> unused() const;

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, std::size_t> lines_;
    mutable std::set<std::string> read_;

    std::string where(const std::string& key) const;
};

struct RunConfig {
    std::filesystem::path feeder;
    std::filesystem::path fleet;
    sim::Scenario::Kind scenario = sim::Scenario::Kind::Synthetic;
    std::filesystem::path trace;
    bool seed_given = false;

    market::SyntheticConfig synthetic;  ///< load vectors filled by build_world
    market::RandomConfig random;

    /// Per-bus values or a single value for every bus.
    std::vector<double> load_p, load_q, l_lo, l_hi, q_lo, q_hi;
    std::optional<double> power_factor;

    sim::RunOptions options;
    std::filesystem::path trajectory_out, metrics_out;
};

/// Reads every known key; relative paths resolve against `base`. Throws
/// ValidationError on bad values or unknown keys.
RunConfig parse_run_config(const KeyValues& kv, const std::filesystem::path& base);

/// Loads the feeder and fleet and expands load settings to the bus count.
sim::World build_world(const RunConfig& cfg);

/// One entry broadcast to n, or exactly n entries.
Eigen::VectorXd expand(const std::vector<double>& values, std::size_t n, std::string_view what);

/// Reactive load q = p tan(acos(pf)).
Eigen::VectorXd reactive_from_pf(const Eigen::VectorXd& p, double pf);

}  // namespace esscoord::config
