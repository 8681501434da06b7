#include "esscoord/config.hpp"

#include <cmath>

#include "esscoord/error.hpp"
#include "text.hpp"

namespace esscoord::config {

KeyValues KeyValues::parse(std::string_view body) {
    KeyValues kv;
    for (const auto& [no, raw] : text::numbered_lines(body)) {
        auto line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = text::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError(no, "expected key=value");
        const std::string key(text::trim(line.substr(0, eq)));
        if (key.empty()) throw ParseError(no, "empty key");
        if (kv.values_.count(key)) throw ParseError(no, "duplicate key '" + key + "'");
        kv.values_[key] = std::string(text::trim(line.substr(eq + 1)));
        kv.lines_[key] = no;
    }
    return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) { return parse(text::read_file(path)); }

void KeyValues::set(const std::string& key, std::string value) {
    values_[key] = std::move(value);
    lines_.erase(key);
}

std::string KeyValues::where(const std::string& key) const {
    const auto it = lines_.find(key);
    return it == lines_.end() ? "'" + key + "'" : "'" + key + "' (line " + std::to_string(it->second) + ")";
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    read_.insert(key);
    return it->second;
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

double KeyValues::number(const std::string& key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
        return text::to_double(*v, 0, key);
    } catch (const ParseError&) {
        throw ValidationError("expected a number for " + where(key) + ", got '" + *v + "'");
    }
}

long KeyValues::integer(const std::string& key, long fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
        return text::to_long(*v, 0, key);
    } catch (const ParseError&) {
        throw ValidationError("expected an integer for " + where(key) + ", got '" + *v + "'");
    }
}

bool KeyValues::flag(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ValidationError("expected true/false for " + where(key) + ", got '" + *v + "'");
}

std::vector<double> KeyValues::numbers(const std::string& key) const {
    const auto v = get(key);
    if (!v) return {};
    std::vector<double> out;
    try {
        for (auto part : text::split(*v, ',')) out.push_back(text::to_double(part, 0, key));
    } catch (const ParseError&) {
        throw ValidationError("expected comma-separated numbers for " + where(key) + ", got '" + *v + "'");
    }
    return out;
}

std::vector<std::string> KeyValues::unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
        if (!read_.count(k)) out.push_back(k);
    return out;
}

Eigen::VectorXd expand(const std::vector<double>& values, std::size_t n, std::string_view what) {
    if (values.size() == 1) return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), values[0]);
    if (values.size() != n)
        throw ValidationError(std::string(what) + ": expected 1 or " + std::to_string(n) + " values, got " +
                              std::to_string(values.size()));
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(n));
}

Eigen::VectorXd reactive_from_pf(const Eigen::VectorXd& p, double pf) {
    if (!(pf > 0.0 && pf <= 1.0)) throw ValidationError("power_factor must be in (0, 1]");
    return p * std::tan(std::acos(pf));
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    std::filesystem::path p(value);
    return p.is_absolute() ? p : base / p;
}

market::Range range(const KeyValues& kv, const std::string& key, market::Range fallback) {
    const auto v = kv.numbers(key);
    if (v.empty()) return fallback;
    if (v.size() != 2) throw ValidationError(key + ": expected lo,hi");
    return {v[0], v[1]};
}

}  // namespace

RunConfig parse_run_config(const KeyValues& kv, const std::filesystem::path& base) {
    RunConfig c;
    if (auto v = kv.get("feeder")) c.feeder = resolve(base, *v);
    if (auto v = kv.get("fleet")) c.fleet = resolve(base, *v);
    if (auto v = kv.get("trace")) c.trace = resolve(base, *v);

    const auto kind = kv.get("scenario", "synthetic");
    if (kind == "synthetic")
        c.scenario = sim::Scenario::Kind::Synthetic;
    else if (kind == "random")
        c.scenario = sim::Scenario::Kind::Random;
    else if (kind == "trace")
        c.scenario = sim::Scenario::Kind::Trace;
    else
        throw ValidationError("unknown scenario '" + kind + "'");

    auto& o = c.options;
    o.mode = parse_mode(kv.get("mode", "weighted"));
    const auto solver = kv.get("solver", "centralized");
    if (solver == "centralized")
        o.solver = controller::Solver::Centralized;
    else if (solver == "distributed")
        o.solver = controller::Solver::Distributed;
    else
        throw ValidationError("unknown solver '" + solver + "'");
    const long horizon = kv.integer("horizon", 1);
    if (horizon < 1) throw ValidationError("horizon must be at least 1");
    o.horizon = static_cast<std::size_t>(horizon);
    c.seed_given = kv.has("seed");
    const long seed = kv.integer("seed", 0);
    if (seed < 0) throw ValidationError("seed must be nonnegative");
    o.seed = static_cast<std::uint64_t>(seed);

    const auto env = kv.get("envelope", "proof");
    if (env == "proof")
        o.envelope = storage::EnvelopeConvention::Proof;
    else if (env == "statement")
        o.envelope = storage::EnvelopeConvention::Statement;
    else
        throw ValidationError("unknown envelope convention '" + env + "'");
    const auto fb = kv.get("fallback", "strict");
    if (fb != "strict" && fb != "force_zero") throw ValidationError("fallback must be strict or force_zero");
    o.force_zero_fallback = fb == "force_zero";
    const auto meas = kv.get("measurement", "ldf");
    if (meas == "ldf")
        o.measurement = sim::MeasurementModel::Ldf;
    else if (meas == "ac")
        o.measurement = sim::MeasurementModel::Ac;
    else
        throw ValidationError("measurement must be ldf or ac");
    o.random_tree = kv.flag("random_tree", false);

    auto& d = o.dual;
    if (auto v = kv.get("dual.schedule")) d.schedule = dualnet::parse_schedule(*v);
    d.tol = kv.number("dual.tol", d.tol);
    d.max_iters = static_cast<int>(kv.integer("dual.max_iters", d.max_iters));
    d.eta_nu0 = kv.number("dual.eta_nu0", d.eta_nu0);
    d.eta_lambda0 = kv.number("dual.eta_lambda0", d.eta_lambda0);
    d.step_scale = kv.number("dual.step_scale", d.step_scale);
    const auto backend = kv.get("dual.backend", "openmp");
    if (backend == "openmp")
        d.backend = kernels::Backend::OpenMP;
    else if (backend == "serial")
        d.backend = kernels::Backend::Serial;
    else
        throw ValidationError("dual.backend must be serial or openmp");
    if (!(d.tol > 0.0) || d.max_iters < 1) throw ValidationError("dual.tol and dual.max_iters must be positive");

    auto& s = c.synthetic;
    s.low_price = kv.number("low_price", s.low_price);
    s.high_price = kv.number("high_price", s.high_price);
    s.long_dwell = static_cast<int>(kv.integer("long_dwell", s.long_dwell));
    s.short_dwell = static_cast<int>(kv.integer("short_dwell", s.short_dwell));
    s.high_long = kv.flag("high_long", s.high_long);
    s.regulation_half_period = static_cast<int>(kv.integer("regulation_half_period", s.regulation_half_period));

    auto& b = c.random.bounds;
    b.c0 = range(kv, "c0", {5.0, 20.0});
    b.cp = range(kv, "cp", {0.2, 2.0});
    b.cr = range(kv, "cr", {5.0, 20.0});
    c.random.cp_from_c0 = kv.flag("cp_from_c0", false);

    c.load_p = kv.numbers("load_p");
    c.load_q = kv.numbers("load_q");
    c.l_lo = kv.numbers("l_lo");
    c.l_hi = kv.numbers("l_hi");
    c.q_lo = kv.numbers("q_lo");
    c.q_hi = kv.numbers("q_hi");
    if (kv.has("power_factor")) c.power_factor = kv.number("power_factor", 1.0);

    if (auto v = kv.get("trajectory")) c.trajectory_out = resolve(base, *v);
    if (auto v = kv.get("metrics")) c.metrics_out = resolve(base, *v);

    if (const auto extra = kv.unused(); !extra.empty()) throw ValidationError("unknown setting '" + extra.front() + "'");
    return c;
}

sim::World build_world(const RunConfig& c) {
    if (c.feeder.empty() || c.fleet.empty()) throw ValidationError("feeder and fleet paths are required");
    auto feeder = grid::load_feeder(c.feeder);
    auto fleet = storage::load_fleet(c.fleet, feeder);
    const auto n = feeder.bus_count();

    sim::Scenario sc;
    sc.kind = c.scenario;
    const auto reactive = [&](const std::vector<double>& q, const Eigen::VectorXd& p, const char* what) {
        if (!q.empty()) return expand(q, n, what);
        if (c.power_factor) return reactive_from_pf(p, *c.power_factor);
        throw ValidationError(std::string(what) + " or power_factor is required");
    };
    switch (c.scenario) {
    case sim::Scenario::Kind::Synthetic: {
        if (c.load_p.empty()) throw ValidationError("synthetic scenario needs load_p");
        sc.synthetic = c.synthetic;
        sc.synthetic.load_p = expand(c.load_p, n, "load_p");
        sc.synthetic.load_q = reactive(c.load_q, sc.synthetic.load_p, "load_q");
        break;
    }
    case sim::Scenario::Kind::Random: {
        if (c.l_lo.empty() || c.l_hi.empty()) throw ValidationError("random scenario needs l_lo and l_hi");
        sc.random = c.random;
        auto& b = sc.random.bounds;
        b.p_lo = expand(c.l_lo, n, "l_lo");
        b.p_hi = expand(c.l_hi, n, "l_hi");
        b.q_lo = reactive(c.q_lo, b.p_lo, "q_lo");
        b.q_hi = reactive(c.q_hi, b.p_hi, "q_hi");
        b.validate();
        break;
    }
    case sim::Scenario::Kind::Trace: {
        if (c.trace.empty()) throw ValidationError("trace scenario needs a trace path");
        sc.trace = std::make_shared<market::Trace>(market::load_trace(c.trace));
        break;
    }
    }
    return sim::World(std::move(feeder), std::move(fleet), std::move(sc));
}

}  // namespace esscoord::config
