#include "esscoord/storage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "esscoord/error.hpp"
#include "text.hpp"

namespace esscoord::storage {

void StorageUnit::validate() const {
    if (!(s_min >= 0.0)) throw ValidationError("storage: s_min must be nonnegative");
    if (!(s_max > s_min)) throw ValidationError("storage: s_max must exceed s_min");
    if (!(b_min < 0.0) || !(b_max > 0.0)) throw ValidationError("storage: need b_min < 0 < b_max");
    if (s_init && (!(*s_init >= s_min) || !(*s_init <= s_max)))
        throw ValidationError("storage: s_init outside [s_min, s_max]");
}

namespace {

Eigen::VectorXd collect(const Fleet& f, double StorageUnit::*field) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) v(static_cast<Eigen::Index>(i)) = f.units[i].*field;
    return v;
}

}  // namespace

Eigen::VectorXd Fleet::s_min() const { return collect(*this, &StorageUnit::s_min); }
Eigen::VectorXd Fleet::s_max() const { return collect(*this, &StorageUnit::s_max); }
Eigen::VectorXd Fleet::b_min() const { return collect(*this, &StorageUnit::b_min); }
Eigen::VectorXd Fleet::b_max() const { return collect(*this, &StorageUnit::b_max); }

Fleet parse_fleet(std::string_view content, const grid::Feeder& feeder) {
    const auto n = feeder.bus_count();
    Fleet fleet;
    fleet.units.resize(n);
    std::vector<bool> seen(n, false);
    bool header = false, has_init = false;
    for (auto [ln, raw] : text::numbered_lines(content)) {
        auto line = text::trim(raw);
        if (const auto h = line.find('#'); h != std::string_view::npos) line = text::trim(line.substr(0, h));
        if (line.empty()) continue;
        const auto cells = text::split(line, ',');
        if (!header) {
            const bool base = cells.size() >= 5 && cells[0] == "bus" && cells[1] == "s_min" && cells[2] == "s_max" &&
                              cells[3] == "b_min" && cells[4] == "b_max";
            has_init = cells.size() == 6 && cells[5] == "s_init";
            if (!base || (cells.size() != 5 && !has_init))
                throw ParseError(ln, "expected header bus,s_min,s_max,b_min,b_max[,s_init]");
            header = true;
            continue;
        }
        if (cells.size() != (has_init ? 6u : 5u)) throw ParseError(ln, "wrong number of fields");
        const long label = text::to_long(cells[0], ln, "bus");
        int idx = -1;
        try {
            idx = feeder.index_of(label);
        } catch (const ValidationError&) {
            throw ParseError(ln, "bus " + std::to_string(label) + " is not a load bus of the feeder");
        }
        const auto i = static_cast<std::size_t>(idx);
        if (seen[i]) throw ParseError(ln, "bus " + std::to_string(label) + " listed twice");
        seen[i] = true;
        StorageUnit u;
        u.s_min = text::to_double(cells[1], ln, "s_min");
        u.s_max = text::to_double(cells[2], ln, "s_max");
        u.b_min = text::to_double(cells[3], ln, "b_min");
        u.b_max = text::to_double(cells[4], ln, "b_max");
        if (has_init) u.s_init = text::to_double(cells[5], ln, "s_init");
        try {
            u.validate();
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(ln) + ": " + e.what());
        }
        fleet.units[i] = u;
    }
    if (!header) throw ParseError(1, "missing header row");
    for (std::size_t i = 0; i < n; ++i)
        if (!seen[i]) throw ValidationError("fleet: no unit for bus " + std::to_string(feeder.labels()[i]));
    return fleet;
}

Fleet load_fleet(const std::filesystem::path& path, const grid::Feeder& feeder) {
    return parse_fleet(text::read_file(path), feeder);
}

PriceEnvelope price_envelope(std::size_t n, const market::WorldBounds& b, EnvelopeConvention conv) {
    b.require_positive_cp();
    if (n >= b.size()) throw ValidationError("price_envelope: unit index out of range");
    const auto i = static_cast<Eigen::Index>(n);
    const double scale = conv == EnvelopeConvention::Statement ? 1.0 / static_cast<double>(b.size()) : 1.0;
    const double load_lo = b.p_lo.sum() + b.p_lo(i);
    const double load_hi = b.p_hi.sum() + b.p_hi(i);
    // Both cp bounds are tried so the extremes stay valid for any load sign.
    const double lo_term = std::min(b.cp.lo * load_lo, b.cp.hi * load_lo) * scale;
    const double hi_term = std::max(b.cp.lo * load_hi, b.cp.hi * load_hi) * scale;
    PriceEnvelope g{b.c0.lo + lo_term - b.cr.hi, b.c0.hi + hi_term + b.cr.hi};
    if (!(g.hi > g.lo))
        throw DegenerateEnvelopeError("price envelope collapsed for unit " + std::to_string(n + 1));
    return g;
}

std::vector<PriceEnvelope> price_envelopes(const market::WorldBounds& b, EnvelopeConvention conv) {
    std::vector<PriceEnvelope> out;
    for (std::size_t n = 0; n < b.size(); ++n) out.push_back(price_envelope(n, b, conv));
    return out;
}

double delta(const StorageUnit& u, const PriceEnvelope& g) {
    if (!(g.hi > g.lo)) throw DegenerateEnvelopeError("price envelope collapsed");
    if (!u.slow_charging())
        throw AssumptionError("storage: capacity range must exceed the charge range (slow charging)");
    return (u.s_max - u.s_min + u.b_min - u.b_max) / (g.hi - g.lo);
}

GammaInterval gamma_interval(const StorageUnit& u, const PriceEnvelope& g, double w) {
    return {-g.lo / w + u.b_max - u.s_max, -g.hi / w + u.b_min - u.s_min};
}

TunedParams tune_weighted(const StorageUnit& u, const PriceEnvelope& g) {
    TunedParams p;
    p.g = g;
    p.delta = delta(u, g);
    p.w = 1.0 / p.delta;
    p.gamma = -(g.hi * (u.s_max - u.b_max) - g.lo * (u.s_min - u.b_min)) / (g.hi - g.lo);
    p.k = u.max_step_sq() / (2.0 * p.delta);
    return p;
}

std::vector<TunedParams> tune_weighted(const Fleet& f, const std::vector<PriceEnvelope>& g) {
    if (g.size() != f.size()) throw ValidationError("tune: envelope count differs from fleet size");
    std::vector<TunedParams> out;
    for (std::size_t i = 0; i < f.size(); ++i) out.push_back(tune_weighted(f.units[i], g[i]));
    return out;
}

std::vector<TunedParams> tune_nonweighted(const Fleet& f, const std::vector<PriceEnvelope>& g) {
    if (g.size() != f.size() || f.size() == 0) throw ValidationError("tune: envelope count differs from fleet size");
    double dmin = delta(f.units[0], g[0]);
    for (std::size_t i = 1; i < f.size(); ++i) dmin = std::min(dmin, delta(f.units[i], g[i]));
    const double w = 1.0 / dmin;
    std::vector<TunedParams> out;
    for (std::size_t i = 0; i < f.size(); ++i) {
        TunedParams p;
        p.g = g[i];
        p.delta = delta(f.units[i], g[i]);
        p.w = w;
        const auto iv = gamma_interval(f.units[i], g[i], w);
        p.gamma = 0.5 * (iv.lo + iv.hi);
        p.k = f.units[i].max_step_sq() / (2.0 * dmin);
        out.push_back(p);
    }
    return out;
}

Gaps suboptimality_gaps(const Fleet& f, const std::vector<TunedParams>& weighted, double cp_lo) {
    if (weighted.size() != f.size() || f.size() == 0) throw ValidationError("gaps: parameter count differs");
    Gaps gaps;
    double dmin = weighted[0].delta, sum_sq = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        gaps.k_star += f.units[i].max_step_sq() / (2.0 * weighted[i].delta);
        dmin = std::min(dmin, weighted[i].delta);
        sum_sq += f.units[i].max_step_sq();
    }
    gaps.k_prime = sum_sq / (2.0 * dmin);
    gaps.distance_bound = cp_lo > 0.0 ? 2.0 * gaps.k_star / cp_lo : std::numeric_limits<double>::infinity();
    return gaps;
}

FleetState initial_state(const Fleet& f, const Eigen::VectorXd& gamma) {
    if (static_cast<std::size_t>(gamma.size()) != f.size()) throw ValidationError("initial_state: size mismatch");
    FleetState st;
    st.s.resize(gamma.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto& u = f.units[i];
        st.s(static_cast<Eigen::Index>(i)) = u.s_init.value_or(u.s_min);
    }
    st.x = st.s + gamma;
    return st;
}

FleetState advance_soc(const FleetState& st, const Eigen::VectorXd& b, const Fleet& f, double tol) {
    if (b.size() != st.s.size() || static_cast<std::size_t>(b.size()) != f.size())
        throw ValidationError("advance_soc: size mismatch");
    FleetState next{st.s + b, st.x + b};
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double s = next.s(static_cast<Eigen::Index>(i));
        const auto& u = f.units[i];
        if (s < u.s_min - tol || s > u.s_max + tol)
            throw SocViolation(i, s, "state of charge of unit " + std::to_string(i + 1) + " left its limits: " +
                                         text::fmt(s) + " not in [" + text::fmt(u.s_min) + ", " +
                                         text::fmt(u.s_max) + "]");
    }
    return next;
}

DriftCheck drift_bound(const Eigen::VectorXd& x, const Eigen::VectorXd& b, const Eigen::VectorXd& w,
                       const Fleet& f, double tol) {
    double lhs = 0.0, rhs = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double xn = x(i), bn = b(i), wn = w(i);
        lhs += 0.5 * wn * ((xn + bn) * (xn + bn) - xn * xn);
        rhs += wn * xn * bn + 0.5 * wn * f.units[static_cast<std::size_t>(i)].max_step_sq();
    }
    DriftCheck c;
    c.slack = rhs - lhs;
    c.holds = c.slack >= -tol;
    return c;
}

Eigen::VectorXd weights(const std::vector<TunedParams>& p) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) v(static_cast<Eigen::Index>(i)) = p[i].w;
    return v;
}

Eigen::VectorXd gammas(const std::vector<TunedParams>& p) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) v(static_cast<Eigen::Index>(i)) = p[i].gamma;
    return v;
}

}  // namespace esscoord::storage
