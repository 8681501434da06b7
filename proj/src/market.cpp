#include "esscoord/market.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "esscoord/error.hpp"
#include "text.hpp"

namespace esscoord::market {

bool MarketTick::operator==(const MarketTick& o) const {
    return r == o.r && c0 == o.c0 && cp == o.cp && cr == o.cr && load_p.size() == o.load_p.size() &&
           load_q.size() == o.load_q.size() && load_p == o.load_p && load_q == o.load_q;
}

namespace {

void check_range(const Range& r, const char* name) {
    if (!(r.lo >= 0.0) || !(r.hi >= r.lo))
        throw ValidationError(std::string("bounds: need 0 <= lower <= upper for ") + name);
}

void check_vectors(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const char* name) {
    if (lo.size() != hi.size()) throw ValidationError(std::string("bounds: size mismatch for ") + name);
    for (Eigen::Index i = 0; i < lo.size(); ++i)
        if (!(lo(i) >= 0.0) || !(hi(i) >= lo(i)))
            throw ValidationError(std::string("bounds: need 0 <= lower <= upper for ") + name + "_" +
                                  std::to_string(i + 1));
}

}  // namespace

void WorldBounds::validate() const {
    check_range(c0, "c0");
    check_range(cp, "cp");
    check_range(cr, "cr");
    check_vectors(p_lo, p_hi, "l");
    check_vectors(q_lo, q_hi, "q");
    if (p_lo.size() != q_lo.size()) throw ValidationError("bounds: l and q sizes differ");
    if (p_lo.size() == 0) throw ValidationError("bounds: no buses");
}

void WorldBounds::require_positive_cp() const {
    validate();
    if (!(cp.lo > 0.0)) throw ValidationError("bounds: competitive price floor must be positive");
}

std::string WorldBounds::violation(const MarketTick& t, double tol) const {
    if (t.r != 1 && t.r != -1) return "r not in {+1,-1}";
    if (!c0.contains(t.c0, tol)) return "c0 outside bounds";
    if (!cp.contains(t.cp, tol)) return "cp outside bounds";
    if (!cr.contains(t.cr, tol)) return "cr outside bounds";
    if (t.load_p.size() != p_lo.size() || t.load_q.size() != q_lo.size()) return "load vector size";
    for (Eigen::Index i = 0; i < p_lo.size(); ++i) {
        if (t.load_p(i) < p_lo(i) - tol || t.load_p(i) > p_hi(i) + tol) return "l_" + std::to_string(i + 1) + " outside bounds";
        if (t.load_q(i) < q_lo(i) - tol || t.load_q(i) > q_hi(i) + tol) return "q_" + std::to_string(i + 1) + " outside bounds";
    }
    return {};
}

bool WorldBounds::contains(const MarketTick& t, double tol) const { return violation(t, tol).empty(); }

double synthetic_price(const SyntheticConfig& cfg, std::size_t t) {
    if (cfg.long_dwell < 0 || cfg.short_dwell < 0 || cfg.long_dwell + cfg.short_dwell == 0)
        throw ValidationError("synthetic: dwell lengths must be nonnegative with a positive sum");
    // low segment first, then high
    const auto cycle = static_cast<std::size_t>(cfg.long_dwell + cfg.short_dwell);
    const auto low_len = static_cast<std::size_t>(cfg.high_long ? cfg.short_dwell : cfg.long_dwell);
    return (t % cycle) < low_len ? cfg.low_price : cfg.high_price;
}

MarketTick scenario_synthetic(const SyntheticConfig& cfg, std::size_t t) {
    if (cfg.regulation_half_period <= 0) throw ValidationError("synthetic: regulation half period must be positive");
    if (cfg.load_p.size() == 0 || cfg.load_p.size() != cfg.load_q.size())
        throw ValidationError("synthetic: load vectors missing or of different sizes");
    MarketTick tick;
    tick.r = ((t / static_cast<std::size_t>(cfg.regulation_half_period)) % 2 == 0) ? 1 : -1;
    const double level = synthetic_price(cfg, t);
    tick.c0 = level;
    tick.cr = level;
    tick.cp = level / static_cast<double>(cfg.load_p.size());
    tick.load_p = cfg.load_p;
    tick.load_q = cfg.load_q;
    return tick;
}

WorldBounds synthetic_bounds(const SyntheticConfig& cfg) {
    WorldBounds b;
    const double lo = std::min(cfg.low_price, cfg.high_price);
    const double hi = std::max(cfg.low_price, cfg.high_price);
    const double n = static_cast<double>(cfg.load_p.size());
    b.c0 = {lo, hi};
    b.cr = {lo, hi};
    b.cp = {lo / n, hi / n};
    b.p_lo = b.p_hi = cfg.load_p;
    b.q_lo = b.q_hi = cfg.load_q;
    return b;
}

namespace {

// Uniform in [0,1) from the top 53 bits, independent of the library's
// distribution implementations.
double unit_draw(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& g, const Range& r) { return r.lo + (r.hi - r.lo) * unit_draw(g); }

}  // namespace

MarketTick scenario_random(const RandomConfig& cfg, std::uint64_t seed, std::size_t t) {
    const auto tt = static_cast<std::uint64_t>(t);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tt), static_cast<std::uint32_t>(tt >> 32)};
    std::mt19937_64 g(seq);
    const auto& b = cfg.bounds;
    const auto n = b.p_lo.size();
    MarketTick tick;
    tick.r = (g() >> 63) ? 1 : -1;
    tick.c0 = uniform(g, b.c0);
    tick.cp = uniform(g, b.cp);
    if (cfg.cp_from_c0) tick.cp = tick.c0 / static_cast<double>(n);
    tick.cr = uniform(g, b.cr);
    tick.load_p.resize(n);
    tick.load_q.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) tick.load_p(i) = uniform(g, {b.p_lo(i), b.p_hi(i)});
    for (Eigen::Index i = 0; i < n; ++i) tick.load_q(i) = uniform(g, {b.q_lo(i), b.q_hi(i)});
    return tick;
}

WorldBounds random_bounds(const RandomConfig& cfg) {
    WorldBounds b = cfg.bounds;
    if (cfg.cp_from_c0) {
        const double n = static_cast<double>(b.p_lo.size());
        b.cp = {b.c0.lo / n, b.c0.hi / n};
    }
    return b;
}

WorldBounds infer_bounds(const std::vector<MarketTick>& ticks) {
    if (ticks.empty()) throw ValidationError("trace: no rows");
    WorldBounds b;
    const auto& f = ticks.front();
    b.c0 = {f.c0, f.c0};
    b.cp = {f.cp, f.cp};
    b.cr = {f.cr, f.cr};
    b.p_lo = b.p_hi = f.load_p;
    b.q_lo = b.q_hi = f.load_q;
    for (const auto& t : ticks) {
        b.c0 = {std::min(b.c0.lo, t.c0), std::max(b.c0.hi, t.c0)};
        b.cp = {std::min(b.cp.lo, t.cp), std::max(b.cp.hi, t.cp)};
        b.cr = {std::min(b.cr.lo, t.cr), std::max(b.cr.hi, t.cr)};
        b.p_lo = b.p_lo.cwiseMin(t.load_p);
        b.p_hi = b.p_hi.cwiseMax(t.load_p);
        b.q_lo = b.q_lo.cwiseMin(t.load_q);
        b.q_hi = b.q_hi.cwiseMax(t.load_q);
    }
    return b;
}

std::vector<MarketTick> repeat_each(const std::vector<MarketTick>& ticks, std::size_t k) {
    std::vector<MarketTick> out;
    out.reserve(ticks.size() * k);
    for (const auto& t : ticks)
        for (std::size_t i = 0; i < k; ++i) out.push_back(t);
    return out;
}

namespace {

// "#bounds key=lo,hi ..." or "key=v1,...,vN" for the per-bus vectors.
void parse_bounds_line(std::string_view body, std::size_t line, WorldBounds& b, unsigned& seen) {
    for (auto tok : text::split_ws(body)) {
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos) throw ParseError(line, "bounds entry without '='");
        const auto key = tok.substr(0, eq);
        std::vector<double> vals;
        for (auto v : text::split(tok.substr(eq + 1), ',')) vals.push_back(text::to_double(v, line, key));
        auto pair = [&](Range& r, unsigned bit) {
            if (vals.size() != 2) throw ParseError(line, std::string(key) + " needs lo,hi");
            r = {vals[0], vals[1]};
            seen |= bit;
        };
        auto vec = [&](Eigen::VectorXd& v, unsigned bit) {
            v = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
            seen |= bit;
        };
        if (key == "c0") pair(b.c0, 1u);
        else if (key == "cp") pair(b.cp, 2u);
        else if (key == "cr") pair(b.cr, 4u);
        else if (key == "l_lo") vec(b.p_lo, 8u);
        else if (key == "l_hi") vec(b.p_hi, 16u);
        else if (key == "q_lo") vec(b.q_lo, 32u);
        else if (key == "q_hi") vec(b.q_hi, 64u);
        else throw ParseError(line, "unknown bounds key '" + std::string(key) + "'");
    }
}

}  // namespace

Trace parse_trace(std::string_view content) {
    Trace trace;
    WorldBounds declared;
    unsigned seen = 0;
    std::size_t n = 0;
    bool have_header = false;
    long last_t = 0;
    std::vector<std::size_t> row_lines;
    for (auto [ln, raw] : text::numbered_lines(content)) {
        const auto line = text::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (line.substr(0, 7) == "#bounds") parse_bounds_line(line.substr(7), ln, declared, seen);
            continue;
        }
        const auto cells = text::split(line, ',');
        if (!have_header) {
            if (cells.size() < 7 || (cells.size() - 5) % 2 != 0 || cells[0] != "t" || cells[1] != "r" ||
                cells[2] != "c0" || cells[3] != "cp" || cells[4] != "cr")
                throw ParseError(ln, "expected header t,r,c0,cp,cr,l_1..l_N,q_1..q_N");
            n = (cells.size() - 5) / 2;
            for (std::size_t i = 0; i < n; ++i) {
                if (cells[5 + i] != "l_" + std::to_string(i + 1) || cells[5 + n + i] != "q_" + std::to_string(i + 1))
                    throw ParseError(ln, "unexpected load column names in header");
            }
            have_header = true;
            continue;
        }
        if (cells.size() != 5 + 2 * n)
            throw ParseError(ln, "row has " + std::to_string(cells.size()) + " fields, expected " +
                                     std::to_string(5 + 2 * n));
        const long t = text::to_long(cells[0], ln, "t");
        if (!trace.ticks.empty() && t <= last_t) throw ParseError(ln, "period index not increasing");
        last_t = t;
        MarketTick tick;
        const long r = text::to_long(cells[1], ln, "r");
        if (r != 1 && r != -1) throw ParseError(ln, "r must be +1 or -1");
        tick.r = static_cast<int>(r);
        tick.c0 = text::to_double(cells[2], ln, "c0");
        tick.cp = text::to_double(cells[3], ln, "cp");
        tick.cr = text::to_double(cells[4], ln, "cr");
        if (tick.c0 < 0 || tick.cp < 0 || tick.cr < 0) throw ParseError(ln, "negative price");
        tick.load_p.resize(static_cast<Eigen::Index>(n));
        tick.load_q.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            tick.load_p(static_cast<Eigen::Index>(i)) = text::to_double(cells[5 + i], ln, "l");
            tick.load_q(static_cast<Eigen::Index>(i)) = text::to_double(cells[5 + n + i], ln, "q");
        }
        trace.ticks.push_back(std::move(tick));
        row_lines.push_back(ln);
    }
    if (!have_header) throw ParseError(1, "missing header row");
    if (trace.ticks.empty()) throw ParseError(1, "trace has no rows");

    trace.bounds = infer_bounds(trace.ticks);
    if (seen != 0) {
        if (seen != 127u) throw ValidationError("trace: #bounds must declare c0, cp, cr, l_lo, l_hi, q_lo, q_hi");
        if (declared.size() != n) throw ValidationError("trace: #bounds vector length differs from header");
        declared.validate();
        for (std::size_t i = 0; i < trace.ticks.size(); ++i) {
            const auto why = declared.violation(trace.ticks[i]);
            if (!why.empty())
                throw ValidationError("trace: row at line " + std::to_string(row_lines[i]) + " (t index " +
                                      std::to_string(i) + ") breaks declared bounds: " + why);
        }
        trace.bounds = declared;
        trace.declared_bounds = true;
    }
    return trace;
}

Trace load_trace(const std::filesystem::path& path) { return parse_trace(text::read_file(path)); }

std::string format_trace(const Trace& trace, bool with_bounds) {
    std::ostringstream os;
    const auto n = trace.ticks.empty() ? trace.bounds.size() : trace.ticks.front().size();
    auto list = [&](const Eigen::VectorXd& v) {
        std::string s;
        for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + text::fmt(v(i));
        return s;
    };
    if (with_bounds) {
        const auto& b = trace.bounds;
        os << "#bounds c0=" << text::fmt(b.c0.lo) << ',' << text::fmt(b.c0.hi) << " cp=" << text::fmt(b.cp.lo) << ','
           << text::fmt(b.cp.hi) << " cr=" << text::fmt(b.cr.lo) << ',' << text::fmt(b.cr.hi) << '\n';
        os << "#bounds l_lo=" << list(b.p_lo) << '\n' << "#bounds l_hi=" << list(b.p_hi) << '\n';
        os << "#bounds q_lo=" << list(b.q_lo) << '\n' << "#bounds q_hi=" << list(b.q_hi) << '\n';
    }
    os << "t,r,c0,cp,cr";
    for (std::size_t i = 1; i <= n; ++i) os << ",l_" << i;
    for (std::size_t i = 1; i <= n; ++i) os << ",q_" << i;
    os << '\n';
    for (std::size_t t = 0; t < trace.ticks.size(); ++t) {
        const auto& k = trace.ticks[t];
        os << t << ',' << k.r << ',' << text::fmt(k.c0) << ',' << text::fmt(k.cp) << ',' << text::fmt(k.cr) << ','
           << list(k.load_p) << ',' << list(k.load_q) << '\n';
    }
    return os.str();
}

}  // namespace esscoord::market
