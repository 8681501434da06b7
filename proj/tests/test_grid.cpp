#include <doctest.h>

#include <cmath>

#include "esscoord/error.hpp"
#include "esscoord/grid.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace esscoord;
using namespace esscoord::grid;

TEST_CASE("parse minimal feeder") {
    const auto f = parse_feeder("v0=1.0 alpha=-0.0199 beta=0.020\n0 1 0.01 0.01\n");
    CHECK(f.bus_count() == 1);
    CHECK(f.v0() == 1.0);
    CHECK(f.band().alpha == doctest::Approx(-0.0199));
    CHECK(f.band().beta == doctest::Approx(0.020));
    CHECK(f.parent_of(0) == kSubstation);
}

TEST_CASE("parse keeps parent before child and skips comments") {
    const auto f = parse_feeder(
        "# comment\nv0=1.0 alpha=-0.02 beta=0.02\n2 3 0.01 0.01  # tail\n0 1 0.01 0.01\n1 2 0.01 0.01\n");
    REQUIRE(f.bus_count() == 3);
    std::vector<bool> seen(3, false);
    for (const auto& b : f.branches()) {
        if (b.parent != kSubstation) CHECK(seen[static_cast<std::size_t>(b.parent)]);
        seen[static_cast<std::size_t>(b.child)] = true;
    }
}

TEST_CASE("parse errors") {
    SUBCASE("cycle") {
        CHECK_THROWS_AS(parse_feeder("v0=1 alpha=-0.02 beta=0.02\n0 1 0.01 0.01\n1 2 0.01 0.01\n2 1 0.01 0.01\n"),
                        TopologyError);
    }
    SUBCASE("disconnected") {
        CHECK_THROWS_AS(parse_feeder("v0=1 alpha=-0.02 beta=0.02\n0 1 0.01 0.01\n3 2 0.01 0.01\n2 3 0.01 0.01\n"),
                        TopologyError);
    }
    SUBCASE("malformed line carries its number") {
        try {
            parse_feeder("v0=1 alpha=-0.02 beta=0.02\n0 1 0.01 0.01\n1 2 0.01\n");
            FAIL("no throw");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("non-numeric impedance") {
        try {
            parse_feeder("v0=1 alpha=-0.02 beta=0.02\n0 1 abc 0.01\n");
            FAIL("no throw");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }
    SUBCASE("nonpositive impedance") {
        CHECK_THROWS_AS(parse_feeder("v0=1 alpha=-0.02 beta=0.02\n0 1 0 0.01\n"), ValidationError);
        CHECK_THROWS_AS(parse_feeder("v0=1 alpha=-0.02 beta=0.02\n0 1 0.01 -0.01\n"), ValidationError);
    }
    SUBCASE("band must straddle zero") {
        CHECK_THROWS_AS(parse_feeder("v0=1 alpha=0.01 beta=0.02\n0 1 0.01 0.01\n"), ValidationError);
    }
    SUBCASE("missing header") { CHECK_THROWS_AS(parse_feeder("0 1 0.01 0.01\n"), ParseError); }
}

TEST_CASE("single branch sensitivities") {
    const auto f = parse_feeder("v0=1 alpha=-0.02 beta=0.02\n0 1 0.01 0.02\n");
    const auto s = build_sensitivities(f);
    CHECK(s.R(0, 0) == doctest::Approx(0.02).epsilon(1e-14));
    CHECK(s.X(0, 0) == doctest::Approx(0.04).epsilon(1e-14));
}

TEST_CASE("sensitivities match common-path sums on random trees") {
    oracle::Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = rng.integer(1, 8);
        const auto f = parse_feeder(oracle::random_feeder_text(n, rng));
        const auto s = build_sensitivities(f);
        const auto R = oracle::common_path(f, false);
        const auto X = oracle::common_path(f, true);
        CHECK((s.R - R).cwiseAbs().maxCoeff() <= 1e-12 * R.cwiseAbs().maxCoeff());
        CHECK((s.X - X).cwiseAbs().maxCoeff() <= 1e-12 * X.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("sensitivities are symmetric, positive definite and nonnegative") {
    for (const auto& f : {support::feeder12(), support::feeder33()}) {
        const auto s = build_sensitivities(f);
        CHECK((s.R - s.R.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(s.R.minCoeff() >= 0.0);
        CHECK(s.X.minCoeff() >= 0.0);
        CHECK(Eigen::LLT<Eigen::MatrixXd>(s.R).info() == Eigen::Success);
        CHECK(Eigen::LLT<Eigen::MatrixXd>(s.X).info() == Eigen::Success);
    }
}

TEST_CASE("incidence sign convention does not change R and X") {
    oracle::Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto f = parse_feeder(oracle::random_feeder_text(rng.integer(1, 10), rng));
        const auto a = build_sensitivities(f, IncidenceSign::ParentPositive);
        const auto b = build_sensitivities(f, IncidenceSign::ParentNegative);
        CHECK(incidence_matrix(f, IncidenceSign::ParentPositive) == -incidence_matrix(f, IncidenceSign::ParentNegative));
        CHECK((a.R - b.R).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK((a.X - b.X).cwiseAbs().maxCoeff() <= 1e-15);
    }
}

TEST_CASE("ldf voltages") {
    const auto f = parse_feeder("v0=1 alpha=-0.02 beta=0.02\n0 1 0.01 0.01\n");
    const auto s = build_sensitivities(f);
    const Eigen::VectorXd z = Eigen::VectorXd::Zero(1);
    CHECK(ldf_voltages(s, z, z, 1.0).v(0) == 1.0);
    const Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 0.1);
    CHECK(ldf_voltages(s, p, p, 1.0).v(0) == doctest::Approx(0.996).epsilon(1e-14));
    CHECK_THROWS_AS(ldf_voltages(s, Eigen::VectorXd::Zero(2), z, 1.0), ValidationError);
}

TEST_CASE("ldf voltages are monotone in each injection") {
    const auto f = support::feeder12();
    const auto s = build_sensitivities(f);
    const auto n = static_cast<Eigen::Index>(f.bus_count());
    oracle::Rng rng(3);
    Eigen::VectorXd p(n), q(n);
    for (Eigen::Index i = 0; i < n; ++i) p(i) = rng.uniform(0, 0.05), q(i) = rng.uniform(0, 0.02);
    const auto base = ldf_voltages(s, p, q, 1.0).v;
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::VectorXd p2 = p;
        p2(k) += 0.01;
        const auto v = ldf_voltages(s, p2, q, 1.0).v;
        CHECK((v.array() <= base.array()).all());
    }
}

TEST_CASE("voltage margins") {
    const auto f = support::feeder12();
    const auto s = build_sensitivities(f);
    const auto n = static_cast<Eigen::Index>(f.bus_count());
    const Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    const auto m = voltage_margins(s, z, z, f.band());
    CHECK(m.lower.isApproxToConstant(-f.band().alpha));
    CHECK(m.upper.isApproxToConstant(f.band().beta));
    CHECK(m.feasible());
}

TEST_CASE("bisection on a chain flags the deepest bus first") {
    const auto f = parse_feeder(oracle::chain_feeder_text(3, 0.004, 0.006));
    const auto s = build_sensitivities(f);
    const Eigen::VectorXd p = Eigen::Vector3d(0.05, 0.03, 0.04);
    const Eigen::VectorXd q = 0.5 * p;
    double lo = 0.0, hi = 100.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (voltage_margins(s, mid * p, mid * q, f.band()).feasible() ? lo : hi) = mid;
    }
    const auto m = voltage_margins(s, hi * p, hi * q, f.band());
    Eigen::Index worst = 0;
    m.lower.minCoeff(&worst);
    CHECK(worst == 2);
    CHECK(m.lower(2) < 0.0);
    CHECK(m.lower(0) > 0.0);
    CHECK(m.lower(1) > 0.0);
}

TEST_CASE("base load feasibility") {
    const auto f = support::feeder33();
    const auto s = build_sensitivities(f);
    const auto n = static_cast<Eigen::Index>(f.bus_count());
    const Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 0.05);
    CHECK(base_loads_feasible(s, p, 0.484 * p, f.band()));
    CHECK_FALSE(base_loads_feasible(s, 3.0 * p, 1.452 * p, f.band()));
}

TEST_CASE("ac sweep with no load") {
    const auto f = support::feeder12();
    const auto n = static_cast<Eigen::Index>(f.bus_count());
    const auto sol = ac_sweep(f, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n));
    CHECK((sol.voltage.v.array() - f.v0()).abs().maxCoeff() <= 1e-15);
    CHECK(sol.branch_currents.cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("ac sweep matches the two-node closed form") {
    const auto f = parse_feeder("v0=1.0 alpha=-0.02 beta=0.02\n0 1 0.02 0.03\n");
    for (double p : {0.01, 0.05, 0.2, 1.0}) {
        const double q = 0.4 * p;
        const auto sol = ac_sweep(f, Eigen::VectorXd::Constant(1, p), Eigen::VectorXd::Constant(1, q));
        CHECK(sol.voltage.v(0) == doctest::Approx(oracle::two_node_voltage(1.0, 0.02, 0.03, p, q)).epsilon(1e-11));
    }
}

TEST_CASE("ac sweep residual and linearization error on shipped feeders") {
    oracle::Rng rng(8);
    for (const auto& f : {support::feeder12(), support::feeder33()}) {
        const auto s = build_sensitivities(f);
        const auto n = static_cast<Eigen::Index>(f.bus_count());
        for (int trial = 0; trial < 50; ++trial) {
            Eigen::VectorXd p(n), q(n);
            for (Eigen::Index i = 0; i < n; ++i) p(i) = rng.uniform(-0.1, 0.1), q(i) = rng.uniform(-0.1, 0.1);
            const auto sol = ac_sweep(f, p, q);
            CHECK(branch_flow_residual(f, sol, p, q) <= 1e-10);
            const auto ldf = ldf_voltages(s, p, q, f.v0());
            const double err = (ldf.v.array().sqrt() - sol.voltage.v.array().sqrt()).abs().maxCoeff();
            CHECK(err < 0.005);
        }
    }
}

TEST_CASE("ac sweep diverges on an overloaded feeder") {
    const auto f = parse_feeder("v0=1.0 alpha=-0.02 beta=0.02\n0 1 0.5 0.5\n");
    CHECK_THROWS_AS(ac_sweep(f, Eigen::VectorXd::Constant(1, 5.0), Eigen::VectorXd::Constant(1, 5.0)),
                    DivergenceError);
}
