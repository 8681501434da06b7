#include <doctest.h>

#include <limits>

#include "esscoord/qp.hpp"
#include "oracles.hpp"

using namespace esscoord;

namespace {

// Tries every active set; the feasible KKT point with nonnegative
// multipliers is the unique minimizer.
Eigen::VectorXd enumerate_active_sets(const qp::Problem& p) {
    const auto n = p.G.rows();
    const auto m = p.C.cols();
    Eigen::VectorXd best;
    double best_f = std::numeric_limits<double>::infinity();
    for (long mask = 0; mask < (1L << m); ++mask) {
        std::vector<Eigen::Index> act;
        for (Eigen::Index j = 0; j < m; ++j)
            if (mask & (1L << j)) act.push_back(j);
        const auto k = static_cast<Eigen::Index>(act.size());
        if (k > n) continue;
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
        Eigen::VectorXd rhs(n + k);
        K.topLeftCorner(n, n) = p.G;
        rhs.head(n) = -p.g;
        for (Eigen::Index a = 0; a < k; ++a) {
            K.block(0, n + a, n, 1) = -p.C.col(act[a]);
            K.block(n + a, 0, 1, n) = p.C.col(act[a]).transpose();
            rhs(n + a) = -p.d(act[a]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
        if (lu.rank() < n + k) continue;
        const Eigen::VectorXd z = lu.solve(rhs);
        const Eigen::VectorXd x = z.head(n);
        if ((z.tail(k).array() < -1e-10).any()) continue;
        if (((p.C.transpose() * x + p.d).array() < -1e-10).any()) continue;
        const double f = 0.5 * x.dot(p.G * x) + p.g.dot(x);
        if (f < best_f) best_f = f, best = x;
    }
    return best;
}

qp::Problem random_qp(oracle::Rng& rng, int n, int m) {
    qp::Problem p;
    Eigen::MatrixXd B(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) B(i, j) = rng.uniform(-1, 1);
    p.G = B * B.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    p.g.resize(n);
    for (int i = 0; i < n; ++i) p.g(i) = rng.uniform(-3, 3);
    p.C.resize(n, m);
    p.d.resize(m);
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < n; ++i) p.C(i, j) = rng.uniform(-1, 1);
        p.d(j) = rng.uniform(0.0, 1.0);  // x = 0 is feasible
    }
    return p;
}

}  // namespace

TEST_CASE("unconstrained minimizer") {
    qp::Problem p;
    p.G = Eigen::Matrix2d{{2, 0.5}, {0.5, 1}};
    p.g = Eigen::Vector2d(1, -1);
    p.C.resize(2, 0);
    p.d.resize(0);
    const auto s = qp::solve(p);
    REQUIRE(s.status == qp::Status::Optimal);
    const Eigen::VectorXd x = p.G.llt().solve(-p.g);
    CHECK((s.x - x).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("one-dimensional bounds") {
    qp::Problem p;
    p.G = Eigen::MatrixXd::Constant(1, 1, 2.0);
    p.g = Eigen::VectorXd::Constant(1, -10.0);  // free minimizer 5
    p.C = Eigen::RowVector2d(1, -1);
    p.d = Eigen::Vector2d(0.0, 1.0);  // 0 <= x <= 1
    const auto s = qp::solve(p);
    REQUIRE(s.status == qp::Status::Optimal);
    CHECK(s.x(0) == doctest::Approx(1.0));
    CHECK(s.multipliers(1) == doctest::Approx(8.0));
    CHECK(s.multipliers(0) == 0.0);
    CHECK(s.active == std::vector<int>{1});
}

TEST_CASE("infeasible constraints are reported") {
    qp::Problem p;
    p.G = Eigen::MatrixXd::Identity(1, 1);
    p.g = Eigen::VectorXd::Zero(1);
    p.C = Eigen::RowVector2d(1, -1);
    p.d = Eigen::Vector2d(-1.0, 0.0);  // x >= 1 and x <= 0
    CHECK(qp::solve(p).status == qp::Status::Infeasible);
}

TEST_CASE("matches active-set enumeration on random problems") {
    oracle::Rng rng(13);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = rng.integer(1, 4);
        const int m = rng.integer(0, 8);
        const auto p = random_qp(rng, n, m);
        const auto s = qp::solve(p);
        REQUIRE(s.status == qp::Status::Optimal);
        const auto ref = enumerate_active_sets(p);
        REQUIRE(ref.size() == n);
        CHECK((s.x - ref).cwiseAbs().maxCoeff() <= 1e-8);
        const auto k = qp::kkt(p, s);
        CHECK(k.worst() <= 1e-9);
        CHECK(s.objective == doctest::Approx(0.5 * s.x.dot(p.G * s.x) + p.g.dot(s.x)).epsilon(1e-12));
    }
}

TEST_CASE("badly scaled constraint columns") {
    oracle::Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        auto p = random_qp(rng, 3, 6);
        for (Eigen::Index j = 0; j < p.C.cols(); ++j) {
            const double s = std::pow(10.0, rng.uniform(-4, 4));
            p.C.col(j) *= s;
            p.d(j) *= s;
        }
        const auto s = qp::solve(p);
        REQUIRE(s.status == qp::Status::Optimal);
        CHECK((s.x - enumerate_active_sets(p)).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("kkt report flags a wrong point") {
    qp::Problem p;
    p.G = Eigen::MatrixXd::Identity(2, 2);
    p.g = Eigen::Vector2d(-1, -1);
    p.C = Eigen::MatrixXd::Identity(2, 2);
    p.d = Eigen::Vector2d::Zero();
    qp::Solution s;
    s.x = Eigen::Vector2d(-0.5, 1.0);
    s.multipliers = Eigen::Vector2d(-0.2, 0.0);
    const auto k = qp::kkt(p, s);
    CHECK(k.primal == doctest::Approx(0.5));
    CHECK(k.dual == doctest::Approx(0.2));
    CHECK(k.stationarity > 0.0);
}
