#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace gmr;

namespace {

/// Exhaustive oracle: tries every assignment of {free, lower, upper} to the
/// coordinates, solves the free block exactly, and keeps the feasible
/// candidate with the lowest objective.
Eigen::VectorXd enumerate_box_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi) {
    const Eigen::Index n = g.size();
    int total = 1;
    for (Eigen::Index i = 0; i < n; ++i) total *= 3;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x;
    for (int code = 0; code < total; ++code) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        std::vector<Eigen::Index> free;
        int c = code;
        bool ok = true;
        for (Eigen::Index i = 0; i < n; ++i, c /= 3) {
            const int s = c % 3;
            if (s == 0) free.push_back(i);
            if (s == 1) ok = ok && std::isfinite(lo(i)), x(i) = lo(i);
            if (s == 2) ok = ok && std::isfinite(hi(i)), x(i) = hi(i);
        }
        if (!ok) continue;
        const auto nf = static_cast<Eigen::Index>(free.size());
        if (nf > 0) {
            Eigen::MatrixXd hff(nf, nf);
            Eigen::VectorXd rhs(nf);
            for (Eigen::Index a = 0; a < nf; ++a) {
                rhs(a) = -g(free[a]);
                for (Eigen::Index b = 0; b < n; ++b) {
                    if (std::find(free.begin(), free.end(), b) == free.end()) rhs(a) -= h(free[a], b) * x(b);
                }
                for (Eigen::Index b = 0; b < nf; ++b) hff(a, b) = h(free[a], free[b]);
            }
            const Eigen::VectorXd y = hff.fullPivLu().solve(rhs);
            for (Eigen::Index a = 0; a < nf; ++a) x(free[a]) = y(a);
        }
        if (((x - lo).array() < -1e-12).any() || ((hi - x).array() < -1e-12).any()) continue;
        const double f = 0.5 * x.dot(h * x) + g.dot(x);
        if (f < best) {
            best = f;
            best_x = x;
        }
    }
    return best_x;
}

Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n, double min_eig) {
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = gmr::testing::uniform(rng, -1, 1);
    }
    return a.transpose() * a + min_eig * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

TEST(BoxQp, UnconstrainedMatchesLinearSolve) {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 100; ++t) {
        const Eigen::Index n = std::uniform_int_distribution<int>(1, 10)(rng);
        const Eigen::MatrixXd h = random_spd(rng, n, 0.1);
        Eigen::VectorXd g(n);
        for (Eigen::Index i = 0; i < n; ++i) g(i) = gmr::testing::uniform(rng, -1, 1);
        const Eigen::VectorXd inf = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
        const BoxQpResult r = solve_box_qp(h, g, -inf, inf);
        EXPECT_TRUE(r.converged);
        EXPECT_LT((r.x - h.llt().solve(-g)).norm(), 1e-10);
    }
}

TEST(BoxQp, MatchesEnumerationOracle) {
    std::mt19937_64 rng(32);
    for (int t = 0; t < 300; ++t) {
        const Eigen::Index n = std::uniform_int_distribution<int>(1, 7)(rng);
        const Eigen::MatrixXd h = random_spd(rng, n, 0.05);
        Eigen::VectorXd g(n), lo(n), hi(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            g(i) = gmr::testing::uniform(rng, -3, 3);
            lo(i) = gmr::testing::uniform(rng, -1, 0.2);
            hi(i) = lo(i) + gmr::testing::uniform(rng, 0.0, 1.0);
            if (gmr::testing::uniform(rng, 0, 1) < 0.15) lo(i) = -std::numeric_limits<double>::infinity();
            if (gmr::testing::uniform(rng, 0, 1) < 0.15) hi(i) = std::numeric_limits<double>::infinity();
        }
        const BoxQpResult r = solve_box_qp(h, g, lo, hi);
        ASSERT_TRUE(r.converged);
        const Eigen::VectorXd oracle = enumerate_box_qp(h, g, lo, hi);
        EXPECT_LT((r.x - oracle).norm(), 1e-9) << "instance " << t;
        EXPECT_LT(box_qp_kkt_residual(h, g, lo, hi, r.x), 1e-9);
        EXPECT_TRUE(((r.x - lo).array() >= 0).all());
        EXPECT_TRUE(((hi - r.x).array() >= 0).all());
    }
}

TEST(BoxQp, BindingBoundIsExact) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::VectorXd g = Eigen::Vector2d(-5, 1);
    const Eigen::VectorXd lo = Eigen::Vector2d(-1, -1);
    const Eigen::VectorXd hi = Eigen::Vector2d(0.75, 1);
    const BoxQpResult r = solve_box_qp(h, g, lo, hi);
    EXPECT_EQ(r.x(0), 0.75);
    EXPECT_NEAR(r.x(1), -1.0, 0.0);
}

TEST(BoxQp, DegenerateIntervalPinsCoordinate) {
    const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::VectorXd g = Eigen::Vector2d(1, 1);
    const Eigen::VectorXd lo = Eigen::Vector2d(0.5, -10);
    const Eigen::VectorXd hi = Eigen::Vector2d(0.5, 10);
    const BoxQpResult r = solve_box_qp(h, g, lo, hi);
    EXPECT_EQ(r.x(0), 0.5);
    EXPECT_NEAR(r.x(1), -1.0, 1e-15);
}

TEST(BoxQp, EmptyProblem) {
    const BoxQpResult r = solve_box_qp(Eigen::MatrixXd(0, 0), Eigen::VectorXd(0), Eigen::VectorXd(0), Eigen::VectorXd(0));
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.x.size(), 0);
}

TEST(BoxQp, Deterministic) {
    std::mt19937_64 rng(33);
    const Eigen::MatrixXd h = random_spd(rng, 8, 0.01);
    Eigen::VectorXd g(8), lo(8), hi(8);
    for (int i = 0; i < 8; ++i) {
        g(i) = gmr::testing::uniform(rng, -3, 3);
        lo(i) = -0.3;
        hi(i) = 0.4;
    }
    const BoxQpResult a = solve_box_qp(h, g, lo, hi);
    const BoxQpResult b = solve_box_qp(h, g, lo, hi);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(BoxQp, IterationBudgetReported) {
    std::mt19937_64 rng(34);
    const Eigen::MatrixXd h = random_spd(rng, 6, 0.01);
    Eigen::VectorXd g = Eigen::VectorXd::Constant(6, 5.0);
    const Eigen::VectorXd lo = Eigen::VectorXd::Constant(6, -0.1);
    const Eigen::VectorXd hi = Eigen::VectorXd::Constant(6, 0.1);
    BoxQpOptions o;
    o.max_iterations = 1;
    const BoxQpResult r = solve_box_qp(h, g, lo, hi, o);
    if (!r.converged) {
        EXPECT_GT(r.kkt_residual, 0.0);
        EXPECT_EQ(r.iterations, 1);
    }
}
