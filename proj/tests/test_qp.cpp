#include "socmpc/qp/solver.hpp"

#include <gtest/gtest.h>

#include <random>

namespace {

using namespace socmpc;
using qp::QpProblem;
using qp::QpStatus;

QpProblem box_problem(qp::Mat P, qp::Vec q, qp::Mat Ain, qp::Vec lo, qp::Vec hi) {
    QpProblem p = QpProblem::unconstrained(std::move(P), std::move(q));
    p.Ain = std::move(Ain);
    p.bin_lo = std::move(lo);
    p.bin_hi = std::move(hi);
    return p;
}

qp::Mat random_psd(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    qp::Mat M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = u(rng);
    return M * M.transpose() + 0.1 * qp::Mat::Identity(n, n);
}

TEST(QpSolver, ActiveBound) {
    // min (x-1)^2 s.t. x >= 2  ->  x = 2
    qp::Mat P(1, 1);
    P << 2.0;
    qp::Vec q(1);
    q << -2.0;
    qp::Mat A(1, 1);
    A << 1.0;
    qp::Vec lo(1), hi(1);
    lo << 2.0;
    hi << 1e30;
    const auto sol = qp::solve(box_problem(P, q, A, lo, hi));
    ASSERT_EQ(sol.status, QpStatus::optimal);
    EXPECT_NEAR(sol.x[0], 2.0, 1e-6);
}

TEST(QpSolver, SymmetricEquality) {
    // min 0.5 x'x s.t. x1 + x2 = 2  ->  (1, 1)
    QpProblem p = QpProblem::unconstrained(qp::Mat::Identity(2, 2), qp::Vec::Zero(2));
    p.Aeq = qp::Mat::Ones(1, 2);
    p.beq = qp::Vec::Constant(1, 2.0);
    const auto sol = qp::solve(p);
    ASSERT_EQ(sol.status, QpStatus::optimal);
    EXPECT_NEAR(sol.x[0], 1.0, 1e-6);
    EXPECT_NEAR(sol.x[1], 1.0, 1e-6);
}

TEST(QpSolver, UnconstrainedGradientZero) {
    // min 0.5 x'diag(2,4)x - 2x1 - 4x2  ->  (1, 1), by setting the gradient to zero
    qp::Mat P(2, 2);
    P << 2, 0, 0, 4;
    qp::Vec q(2);
    q << -2, -4;
    const auto sol = qp::solve(QpProblem::unconstrained(P, q));
    ASSERT_EQ(sol.status, QpStatus::optimal);
    EXPECT_NEAR(sol.x[0], 1.0, 1e-8);
    EXPECT_NEAR(sol.x[1], 1.0, 1e-8);
}

TEST(QpSolver, KktResidualsOnRandomProblems) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 29);
        const int mi = 1 + static_cast<int>(rng() % n);
        const int me = static_cast<int>(rng() % 3);
        QpProblem p = QpProblem::unconstrained(random_psd(n, rng), qp::Vec::NullaryExpr(n, [&] { return u(rng); }));
        p.Ain = qp::Mat::NullaryExpr(mi, n, [&] { return u(rng); });
        // bounds around a random feasible point so the problem is feasible
        const qp::Vec x_feas = qp::Vec::NullaryExpr(n, [&] { return u(rng); });
        const qp::Vec mid = p.Ain * x_feas;
        p.bin_lo = mid.array() - 0.5;
        p.bin_hi = mid.array() + 0.5;
        if (me > 0) {
            p.Aeq = qp::Mat::NullaryExpr(me, n, [&] { return u(rng); });
            p.beq = p.Aeq * x_feas;
        }
        const auto sol = qp::solve(p, 1e-7, 50000);
        ASSERT_EQ(sol.status, QpStatus::optimal) << "trial " << trial;

        // stationarity with recovered multipliers
        qp::Vec grad = p.P * sol.x + p.q;
        if (p.Aeq.rows() > 0) grad += p.Aeq.transpose() * sol.y.head(p.Aeq.rows());
        grad += p.Ain.transpose() * sol.y.tail(mi);
        EXPECT_LT(grad.cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
        // primal feasibility
        const qp::Vec ax = p.Ain * sol.x;
        EXPECT_LT((ax - p.bin_hi).maxCoeff(), 1e-6);
        EXPECT_LT((p.bin_lo - ax).maxCoeff(), 1e-6);
        if (p.Aeq.rows() > 0) EXPECT_LT((p.Aeq * sol.x - p.beq).cwiseAbs().maxCoeff(), 1e-6);
        // complementary slackness
        for (int i = 0; i < mi; ++i) {
            const double slack = std::min(ax[i] - p.bin_lo[i], p.bin_hi[i] - ax[i]);
            EXPECT_LT(std::abs(sol.y[p.Aeq.rows() + i]) * std::max(0.0, slack - 1e-6), 1e-5);
        }
    }
}

TEST(QpSolver, ObjectiveBeatsRandomFeasiblePoints) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 29);
        QpProblem p = QpProblem::unconstrained(random_psd(n, rng), qp::Vec::NullaryExpr(n, [&] { return u(rng); }));
        p.Ain = qp::Mat::Identity(n, n);
        p.bin_lo = qp::Vec::Constant(n, -1.0);
        p.bin_hi = qp::Vec::Constant(n, 1.0);
        const auto sol = qp::solve(p);
        ASSERT_EQ(sol.status, QpStatus::optimal);
        auto objective = [&](const qp::Vec& x) { return 0.5 * x.dot(p.P * x) + p.q.dot(x); };
        for (int s = 0; s < 50; ++s) {
            const qp::Vec x = qp::Vec::NullaryExpr(n, [&] { return u(rng); });
            EXPECT_GE(objective(x) + 1e-8, sol.objective);
        }
    }
}

TEST(QpSolver, ScalingInvarianceOfArgmin) {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = 8;
    QpProblem p = QpProblem::unconstrained(random_psd(n, rng), qp::Vec::NullaryExpr(n, [&] { return u(rng); }));
    p.Ain = qp::Mat::Identity(n, n);
    p.bin_lo = qp::Vec::Constant(n, -0.5);
    p.bin_hi = qp::Vec::Constant(n, 0.5);
    const auto base = qp::solve(p);
    QpProblem scaled = p;
    scaled.P *= 37.0;
    scaled.q *= 37.0;
    const auto s = qp::solve(scaled);
    ASSERT_EQ(base.status, QpStatus::optimal);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_LT((base.x - s.x).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(QpSolver, DetectsInfeasibility) {
    // x >= 1 and x <= 0 simultaneously
    qp::Mat P(1, 1);
    P << 1.0;
    qp::Vec q(1);
    q << 0.0;
    QpProblem p = QpProblem::unconstrained(P, q);
    p.Ain = qp::Mat(2, 1);
    p.Ain << 1.0, 1.0;
    p.bin_lo.resize(2);
    p.bin_hi.resize(2);
    p.bin_lo << 1.0, -1e30;
    p.bin_hi << 1e30, 0.0;
    const auto sol = qp::solve(p, 1e-6, 50000);
    EXPECT_EQ(sol.status, QpStatus::infeasible);
}

TEST(QpSolver, RejectsAsymmetricP) {
    qp::Mat P(2, 2);
    P << 1, 0.5, 0, 1;
    EXPECT_THROW(qp::solve(QpProblem::unconstrained(P, qp::Vec::Zero(2))), std::invalid_argument);
}

TEST(QpSolver, RejectsIndefiniteP) {
    qp::Mat P(2, 2);
    P << 1, 0, 0, -1;
    EXPECT_THROW(qp::solve(QpProblem::unconstrained(P, qp::Vec::Zero(2))), std::invalid_argument);
}

TEST(QpSolver, DeterministicAcrossRuns) {
    std::mt19937_64 rng(31);
    QpProblem p = QpProblem::unconstrained(random_psd(6, rng), qp::Vec::Ones(6));
    p.Ain = qp::Mat::Identity(6, 6);
    p.bin_lo = qp::Vec::Constant(6, -0.3);
    p.bin_hi = qp::Vec::Constant(6, 0.3);
    const auto a = qp::solve(p);
    const auto b = qp::solve(p);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.iterations, b.iterations);
}

}  // namespace
