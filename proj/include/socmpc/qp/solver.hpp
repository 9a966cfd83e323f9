#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace socmpc::qp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Convex QP:  min 1/2 x'Px + q'x
///             s.t. Aeq x = beq,  lo <= Ain x <= hi.
struct QpProblem {
    Mat P;
    Vec q;
    Mat Aeq;
    Vec beq;
    Mat Ain;
    Vec bin_lo;
    Vec bin_hi;

    int dim() const { return static_cast<int>(q.size()); }

    static QpProblem unconstrained(Mat P, Vec q) {
        QpProblem p;
        p.P = std::move(P);
        p.q = std::move(q);
        const int n = p.dim();
        p.Aeq = Mat::Zero(0, n);
        p.beq = Vec::Zero(0);
        p.Ain = Mat::Zero(0, n);
        p.bin_lo = Vec::Zero(0);
        p.bin_hi = Vec::Zero(0);
        return p;
    }
};

enum class QpStatus { optimal, max_iter, infeasible };

inline const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::optimal: return "optimal";
        case QpStatus::max_iter: return "max_iter";
        case QpStatus::infeasible: return "infeasible";
    }
    return "?";
}

struct QpSolution {
    Vec x;
    Vec y;  ///< multipliers, stacked [eq; ineq]
    QpStatus status = QpStatus::max_iter;
    double primal_residual = std::numeric_limits<double>::infinity();
    double dual_residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    double objective = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void validate(const QpProblem& p) {
    const int n = p.dim();
    if (p.P.rows() != n || p.P.cols() != n) throw std::invalid_argument("qp: P must be n x n");
    if ((p.P - p.P.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("qp: P must be symmetric");
    if (p.Aeq.cols() != n || p.Ain.cols() != n) throw std::invalid_argument("qp: constraint column mismatch");
    if (p.Aeq.rows() != p.beq.size()) throw std::invalid_argument("qp: Aeq/beq row mismatch");
    if (p.Ain.rows() != p.bin_lo.size() || p.Ain.rows() != p.bin_hi.size())
        throw std::invalid_argument("qp: Ain/bounds row mismatch");
    // PSD check by factorization with a diagonal-shift fallback.
    Eigen::LDLT<Mat> ldlt(p.P);
    const double dmax = p.P.rows() > 0 ? std::max(1.0, p.P.cwiseAbs().maxCoeff()) : 1.0;
    if (ldlt.info() != Eigen::Success || (p.P.rows() > 0 && ldlt.vectorD().minCoeff() < -1e-8 * dmax)) {
        Eigen::LDLT<Mat> shifted(p.P + 1e-10 * dmax * Mat::Identity(n, n));
        if (shifted.info() != Eigen::Success || shifted.vectorD().minCoeff() < -1e-8 * dmax)
            throw std::invalid_argument("qp: P is not positive semidefinite");
    }
}

/// Equality-constrained solve on the identified active set, to push the
/// iterate to tight KKT residuals.
inline bool polish(const QpProblem& p, const Mat& A, const Vec& lo, const Vec& hi, const Vec& z, const Vec& y,
                   double tol, Vec& x_out, Vec& y_out) {
    const int n = p.dim();
    const int me = static_cast<int>(p.beq.size());
    std::vector<int> active;
    std::vector<double> rhs_act;
    for (int i = 0; i < A.rows(); ++i) {
        const bool is_eq = i < me;
        const bool at_lo = z[i] - lo[i] < tol * 10 || y[i] < -tol;
        const bool at_hi = hi[i] - z[i] < tol * 10 || y[i] > tol;
        if (is_eq) {
            active.push_back(i);
            rhs_act.push_back(lo[i]);
        } else if (at_lo && !at_hi) {
            active.push_back(i);
            rhs_act.push_back(lo[i]);
        } else if (at_hi && !at_lo) {
            active.push_back(i);
            rhs_act.push_back(hi[i]);
        } else if (at_lo && at_hi) {
            active.push_back(i);
            rhs_act.push_back(std::abs(z[i] - lo[i]) < std::abs(hi[i] - z[i]) ? lo[i] : hi[i]);
        }
    }
    const int ma = static_cast<int>(active.size());
    Mat K = Mat::Zero(n + ma, n + ma);
    K.topLeftCorner(n, n) = p.P + 1e-11 * Mat::Identity(n, n);
    for (int r = 0; r < ma; ++r) {
        K.block(n + r, 0, 1, n) = A.row(active[r]);
        K.block(0, n + r, n, 1) = A.row(active[r]).transpose();
        K(n + r, n + r) = -1e-11;
    }
    Vec rhs(n + ma);
    rhs.head(n) = -p.q;
    for (int r = 0; r < ma; ++r) rhs[n + r] = rhs_act[r];
    Eigen::PartialPivLU<Mat> lu(K);
    Vec sol = lu.solve(rhs);
    // one step of iterative refinement
    sol += lu.solve(rhs - K * sol);
    if (!sol.allFinite()) return false;
    Vec x = sol.head(n);
    Vec y_full = Vec::Zero(A.rows());
    for (int r = 0; r < ma; ++r) y_full[active[r]] = sol[n + r];
    // accept only if the polished point is feasible and dual-sign consistent
    const Vec Ax = A * x;
    for (int i = 0; i < A.rows(); ++i) {
        if (Ax[i] < lo[i] - tol * 10 || Ax[i] > hi[i] + tol * 10) return false;
        if (i >= me) {
            const bool lower = std::abs(Ax[i] - lo[i]) < std::abs(hi[i] - Ax[i]);
            if (y_full[i] != 0.0 && ((lower && y_full[i] > tol) || (!lower && y_full[i] < -tol))) return false;
        }
    }
    x_out = x;
    y_out = y_full;
    return true;
}

}  // namespace detail

/// ADMM with adaptive penalty. Equality rows are handled as two-sided
/// constraints with lo == hi and a stiffer penalty, the usual operator-
/// splitting treatment. Deterministic for fixed inputs.
inline QpSolution solve(const QpProblem& p, double tol = 1e-6, int max_iter = 20000, const Vec* x0 = nullptr) {
    detail::validate(p);
    const int n = p.dim();
    const int me = static_cast<int>(p.beq.size());
    const int mi = static_cast<int>(p.bin_lo.size());
    const int m = me + mi;

    Mat A(m, n);
    Vec lo(m), hi(m);
    if (me > 0) {
        A.topRows(me) = p.Aeq;
        lo.head(me) = p.beq;
        hi.head(me) = p.beq;
    }
    if (mi > 0) {
        A.bottomRows(mi) = p.Ain;
        lo.tail(mi) = p.bin_lo;
        hi.tail(mi) = p.bin_hi;
    }

    QpSolution sol;
    sol.x = x0 ? *x0 : Vec::Zero(n);

    if (m == 0) {
        Eigen::LDLT<Mat> ldlt(p.P + 1e-12 * Mat::Identity(n, n));
        sol.x = ldlt.solve(-p.q);
        sol.y = Vec::Zero(0);
        sol.status = QpStatus::optimal;
        sol.primal_residual = 0.0;
        sol.dual_residual = (p.P * sol.x + p.q).cwiseAbs().maxCoeff();
        sol.objective = 0.5 * sol.x.dot(p.P * sol.x) + p.q.dot(sol.x);
        return sol;
    }

    const double sigma = 1e-6;
    const double alpha = 1.6;
    double rho = 0.1;
    auto rho_vec = [&](double r) {
        Vec rv = Vec::Constant(m, r);
        rv.head(me).setConstant(r * 1e3);  // stiffer penalty on equalities
        return rv;
    };
    Vec rhov = rho_vec(rho);

    Mat AtRA = A.transpose() * rhov.asDiagonal() * A;
    Eigen::LDLT<Mat> kkt(p.P + sigma * Mat::Identity(n, n) + AtRA);

    Vec x = sol.x;
    Vec z = (A * x).cwiseMax(lo).cwiseMin(hi);
    Vec y = Vec::Zero(m);
    Vec y_prev = y, x_prev = x;

    double rp = 0.0, rd = 0.0;
    int it = 0;
    for (it = 1; it <= max_iter; ++it) {
        x_prev = x;
        y_prev = y;
        const Vec rhs = sigma * x - p.q + A.transpose() * (rhov.cwiseProduct(z) - y);
        const Vec x_tilde = kkt.solve(rhs);
        const Vec z_tilde = A * x_tilde;
        x = alpha * x_tilde + (1.0 - alpha) * x;
        const Vec z_relaxed = alpha * z_tilde + (1.0 - alpha) * z;
        const Vec z_new = (z_relaxed + y.cwiseQuotient(rhov)).cwiseMax(lo).cwiseMin(hi);
        y = y + rhov.cwiseProduct(z_relaxed - z_new);
        z = z_new;

        if (it % 10 == 0 || it == max_iter) {
            const Vec Ax = A * x;
            const Vec Px = p.P * x;
            const Vec Aty = A.transpose() * y;
            rp = (Ax - z).cwiseAbs().maxCoeff();
            rd = (Px + p.q + Aty).cwiseAbs().maxCoeff();
            const double eps_p =
                tol + tol * std::max(Ax.cwiseAbs().maxCoeff(), z.size() ? z.cwiseAbs().maxCoeff() : 0.0);
            const double eps_d = tol + tol * std::max({Px.cwiseAbs().maxCoeff(), p.q.cwiseAbs().maxCoeff(),
                                                       Aty.cwiseAbs().maxCoeff()});
            if (rp < eps_p && rd < eps_d) {
                sol.status = QpStatus::optimal;
                break;
            }
            // primal infeasibility certificate
            const Vec dy = y - y_prev;
            const double dy_norm = dy.cwiseAbs().maxCoeff();
            if (dy_norm > 1e-12) {
                const Vec dyn = dy / dy_norm;
                double support = 0.0;
                for (int i = 0; i < m; ++i)
                    support += dyn[i] > 0 ? hi[i] * dyn[i] : lo[i] * dyn[i];
                if ((A.transpose() * dyn).cwiseAbs().maxCoeff() < tol * 1e-2 && support < -tol * 1e-2) {
                    sol.status = QpStatus::infeasible;
                    break;
                }
            }
            // dual infeasibility certificate (unbounded direction)
            const Vec dx = x - x_prev;
            const double dx_norm = dx.cwiseAbs().maxCoeff();
            if (dx_norm > 1e-12) {
                const Vec dxn = dx / dx_norm;
                const Vec Adx = A * dxn;
                bool dir_ok = (p.P * dxn).cwiseAbs().maxCoeff() < tol * 1e-2 && p.q.dot(dxn) < -tol * 1e-2;
                for (int i = 0; dir_ok && i < m; ++i) {
                    if (std::isfinite(hi[i]) && Adx[i] > tol * 1e-2) dir_ok = false;
                    if (std::isfinite(lo[i]) && Adx[i] < -tol * 1e-2) dir_ok = false;
                }
                if (dir_ok) {
                    sol.status = QpStatus::infeasible;
                    break;
                }
            }
            // adaptive penalty
            if (it % 100 == 0) {
                const double ratio = std::sqrt((rp / (eps_p + 1e-30)) / (rd / (eps_d + 1e-30) + 1e-30));
                if (ratio > 5.0 || ratio < 0.2) {
                    rho = std::clamp(rho * ratio, 1e-6, 1e6);
                    rhov = rho_vec(rho);
                    AtRA = A.transpose() * rhov.asDiagonal() * A;
                    kkt.compute(p.P + sigma * Mat::Identity(n, n) + AtRA);
                }
            }
        }
    }
    sol.iterations = std::min(it, max_iter);
    sol.x = x;
    sol.y = y;
    sol.primal_residual = rp;
    sol.dual_residual = rd;

    if (sol.status == QpStatus::optimal) {
        Vec xp, yp;
        if (detail::polish(p, A, lo, hi, A * x, y, tol, xp, yp)) {
            const double rp_p = ((A * xp - (A * xp).cwiseMax(lo).cwiseMin(hi)).cwiseAbs()).maxCoeff();
            const double rd_p = (p.P * xp + p.q + A.transpose() * yp).cwiseAbs().maxCoeff();
            if (rp_p <= std::max(sol.primal_residual, tol) && rd_p <= std::max(sol.dual_residual, tol)) {
                sol.x = xp;
                sol.y = yp;
                sol.primal_residual = rp_p;
                sol.dual_residual = rd_p;
            }
        }
    }
    sol.objective = 0.5 * sol.x.dot(p.P * sol.x) + p.q.dot(sol.x);
    return sol;
}

}  // namespace socmpc::qp
