#pragma once

#include "socmpc/kinematics.hpp"

#include <string>
#include <vector>

namespace socmpc {

/// Data-driven off-diagonal blocks for one timestep, indexed by ordered
/// vehicle pair (row, col) with 0 = ego and 1..n = surrounding slots.
/// C blocks are 4x4, B blocks 4x2; the diagonal is unused.
struct LearnedBlocks {
    int n = 0;
    std::vector<Eigen::MatrixXd> C;
    std::vector<Eigen::MatrixXd> B;

    LearnedBlocks() = default;
    explicit LearnedBlocks(int n_surr)
        : n(n_surr),
          C((n_surr + 1) * (n_surr + 1), Eigen::MatrixXd::Zero(4, 4)),
          B((n_surr + 1) * (n_surr + 1), Eigen::MatrixXd::Zero(4, 2)) {}

    int idx(int row, int col) const { return row * (n + 1) + col; }
    Eigen::MatrixXd& c_block(int row, int col) { return C[idx(row, col)]; }
    Eigen::MatrixXd& b_block(int row, int col) { return B[idx(row, col)]; }
    const Eigen::MatrixXd& c_block(int row, int col) const { return C[idx(row, col)]; }
    const Eigen::MatrixXd& b_block(int row, int col) const { return B[idx(row, col)]; }
};

/// Per-timestep block matrices of the coupled interaction dynamics
///     X_{t+1} = (A dt + I) X_t + B_ego dt U_ego + B_surr dt U_surr + C dt (X_t - X_{t-1}).
/// Physics sits on the block diagonals, learned interaction off-diagonal.
struct InteractionMatrices {
    int n = 0;
    Mat A;       // 4(n+1) x 4(n+1), block diagonal
    Mat B_ego;   // 4(n+1) x 2(n+1), first block column only
    Mat B_surr;  // 4(n+1) x 2(n+1), block column 0 zero
    Mat C;       // 4(n+1) x 4(n+1), zero diagonal blocks

    explicit InteractionMatrices(int n_surr = 0)
        : n(n_surr),
          A(Mat::Zero(4 * (n_surr + 1), 4 * (n_surr + 1))),
          B_ego(Mat::Zero(4 * (n_surr + 1), 2 * (n_surr + 1))),
          B_surr(Mat::Zero(4 * (n_surr + 1), 2 * (n_surr + 1))),
          C(Mat::Zero(4 * (n_surr + 1), 4 * (n_surr + 1))) {}
};

/// Horizon-stacked form of the same dynamics. The decision-facing control
/// matrices keep only the columns that can be nonzero: ego controls for
/// B_ego_bar (2 per step) and surrounding controls for B_surr_bar (2n per step).
struct StackedDynamics {
    int n = 0;
    int N = 0;
    double dt = 0.0;
    Mat A_bar;       // (N+1)D x (N+1)D, D = 4(n+1); sub-diagonal blocks (A_k dt + I)
    Mat C_bar;       // (N+1)D x (N+1)D; +-C dt pattern, first-step term folded into D_bar
    Mat B_ego_bar;   // (N+1)D x 2N
    Mat B_surr_bar;  // (N+1)D x 2nN
    Vec D_bar;       // (N+1)D

    int state_dim() const { return 4 * (n + 1); }
    int stacked_dim() const { return (N + 1) * state_dim(); }
};

/// Builds the per-timestep matrices: diagonal physics blocks from
/// linearize() at every present vehicle's current speed, learned blocks in
/// the off-diagonal positions, zero blocks for masked vehicles.
inline InteractionMatrices assemble_step(const SystemState& states, const std::vector<VehicleParams>& params,
                                         const LearnedBlocks& learned) {
    const int n = states.n_surr();
    if (static_cast<int>(params.size()) != n + 1)
        throw std::invalid_argument("assemble_step: need one VehicleParams per vehicle (ego + n)");
    if (learned.n != n) throw std::invalid_argument("assemble_step: learned block grid sized for wrong n");

    auto is_present = [&](int vehicle) { return vehicle == 0 || states.present[vehicle - 1]; };
    auto speed_of = [&](int vehicle) { return vehicle == 0 ? states.ego.v : states.surr[vehicle - 1].v; };

    InteractionMatrices m(n);
    for (int i = 0; i <= n; ++i) {
        if (!is_present(i)) continue;
        const LinearizedVehicle lin = linearize(speed_of(i), params[i]);
        m.A.block<4, 4>(4 * i, 4 * i) = lin.A;
        if (i == 0)
            m.B_ego.block<4, 2>(0, 0) = lin.B;
        else
            m.B_surr.block<4, 2>(4 * i, 2 * i) = lin.B;
    }
    for (int row = 0; row <= n; ++row) {
        for (int col = 0; col <= n; ++col) {
            if (row == col || !is_present(row) || !is_present(col)) continue;
            const Eigen::MatrixXd& cb = learned.c_block(row, col);
            const Eigen::MatrixXd& bb = learned.b_block(row, col);
            auto pair_name = [&] {
                auto nm = [](int v) { return v == 0 ? std::string("ego") : "surr" + std::to_string(v); };
                return "(" + nm(row) + "," + nm(col) + ")";
            };
            if (cb.rows() != 4 || cb.cols() != 4)
                throw std::invalid_argument("assemble_step: C block dimension mismatch at pair " + pair_name());
            if (bb.rows() != 4 || bb.cols() != 2)
                throw std::invalid_argument("assemble_step: B block dimension mismatch at pair " + pair_name());
            m.C.block<4, 4>(4 * row, 4 * col) = cb;
            if (col == 0)
                m.B_ego.block<4, 2>(4 * row, 0) = bb;
            else
                m.B_surr.block<4, 2>(4 * row, 2 * col) = bb;
        }
    }
    return m;
}

/// One step of the coupled dynamics.
inline SystemState step(const SystemState& X_t, const SystemState& X_prev, const InteractionMatrices& m,
                        const SystemControl& u_ego, const SystemControl& u_surr, double dt) {
    const Vec x = X_t.flatten();
    const Vec xp = X_prev.flatten();
    Vec ue = Vec::Zero(m.B_ego.cols());
    ue.segment<2>(0) = u_ego.ego.vec();
    Vec us = u_surr.flatten();
    us.segment<2>(0).setZero();
    const Vec next = (m.A * dt + Mat::Identity(x.size(), x.size())) * x + m.B_ego * dt * ue +
                     m.B_surr * dt * us + m.C * dt * (x - xp);
    return SystemState::unflatten(next, X_t.present);
}

/// Stacks N per-step matrices into the horizon form. The step-0 difference
/// term C_0 dt (X_t - X_prev) lands in D_bar's second block because X_prev
/// is measured data, not a decision variable.
inline StackedDynamics stack_horizon(const std::vector<InteractionMatrices>& seq, const SystemState& X_t,
                                     const SystemState& X_prev, double dt) {
    if (seq.empty()) throw std::invalid_argument("stack_horizon: empty sequence");
    const int n = seq.front().n;
    const int N = static_cast<int>(seq.size());
    const int D = 4 * (n + 1);

    StackedDynamics sd;
    sd.n = n;
    sd.N = N;
    sd.dt = dt;
    sd.A_bar = Mat::Zero((N + 1) * D, (N + 1) * D);
    sd.C_bar = Mat::Zero((N + 1) * D, (N + 1) * D);
    sd.B_ego_bar = Mat::Zero((N + 1) * D, 2 * N);
    sd.B_surr_bar = Mat::Zero((N + 1) * D, 2 * n * N);
    sd.D_bar = Vec::Zero((N + 1) * D);

    for (int k = 0; k < N; ++k) {
        const InteractionMatrices& m = seq[k];
        if (m.n != n) throw std::invalid_argument("stack_horizon: inconsistent n across the sequence");
        sd.A_bar.block((k + 1) * D, k * D, D, D) = m.A * dt + Mat::Identity(D, D);
        if (k >= 1) {
            sd.C_bar.block((k + 1) * D, k * D, D, D) = m.C * dt;
            sd.C_bar.block((k + 1) * D, (k - 1) * D, D, D) = -m.C * dt;
        }
        sd.B_ego_bar.block((k + 1) * D, 2 * k, D, 2) = m.B_ego.middleCols(0, 2) * dt;
        if (n > 0) sd.B_surr_bar.block((k + 1) * D, 2 * n * k, D, 2 * n) = m.B_surr.middleCols(2, 2 * n) * dt;
    }
    sd.D_bar.segment(0, D) = X_t.flatten();
    sd.D_bar.segment(D, D) = seq.front().C * dt * (X_t.flatten() - X_prev.flatten());
    return sd;
}

/// Sequential forward rollout. Element 0 equals X_t.
inline std::vector<SystemState> rollout(const SystemState& X_t, const SystemState& X_prev,
                                        const std::vector<InteractionMatrices>& seq,
                                        const std::vector<SystemControl>& u_ego_seq,
                                        const std::vector<SystemControl>& u_surr_seq, double dt) {
    const int N = static_cast<int>(seq.size());
    if (static_cast<int>(u_ego_seq.size()) != N || static_cast<int>(u_surr_seq.size()) != N)
        throw std::invalid_argument("rollout: control sequences must have length N");
    std::vector<SystemState> traj;
    traj.reserve(N + 1);
    traj.push_back(X_t);
    SystemState prev = X_prev;
    for (int k = 0; k < N; ++k) {
        SystemState next = step(traj.back(), prev, seq[k], u_ego_seq[k], u_surr_seq[k], dt);
        prev = traj.back();
        traj.push_back(std::move(next));
    }
    return traj;
}

/// Solves the stacked fixed-point form X = (A_bar + C_bar) X + B_ego_bar u_ego
/// + B_surr_bar u_surr + D_bar for the full state trajectory. The system
/// matrix is unit block-lower-triangular, so the solve is exact.
inline Vec solve_stacked(const StackedDynamics& sd, const Vec& u_ego, const Vec& u_surr) {
    if (u_ego.size() != sd.B_ego_bar.cols()) throw std::invalid_argument("solve_stacked: u_ego size");
    if (u_surr.size() != sd.B_surr_bar.cols()) throw std::invalid_argument("solve_stacked: u_surr size");
    const Mat M = Mat::Identity(sd.stacked_dim(), sd.stacked_dim()) - sd.A_bar - sd.C_bar;
    const Vec rhs = sd.B_ego_bar * u_ego + sd.B_surr_bar * u_surr + sd.D_bar;
    return M.triangularView<Eigen::Lower>().solve(rhs);
}

}  // namespace socmpc
