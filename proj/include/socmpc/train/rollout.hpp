#pragma once

#include "socmpc/model/encoder_decoder.hpp"
#include "socmpc/social_dynamics.hpp"

namespace socmpc::train {

using ad::Tensor;

/// Differentiable joint rollout of the coupled dynamics in tensor space.
/// Physics blocks are constants (linearized at each vehicle's current
/// speed); learned pair blocks and the predicted surrounding controls flow
/// gradients. Returns per-step per-vehicle [4,1] states for steps 1..N.
inline std::vector<std::vector<Tensor>> rollout_tensors(const Frame& frame, const model::ModelOutput& out,
                                                        const Eigen::MatrixXd& u_ego, const Tensor& u_surr,
                                                        int N, double dt) {
    const int n = kNumSlots;
    const SystemState X0 = frame.current_state();
    const SystemState Xm1 = frame.previous_state();

    std::vector<bool> present(n + 1, false);
    present[0] = true;
    for (int i = 0; i < n; ++i) present[i + 1] = frame.slots[i].present;

    // constant per-vehicle discrete physics
    std::vector<Tensor> M_A(n + 1), M_B(n + 1);
    for (int v = 0; v <= n; ++v) {
        if (!present[v]) continue;
        const VehicleState st = v == 0 ? X0.ego : X0.surr[v - 1];
        const VehicleParams& p = frame.vehicle(v).params;
        const LinearizedVehicle lin = linearize(st.v, p);
        M_A[v] = Tensor::from_eigen(Eigen::MatrixXd(lin.A * dt + Eigen::Matrix4d::Identity()));
        M_B[v] = Tensor::from_eigen(Eigen::MatrixXd(lin.B * dt));
    }

    auto state_tensor = [](const VehicleState& st) {
        return Tensor::from({4, 1}, {st.s, st.v, st.y, st.psi});
    };

    std::vector<Tensor> x(n + 1), x_prev(n + 1);
    for (int v = 0; v <= n; ++v) {
        if (!present[v]) continue;
        x[v] = state_tensor(v == 0 ? X0.ego : X0.surr[v - 1]);
        x_prev[v] = state_tensor(v == 0 ? Xm1.ego : Xm1.surr[v - 1]);
    }

    std::vector<std::vector<Tensor>> traj;
    traj.reserve(N);
    for (int k = 0; k < N; ++k) {
        // shared per-vehicle motion differences for the C terms
        std::vector<Tensor> dx(n + 1);
        for (int v = 0; v <= n; ++v)
            if (present[v]) dx[v] = ad::sub(x[v], x_prev[v]);

        std::vector<Tensor> next(n + 1);
        for (int v = 0; v <= n; ++v) {
            if (!present[v]) continue;
            Tensor acc = ad::matmul(M_A[v], x[v]);
            if (v == 0) {
                acc = ad::add(acc, ad::matmul(M_B[v], Tensor::from({2, 1}, {u_ego(k, 0), u_ego(k, 1)})));
            } else {
                const Tensor uk = ad::reshape(
                    ad::slice(ad::slice(u_surr, 0, k, 1), 1, 2 * (v - 1), 2), {2, 1});
                acc = ad::add(acc, ad::matmul(M_B[v], uk));
            }
            next[v] = acc;
        }
        for (size_t p = 0; p < out.pairs.size(); ++p) {
            const auto [row, col] = out.pairs[p];
            const Tensor c_k = ad::reshape(ad::slice(out.c_seq[p], 0, k, 1), {4, 4});
            next[row] = ad::add(next[row], ad::scale(ad::matmul(c_k, dx[col]), dt));
            const Tensor b_k = ad::reshape(ad::slice(out.b_seq[p], 0, k, 1), {4, 2});
            Tensor u_col;
            if (col == 0)
                u_col = Tensor::from({2, 1}, {u_ego(k, 0), u_ego(k, 1)});
            else
                u_col = ad::reshape(ad::slice(ad::slice(u_surr, 0, k, 1), 1, 2 * (col - 1), 2), {2, 1});
            next[row] = ad::add(next[row], ad::scale(ad::matmul(b_k, u_col), dt));
        }
        x_prev = x;
        x = next;
        traj.push_back(x);
    }
    return traj;
}

/// Ground-truth targets matching rollout_tensors' layout: steps 1..N of
/// per-vehicle [4,1] constants in state order (s, v, y, psi).
inline std::vector<std::vector<Tensor>> ground_truth_tensors(const Frame& frame, int N) {
    std::vector<std::vector<Tensor>> gt(N, std::vector<Tensor>(kNumSlots + 1));
    for (int v = 0; v <= kNumSlots; ++v) {
        const VehicleTrack& tr = frame.vehicle(v);
        if (!tr.present) continue;
        for (int k = 0; k < N; ++k)
            gt[k][v] = Tensor::from(
                {4, 1}, {tr.future(k, kFs), tr.future(k, kFv), tr.future(k, kFy), tr.future(k, kFpsi)});
    }
    return gt;
}

}  // namespace socmpc::train
