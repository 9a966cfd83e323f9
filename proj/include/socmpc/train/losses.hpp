#pragma once

#include "socmpc/core/config.hpp"
#include "socmpc/core/frame.hpp"
#include "socmpc/model/encoder_decoder.hpp"

#include <iostream>

namespace socmpc::train {

using ad::Tensor;

/// Controls recovered from a ground-truth future by inverse kinematics:
/// a from finite-differenced speed, delta_f from finite-differenced heading
/// through the linearized relation delta_f = psi_dot (l_r + l_f) / v.
/// The linearization speed is the vehicle's current speed, floored for the
/// division guard.
inline Eigen::MatrixXd infer_controls_from_future(const VehicleState& current,
                                                  const Eigen::MatrixXd& future, const VehicleParams& params,
                                                  double dt, double v_floor, bool warn = false) {
    const int N = static_cast<int>(future.rows());
    Eigen::MatrixXd u(N, 2);
    double v_lin = current.v;
    if (v_lin < v_floor) {
        if (warn) std::cerr << "infer_controls: speed below " << v_floor << " m/s, clamping\n";
        v_lin = v_floor;
    }
    double v_prev = current.v;
    double psi_prev = current.psi;
    for (int k = 0; k < N; ++k) {
        const double v_next = future(k, kFv);
        const double psi_next = future(k, kFpsi);
        u(k, 0) = (v_next - v_prev) / dt;
        u(k, 1) = (psi_next - psi_prev) / dt * params.wheelbase() / v_lin;
        v_prev = v_next;
        psi_prev = psi_next;
    }
    return u;
}

inline Eigen::MatrixXd infer_ego_controls(const Frame& frame, const Config& cfg) {
    if (frame.ego.future.rows() == 0)
        throw std::invalid_argument("infer_ego_controls: frame has no ego ground truth");
    const VehicleState current = state_from_row(frame.ego.history, frame.history_steps() - 1);
    return infer_controls_from_future(current, frame.ego.future, frame.ego.params, frame.dt, cfg.v_floor,
                                      /*warn=*/true);
}

/// Ground-truth joint surrounding controls as an [N, 2n] matrix with masked
/// columns zero, matching the mixture-mean layout.
inline Eigen::MatrixXd infer_surr_controls(const Frame& frame, const Config& cfg) {
    const int N = frame.future_steps();
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(N, 2 * kNumSlots);
    for (int i = 0; i < kNumSlots; ++i) {
        const VehicleTrack& tr = frame.slots[i];
        if (!tr.present) continue;
        const VehicleState current = state_from_row(tr.history, frame.history_steps() - 1);
        const Eigen::MatrixXd ui =
            infer_controls_from_future(current, tr.future, tr.params, frame.dt, cfg.v_floor);
        u.middleCols(2 * i, 2) = ui;
    }
    return u;
}

/// Mean smooth-L1 over all unmasked state entries across the horizon.
/// `pred` holds per-step per-vehicle [4,1] tensors for steps 1..N (the
/// rollout minus its initial element); `gt` the matching constants.
inline Tensor vehicle_loss(const std::vector<std::vector<Tensor>>& pred,
                           const std::vector<std::vector<Tensor>>& gt,
                           const std::vector<bool>& vehicle_mask) {
    Tensor acc = Tensor::scalar(0.0);
    int64_t entries = 0;
    for (size_t k = 0; k < pred.size(); ++k) {
        for (size_t v = 0; v < pred[k].size(); ++v) {
            if (!vehicle_mask[v]) continue;
            acc = ad::add(acc, ad::sum(ad::smooth_l1(ad::sub(pred[k][v], gt[k][v]))));
            entries += 4;
        }
    }
    if (entries == 0) return Tensor::scalar(0.0);
    return ad::scale(acc, 1.0 / static_cast<double>(entries));
}

struct GmmLossParts {
    Tensor loss;
    int selected = 0;  ///< best-of-K modality used during training
};

/// Mixture loss on the selected modality: mean log sigma plus the negative
/// log modality probability; selection during training is best-of-K by L2
/// distance of the mean to the ground truth. A Gaussian NLL data term is
/// added when `data_term` is set so the means receive gradient; switching it
/// off reproduces the bare variance/probability objective.
inline GmmLossParts gmm_loss(const model::GmmOutput& gmm, const Eigen::MatrixXd& u_gt,
                             const std::vector<bool>& present_mask, bool data_term) {
    const int K = static_cast<int>(gmm.means.size());
    const int N = gmm.means[0].shape()[0];
    const int n = gmm.means[0].shape()[1] / 2;

    int64_t active = 0;
    std::vector<double> mask_data;
    mask_data.reserve(static_cast<size_t>(N) * 2 * n);
    for (int k = 0; k < N; ++k)
        for (int j = 0; j < n; ++j) {
            const double m = j < static_cast<int>(present_mask.size()) && present_mask[j] ? 1.0 : 0.0;
            mask_data.push_back(m);
            mask_data.push_back(m);
            if (m > 0.0) active += 2;
        }

    GmmLossParts out;
    if (active == 0) {
        out.loss = Tensor::scalar(0.0);
        return out;
    }
    const Tensor mask = Tensor::from({N, 2 * n}, std::move(mask_data));
    const Tensor gt = Tensor::from_eigen(u_gt);

    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
        double d = 0.0;
        const auto& mv = gmm.means[k].values();
        for (int i = 0; i < gmm.means[k].size(); ++i) {
            const double diff = (mv[static_cast<size_t>(i)] - u_gt(i / (2 * n), i % (2 * n))) *
                                mask.value_at(i);
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    out.selected = best;

    const double inv_active = 1.0 / static_cast<double>(active);
    Tensor loss = ad::scale(ad::sum(ad::mul(ad::log(gmm.sigmas[best]), mask)), inv_active);
    loss = ad::sub(loss, ad::log(ad::slice(gmm.probs, 0, best, 1)));
    if (data_term) {
        const Tensor diff = ad::mul(ad::sub(gmm.means[best], gt), mask);
        const Tensor var2 = ad::scale(ad::mul(gmm.sigmas[best], gmm.sigmas[best]), 2.0);
        loss = ad::add(loss, ad::scale(ad::sum(ad::div(ad::mul(diff, diff), var2)), inv_active));
    }
    out.loss = ad::reshape(loss, {1});
    return out;
}

inline Tensor total_loss(const Tensor& lv, const Tensor& lg, double lambda_1, double lambda_2) {
    return ad::add(ad::scale(lv, lambda_1), ad::scale(lg, lambda_2));
}

}  // namespace socmpc::train
