#pragma once

#include "socmpc/metrics/metrics.hpp"
#include "socmpc/model/encoder_decoder.hpp"
#include "socmpc/social_dynamics.hpp"
#include "socmpc/train/losses.hpp"

namespace socmpc::train {

/// Open-loop prediction of the surrounding vehicles for one frame: ego
/// controls are recovered from the ego ground truth, interaction blocks and
/// reactions come from the model (or are zero in physics-only mode), and the
/// joint trajectory is rolled out through the coupled dynamics.
struct FramePrediction {
    std::vector<int> slot_indices;  ///< present slots, frame order
    std::vector<std::vector<Eigen::Vector2d>> predicted;  ///< per SV, (s, y) over N steps
    std::vector<std::vector<Eigen::Vector2d>> truth;
};

inline FramePrediction predict_frame(const model::EncoderDecoder* model, const Frame& frame,
                                     const Config& cfg) {
    ad::NoGradGuard inference;
    const int N = frame.future_steps();
    const Eigen::MatrixXd u_ego = infer_ego_controls(frame, cfg);

    std::vector<LearnedBlocks> blocks(N, LearnedBlocks(kNumSlots));
    Eigen::MatrixXd u_surr = Eigen::MatrixXd::Zero(N, 2 * kNumSlots);
    if (model) {
        const model::ModelOutput out = model->forward(frame, u_ego);
        blocks = out.to_learned_blocks(kNumSlots, N);
        u_surr = out.u_surr_matrix();
    }

    const SystemState X0 = frame.current_state();
    const SystemState Xm1 = frame.previous_state();
    std::vector<VehicleParams> params(kNumSlots + 1);
    for (int v = 0; v <= kNumSlots; ++v) params[v] = frame.vehicle(v).params;

    std::vector<InteractionMatrices> seq;
    seq.reserve(N);
    for (int k = 0; k < N; ++k) seq.push_back(assemble_step(X0, params, blocks[k]));

    std::vector<SystemControl> ue, us;
    for (int k = 0; k < N; ++k) {
        ue.push_back(SystemControl::ego_control({u_ego(k, 0), u_ego(k, 1)}, kNumSlots));
        std::vector<ControlInput> sv(kNumSlots);
        for (int j = 0; j < kNumSlots; ++j) sv[j] = {u_surr(k, 2 * j), u_surr(k, 2 * j + 1)};
        us.push_back(SystemControl::surr_control(sv, X0.present));
    }
    const auto traj = rollout(X0, Xm1, seq, ue, us, frame.dt);

    FramePrediction fp;
    for (int j = 0; j < kNumSlots; ++j) {
        if (!frame.slots[j].present) continue;
        fp.slot_indices.push_back(j);
        std::vector<Eigen::Vector2d> pred, gt;
        for (int k = 1; k <= N; ++k) {
            pred.push_back({traj[k].surr[j].s, traj[k].surr[j].y});
            gt.push_back({frame.slots[j].future(k - 1, kFs), frame.slots[j].future(k - 1, kFy)});
        }
        fp.predicted.push_back(std::move(pred));
        fp.truth.push_back(std::move(gt));
    }
    return fp;
}

/// Constant-velocity extrapolation baseline from each SV's current state.
inline FramePrediction predict_frame_constant_velocity(const Frame& frame) {
    FramePrediction fp;
    const int N = frame.future_steps();
    for (int j = 0; j < kNumSlots; ++j) {
        if (!frame.slots[j].present) continue;
        fp.slot_indices.push_back(j);
        const VehicleState st = state_from_row(frame.slots[j].history, frame.history_steps() - 1);
        std::vector<Eigen::Vector2d> pred, gt;
        for (int k = 1; k <= N; ++k) {
            pred.push_back({st.s + st.v * std::cos(st.psi) * frame.dt * k,
                            st.y + st.v * std::sin(st.psi) * frame.dt * k});
            gt.push_back({frame.slots[j].future(k - 1, kFs), frame.slots[j].future(k - 1, kFy)});
        }
        fp.predicted.push_back(std::move(pred));
        fp.truth.push_back(std::move(gt));
    }
    return fp;
}

struct AdeFdeTable {
    std::vector<double> ade_at_seconds;  ///< ADE@1s.. up to the horizon
    double fde = std::numeric_limits<double>::quiet_NaN();
    int frames = 0;
    int tracks = 0;
};

/// Pools displacement errors over frames: ADE at whole-second horizons plus
/// the final displacement error, averaged over all predicted SV tracks.
template <typename PredictFn>
AdeFdeTable ade_fde_over_frames(const std::vector<Frame>& frames, double dt, PredictFn&& predict) {
    AdeFdeTable table;
    if (frames.empty()) return table;
    const int N = frames.front().future_steps();
    const int steps_per_second = std::max(1, static_cast<int>(std::lround(1.0 / dt)));
    const int horizons = N / steps_per_second;
    std::vector<double> ade_sum(horizons, 0.0);
    double fde_sum = 0.0;
    int tracks = 0;
    for (const Frame& f : frames) {
        const FramePrediction fp = predict(f);
        if (fp.predicted.empty()) continue;
        ++table.frames;
        for (int h = 0; h < horizons; ++h)
            ade_sum[h] += metrics::ade(fp.predicted, fp.truth, (h + 1) * steps_per_second) *
                          static_cast<double>(fp.predicted.size());
        fde_sum += metrics::fde(fp.predicted, fp.truth) * static_cast<double>(fp.predicted.size());
        tracks += static_cast<int>(fp.predicted.size());
    }
    if (tracks == 0) return table;
    table.tracks = tracks;
    for (int h = 0; h < horizons; ++h) table.ade_at_seconds.push_back(ade_sum[h] / tracks);
    table.fde = fde_sum / tracks;
    return table;
}

}  // namespace socmpc::train
