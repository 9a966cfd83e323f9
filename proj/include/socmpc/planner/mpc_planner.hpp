#pragma once

#include "socmpc/model/encoder_decoder.hpp"
#include "socmpc/qp/solver.hpp"
#include "socmpc/sim/ego_interface.hpp"
#include "socmpc/social_dynamics.hpp"
#include "socmpc/train/losses.hpp"

#include <array>
#include <fstream>
#include <optional>

namespace socmpc::plan {

/// Ego cost weights over the stacked decision vector. Surrounding-vehicle
/// blocks carry exactly zero weight.
struct CostWeights {
    Eigen::Vector4d q;      ///< (s, v, y, psi) weights
    Eigen::Vector2d r;      ///< (a, delta_f) weights
    Eigen::Vector4d x_des;  ///< desired ego state

    static CostWeights from_config(const Config& cfg, const Eigen::Vector4d& x_des) {
        CostWeights w;
        w.q = {cfg.theta_1, cfg.theta_2, cfg.theta_4, cfg.theta_5};
        w.r = {cfg.theta_3, cfg.theta_6};
        w.x_des = x_des;
        return w;
    }
};

/// Quadratic cost over z = [X; u_ego]: per-step ego state tracking for steps
/// 0..N-1, a zero terminal block, and per-step ego control effort.
inline std::pair<Mat, Vec> build_cost(const CostWeights& w, int N, int n) {
    const int D = 4 * (n + 1);
    const int dim = (N + 1) * D + 2 * N;
    Mat P = Mat::Zero(dim, dim);
    Vec q = Vec::Zero(dim);
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i < 4; ++i) {
            P(k * D + i, k * D + i) = w.q[i];
            q[k * D + i] = -w.q[i] * w.x_des[i];
        }
        for (int i = 0; i < 2; ++i) P((N + 1) * D + 2 * k + i, (N + 1) * D + 2 * k + i) = w.r[i];
    }
    return {std::move(P), std::move(q)};
}

/// Equality constraint embedding the coupled interaction dynamics:
/// [A_bar + C_bar - I, B_ego_bar] z = -(B_surr_bar u_surr + D_bar).
inline std::pair<Mat, Vec> build_social_constraint(const StackedDynamics& sd, const Vec& u_surr) {
    const int rows = sd.stacked_dim();
    Mat Aeq(rows, rows + sd.B_ego_bar.cols());
    Aeq.leftCols(rows) = sd.A_bar + sd.C_bar - Mat::Identity(rows, rows);
    Aeq.rightCols(sd.B_ego_bar.cols()) = sd.B_ego_bar;
    Vec beq = -(sd.B_surr_bar * u_surr + sd.D_bar);
    return {std::move(Aeq), std::move(beq)};
}

/// Big-M mode selection per surrounding vehicle and step from a nominal
/// prediction: 0 enforces longitudinal separation, 1 lateral, -1 masked.
/// Longitudinal wins when its nominal margin ratio is at least the lateral's.
inline Eigen::MatrixXi fix_collision_binaries(const std::vector<SystemState>& nominal, const Config& cfg) {
    const int n = nominal.front().n_surr();
    const int N = static_cast<int>(nominal.size()) - 1;
    Eigen::MatrixXi c = Eigen::MatrixXi::Constant(n, N, -1);
    for (int j = 0; j < n; ++j) {
        if (!nominal.front().present[j]) continue;
        for (int k = 1; k <= N; ++k) {
            const double ds = std::abs(nominal[k].surr[j].s - nominal[k].ego.s);
            const double dy = std::abs(nominal[k].surr[j].y - nominal[k].ego.y);
            c(j, k - 1) = (ds / cfg.s_ref >= dy / cfg.y_ref) ? 0 : 1;
        }
    }
    return c;
}

struct IneqRows {
    Mat A;
    Vec lo, hi;
    std::vector<std::array<int, 3>> meta;  ///< (vehicle, step, mode) per emitted separation pair
    Eigen::MatrixXi locked;  ///< cells in the recovery regime; their binaries are not enumerable
};

inline constexpr double kInf = 1e30;

/// Linearized Big-M separation rows over z, resolved by the nominal
/// relative-position sign; both rows of each (vehicle, step) pair are
/// emitted, the inactive one slackened by M.
///
/// A step's rows are emitted only when the active reference is enforceable
/// there: a maximum-authority escape policy (full braking or acceleration
/// for the longitudinal mode, heading at its bound for the lateral mode),
/// run against the predicted vehicle trajectory, must reach the reference
/// by that step. Without this gate, a state already inside the reference
/// envelope makes the whole QP infeasible even though recovery is under way.
inline IneqRows build_collision_constraints(const Eigen::MatrixXi& binaries,
                                            const std::vector<SystemState>& nominal, const Config& cfg,
                                            int N, int n) {
    const int D = 4 * (n + 1);
    const int dim = (N + 1) * D + 2 * N;
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> lo;
    std::vector<std::array<int, 3>> meta;
    Eigen::MatrixXi out_locked = Eigen::MatrixXi::Zero(n, N);
    for (int j = 0; j < n; ++j) {
        if (binaries.row(j).maxCoeff() < 0) continue;

        // escape-policy envelopes against the predicted SV motion, using the
        // same linear model the QP sees: full braking/acceleration for the
        // longitudinal mode, steering-rate-limited heading swing away from
        // the vehicle for the lateral mode
        const bool sv_ahead = nominal[0].surr[j].s >= nominal[0].ego.s;
        const bool sv_left = nominal[0].surr[j].y >= nominal[0].ego.y;
        std::vector<double> reach_s(N + 1), reach_y(N + 1);
        const double v0 = nominal[0].ego.v;
        const double wheelbase = 3.0;
        double v_hat = v0;
        double s_hat = nominal[0].ego.s;
        double y_hat = nominal[0].ego.y;
        double psi_hat = nominal[0].ego.psi;
        const double psi_rate = v0 / wheelbase * cfg.delta_max;
        const double away = sv_left ? -1.0 : 1.0;
        for (int k = 1; k <= N; ++k) {
            s_hat += v_hat * cfg.dt;
            v_hat = std::clamp(v_hat + (sv_ahead ? cfg.a_min : cfg.a_max) * cfg.dt, cfg.v_min, cfg.v_max);
            y_hat += v0 * psi_hat * cfg.dt;
            psi_hat = std::clamp(psi_hat + away * psi_rate * cfg.dt, -cfg.psi_max, cfg.psi_max);
            reach_s[k] = std::abs(nominal[k].surr[j].s - s_hat);
            reach_y[k] = std::abs(nominal[k].surr[j].y - y_hat);
        }

        for (int k = 1; k <= N; ++k) {
            if (binaries(j, k - 1) < 0) continue;
            const int c = binaries(j, k - 1);
            // Steps where both full references are reachable carry the exact
            // either-or rows and the binary is a free choice. Otherwise the
            // plan is in a recovery regime the either-or logic does not
            // cover: the selected mode's bound ramps to what the escape
            // policy can reach (feasible by construction), the binary is
            // locked, and the slackened row keeps its full reference.
            const bool full_s = reach_s[k] >= cfg.s_ref;
            const bool full_y = reach_y[k] >= cfg.y_ref;
            double bound_s = cfg.s_ref;
            double bound_y = cfg.y_ref;
            if (!(full_s && full_y)) {
                out_locked(j, k - 1) = 1;
                if (c == 0)
                    bound_s = std::min(cfg.s_ref, reach_s[k]);
                else
                    bound_y = std::min(cfg.y_ref, reach_y[k]);
            }
            const double sign_s = nominal[k].surr[j].s >= nominal[k].ego.s ? 1.0 : -1.0;
            const double sign_y = nominal[k].surr[j].y >= nominal[k].ego.y ? 1.0 : -1.0;
            Eigen::RowVectorXd row_s = Eigen::RowVectorXd::Zero(dim);
            row_s[k * D + 4 * (j + 1) + 0] = sign_s;
            row_s[k * D + 0] = -sign_s;
            rows.push_back(row_s);
            lo.push_back(bound_s - cfg.big_m * c);
            Eigen::RowVectorXd row_y = Eigen::RowVectorXd::Zero(dim);
            row_y[k * D + 4 * (j + 1) + 2] = sign_y;
            row_y[k * D + 2] = -sign_y;
            rows.push_back(row_y);
            lo.push_back(bound_y - cfg.big_m * (1 - c));
            meta.push_back({j, k, c});
        }
    }
    IneqRows out;
    out.A = Mat::Zero(static_cast<int>(rows.size()), dim);
    out.lo = Vec::Zero(static_cast<int>(rows.size()));
    out.hi = Vec::Constant(static_cast<int>(rows.size()), kInf);
    for (size_t i = 0; i < rows.size(); ++i) {
        out.A.row(static_cast<int>(i)) = rows[i];
        out.lo[static_cast<int>(i)] = lo[i];
    }
    out.meta = std::move(meta);
    out.locked = std::move(out_locked);
    return out;
}

/// Ego box constraints: speed and heading ranges on steps 1..N, control
/// ranges on every step.
inline IneqRows build_box_constraints(const Config& cfg, int N, int n) {
    const int D = 4 * (n + 1);
    const int dim = (N + 1) * D + 2 * N;
    const int rows = 2 * N + 2 * N;
    IneqRows out;
    out.A = Mat::Zero(rows, dim);
    out.lo = Vec::Zero(rows);
    out.hi = Vec::Zero(rows);
    int r = 0;
    for (int k = 1; k <= N; ++k) {
        out.A(r, k * D + 1) = 1.0;  // ego speed
        out.lo[r] = cfg.v_min;
        out.hi[r] = cfg.v_max;
        ++r;
        out.A(r, k * D + 3) = 1.0;  // ego heading
        out.lo[r] = -cfg.psi_max;
        out.hi[r] = cfg.psi_max;
        ++r;
    }
    for (int k = 0; k < N; ++k) {
        out.A(r, (N + 1) * D + 2 * k) = 1.0;
        out.lo[r] = cfg.a_min;
        out.hi[r] = cfg.a_max;
        ++r;
        out.A(r, (N + 1) * D + 2 * k + 1) = 1.0;
        out.lo[r] = -cfg.delta_max;
        out.hi[r] = cfg.delta_max;
        ++r;
    }
    return out;
}

struct PlanResult {
    Eigen::MatrixXd u_ego;             ///< N x 2
    std::vector<SystemState> X_pred;   ///< N+1 joint states
    double objective = 0.0;
    qp::QpStatus status = qp::QpStatus::max_iter;
    bool degraded = false;
    Eigen::MatrixXi binaries;
    double dynamics_residual = 0.0;
    double min_active_margin = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Sensitivity map X = S u_ego + w of the stacked dynamics, built by forward
/// substitution over the block-banded system. The offset w is the rollout
/// under zero ego input, computed by the caller.
inline Mat condense(const std::vector<InteractionMatrices>& seq, double dt) {
    const int N = static_cast<int>(seq.size());
    const int D = 4 * (seq.front().n + 1);
    Mat S = Mat::Zero((N + 1) * D, 2 * N);
    Mat Sk = Mat::Zero(D, 2 * N);
    Mat Sk_prev = Mat::Zero(D, 2 * N);
    for (int k = 0; k < N; ++k) {
        const Mat M_A = seq[k].A * dt + Mat::Identity(D, D);
        Mat Sk_next = M_A * Sk;
        if (k >= 1) Sk_next += seq[k].C * dt * (Sk - Sk_prev);
        Sk_next.middleCols(2 * k, 2) += seq[k].B_ego.leftCols(2) * dt;
        S.middleRows((k + 1) * D, D) = Sk_next;
        Sk_prev = Sk;
        Sk = Sk_next;
    }
    return S;
}

}  // namespace detail

/// Everything the QP needs, kept in the uncondensed z = [X; u_ego] space so
/// both solve paths (condensed and full) consume the same problem.
struct PlanProblem {
    int N = 0, n = 0, D = 0;
    std::vector<InteractionMatrices> seq;
    StackedDynamics sd;
    SystemState X0, Xm1;
    Vec u_surr;  ///< stacked 2nN
    Mat P;
    Vec q;
    Mat Aeq;
    Vec beq;
    IneqRows ineq;
    Eigen::MatrixXi binaries;
    std::vector<SystemState> nominal;
    CostWeights weights;

    /// Constant dropped when the tracking cost is written as a QP; adding it
    /// back makes the reported objective the actual tracking cost.
    double cost_offset() const {
        double c = 0.0;
        for (int i = 0; i < 4; ++i) c += weights.q[i] * weights.x_des[i] * weights.x_des[i];
        return 0.5 * N * c;
    }
};

inline std::vector<SystemControl> unstack_surr(const Vec& u_surr, int n, int N,
                                               const std::vector<bool>& present) {
    std::vector<SystemControl> seq;
    for (int k = 0; k < N; ++k) {
        std::vector<ControlInput> us(n);
        for (int j = 0; j < n; ++j)
            us[j] = {u_surr[2 * n * k + 2 * j], u_surr[2 * n * k + 2 * j + 1]};
        seq.push_back(SystemControl::surr_control(us, present));
    }
    return seq;
}

inline std::vector<SystemControl> unstack_ego(const Eigen::MatrixXd& u_ego, int n) {
    std::vector<SystemControl> seq;
    for (int k = 0; k < u_ego.rows(); ++k)
        seq.push_back(SystemControl::ego_control({u_ego(k, 0), u_ego(k, 1)}, n));
    return seq;
}

inline PlanProblem build_plan_problem(const SystemState& X0, const SystemState& Xm1,
                                      const std::vector<VehicleParams>& params,
                                      const std::vector<LearnedBlocks>& blocks,
                                      const Eigen::MatrixXd& u_surr_mat, const Eigen::MatrixXd& u_nominal,
                                      const CostWeights& weights, const Config& cfg, int N) {
    PlanProblem p;
    p.N = N;
    p.n = X0.n_surr();
    p.D = 4 * (p.n + 1);
    p.X0 = X0;
    p.Xm1 = Xm1;

    p.seq.reserve(N);
    for (int k = 0; k < N; ++k) p.seq.push_back(assemble_step(X0, params, blocks[k]));
    p.sd = stack_horizon(p.seq, X0, Xm1, cfg.dt);

    p.u_surr = Vec::Zero(2 * p.n * N);
    for (int k = 0; k < N; ++k)
        for (int j = 0; j < p.n; ++j) {
            if (!X0.present[j]) continue;
            p.u_surr[2 * p.n * k + 2 * j] = u_surr_mat(k, 2 * j);
            p.u_surr[2 * p.n * k + 2 * j + 1] = u_surr_mat(k, 2 * j + 1);
        }

    p.weights = weights;
    p.nominal = rollout(X0, Xm1, p.seq, unstack_ego(u_nominal, p.n),
                        unstack_surr(p.u_surr, p.n, N, X0.present), cfg.dt);
    p.binaries = fix_collision_binaries(p.nominal, cfg);

    std::tie(p.P, p.q) = build_cost(weights, N, p.n);
    std::tie(p.Aeq, p.beq) = build_social_constraint(p.sd, p.u_surr);
    const IneqRows boxes = build_box_constraints(cfg, N, p.n);
    const IneqRows coll = build_collision_constraints(p.binaries, p.nominal, cfg, N, p.n);
    p.ineq.A = Mat::Zero(boxes.A.rows() + coll.A.rows(), boxes.A.cols());
    p.ineq.A << boxes.A, coll.A;
    p.ineq.lo = Vec::Zero(boxes.lo.size() + coll.lo.size());
    p.ineq.lo << boxes.lo, coll.lo;
    p.ineq.hi = Vec::Zero(boxes.hi.size() + coll.hi.size());
    p.ineq.hi << boxes.hi, coll.hi;
    p.ineq.meta = coll.meta;
    p.ineq.locked = coll.locked;
    return p;
}

/// Solves the plan QP by eliminating X through the dynamics (X = S u + w),
/// which keeps the equality constraint satisfied exactly, then lifts the
/// solution back. Equivalent to the full-space solve up to solver tolerance.
inline PlanResult solve_plan_condensed(const PlanProblem& p, const Config& cfg) {
    const int nu = 2 * p.N;
    const Mat S = detail::condense(p.seq, cfg.dt);
    const auto zero_u = Eigen::MatrixXd::Zero(p.N, 2);
    const auto base = rollout(p.X0, p.Xm1, p.seq, unstack_ego(zero_u, p.n),
                              unstack_surr(p.u_surr, p.n, p.N, p.X0.present), cfg.dt);
    Vec w(p.sd.stacked_dim());
    for (int k = 0; k <= p.N; ++k) w.segment(k * p.D, p.D) = base[k].flatten();

    const int dim = p.sd.stacked_dim();
    const Mat Pxx = p.P.topLeftCorner(dim, dim);
    const Mat Puu = p.P.bottomRightCorner(nu, nu);
    const Vec qx = p.q.head(dim);

    qp::QpProblem red;
    red.P = S.transpose() * Pxx * S + Puu;
    red.P = 0.5 * (red.P + red.P.transpose());
    red.q = S.transpose() * (Pxx * w + qx);
    red.Aeq = Mat::Zero(0, nu);
    red.beq = Vec::Zero(0);
    const Mat Gx = p.ineq.A.leftCols(dim);
    const Mat Gu = p.ineq.A.rightCols(nu);
    red.Ain = Gx * S + Gu;
    const Vec shift = Gx * w;
    red.bin_lo = p.ineq.lo - shift;
    red.bin_hi = p.ineq.hi - shift;
    for (int i = 0; i < red.bin_hi.size(); ++i) {
        if (p.ineq.hi[i] >= kInf) red.bin_hi[i] = kInf;
        if (p.ineq.lo[i] <= -kInf) red.bin_lo[i] = -kInf;
    }

    const qp::QpSolution sol = qp::solve(red, cfg.qp_tol, cfg.qp_max_iter);

    PlanResult res;
    res.status = sol.status;
    res.binaries = p.binaries;
    if (sol.status != qp::QpStatus::optimal) return res;

    res.u_ego = Eigen::MatrixXd(p.N, 2);
    for (int k = 0; k < p.N; ++k) {
        res.u_ego(k, 0) = sol.x[2 * k];
        res.u_ego(k, 1) = sol.x[2 * k + 1];
    }
    res.X_pred = rollout(p.X0, p.Xm1, p.seq, unstack_ego(res.u_ego, p.n),
                         unstack_surr(p.u_surr, p.n, p.N, p.X0.present), cfg.dt);
    // objective in the full z space (identical to the reduced objective up to
    // the constant from w)
    Vec z(dim + nu);
    for (int k = 0; k <= p.N; ++k) z.segment(k * p.D, p.D) = res.X_pred[k].flatten();
    z.tail(nu) = sol.x;
    res.objective = 0.5 * z.dot(p.P * z) + p.q.dot(z) + p.cost_offset();
    res.dynamics_residual = (p.Aeq * z - p.beq).cwiseAbs().maxCoeff();

    // margins of the active (mode-selected) separation rows
    const int box_rows = 4 * p.N;
    const Vec vals = p.ineq.A * z;
    for (size_t i = 0; i < p.ineq.meta.size(); ++i) {
        const int c = p.ineq.meta[i][2];
        const int r = box_rows + 2 * static_cast<int>(i) + (c == 0 ? 0 : 1);
        res.min_active_margin = std::min(res.min_active_margin, vals[r] - p.ineq.lo[r]);
    }
    return res;
}

/// Full-space reference solve over z = [X; u_ego]; used to cross-check the
/// condensed path.
inline PlanResult solve_plan_full(const PlanProblem& p, const Config& cfg) {
    qp::QpProblem full;
    full.P = p.P;
    full.q = p.q;
    full.Aeq = p.Aeq;
    full.beq = p.beq;
    full.Ain = p.ineq.A;
    full.bin_lo = p.ineq.lo;
    full.bin_hi = p.ineq.hi;
    const qp::QpSolution sol = qp::solve(full, cfg.qp_tol, cfg.qp_max_iter);

    PlanResult res;
    res.status = sol.status;
    res.binaries = p.binaries;
    if (sol.status != qp::QpStatus::optimal) return res;
    const int dim = p.sd.stacked_dim();
    res.u_ego = Eigen::MatrixXd(p.N, 2);
    for (int k = 0; k < p.N; ++k) {
        res.u_ego(k, 0) = sol.x[dim + 2 * k];
        res.u_ego(k, 1) = sol.x[dim + 2 * k + 1];
    }
    res.X_pred = rollout(p.X0, p.Xm1, p.seq, unstack_ego(res.u_ego, p.n),
                         unstack_surr(p.u_surr, p.n, p.N, p.X0.present), cfg.dt);
    res.objective = sol.objective + p.cost_offset();
    res.dynamics_residual = (p.Aeq * sol.x - p.beq).cwiseAbs().maxCoeff();
    return res;
}

/// Exhaustive search over the 2^(n_present * N) binary assignments; the test
/// oracle and the fallback when the heuristic assignment is infeasible.
inline std::optional<PlanResult> enumerate_binaries(const PlanProblem& base, const Config& cfg) {
    std::vector<std::pair<int, int>> cells;
    for (int j = 0; j < base.n; ++j)
        for (int k = 0; k < base.N; ++k)
            if (base.binaries(j, k) >= 0 &&
                (base.ineq.locked.size() == 0 || base.ineq.locked(j, k) == 0))
                cells.emplace_back(j, k);
    if (cells.size() > 12) return std::nullopt;

    std::optional<PlanResult> best;
    for (uint64_t bits = 0; bits < (1ull << cells.size()); ++bits) {
        PlanProblem p = base;
        for (size_t i = 0; i < cells.size(); ++i)
            p.binaries(cells[i].first, cells[i].second) = static_cast<int>((bits >> i) & 1ull);
        const IneqRows boxes = build_box_constraints(cfg, p.N, p.n);
        const IneqRows coll = build_collision_constraints(p.binaries, p.nominal, cfg, p.N, p.n);
        p.ineq.A = Mat::Zero(boxes.A.rows() + coll.A.rows(), boxes.A.cols());
        p.ineq.A << boxes.A, coll.A;
        p.ineq.lo = Vec::Zero(boxes.lo.size() + coll.lo.size());
        p.ineq.lo << boxes.lo, coll.lo;
        p.ineq.hi = Vec::Zero(boxes.hi.size() + coll.hi.size());
        p.ineq.hi << boxes.hi, coll.hi;
        p.ineq.meta = coll.meta;
        p.ineq.locked = coll.locked;
        PlanResult r = solve_plan_condensed(p, cfg);
        if (r.status != qp::QpStatus::optimal) continue;
        if (!best || r.objective < best->objective) best = std::move(r);
    }
    return best;
}

/// The per-cycle planner. Pipeline: nominal ego plan (shifted warm start or
/// zero input), model query for interaction blocks and anticipated reactions
/// conditioned on that plan, stacked dynamics, QP, then an optional
/// re-linearization pass that re-queries the model with the solved plan.
class MpcPlanner : public sim::EgoPlanner {
public:
    MpcPlanner(const model::EncoderDecoder* model, const Config& cfg)
        : model_(model), cfg_(cfg), N_(model ? model->hyper().N : cfg.N) {}

    const char* name() const override { return "mpcformer"; }

    void enable_dump(const std::string& path) { dump_.open(path); }

    PlanResult plan(const sim::EgoObservation& obs) {
        const Frame& frame = obs.frame;
        const SystemState X0 = frame.current_state();
        const SystemState Xm1 = frame.previous_state();
        std::vector<VehicleParams> params(kNumSlots + 1);
        for (int v = 0; v <= kNumSlots; ++v) params[v] = frame.vehicle(v).params;

        Eigen::MatrixXd u_nominal = warm_start();
        // progress laterally one lane at a time so the six neighbor slots
        // always cover the vehicles the next move interacts with
        const double dy_total = obs.target_y - X0.ego.y;
        const double y_des =
            X0.ego.y + std::clamp(dy_total, -obs.lane_width, obs.lane_width);
        const Eigen::Vector4d x_des{X0.ego.s + obs.desired_speed * N_ * cfg_.dt, obs.desired_speed,
                                    y_des, 0.0};
        const CostWeights weights = CostWeights::from_config(cfg_, x_des);

        PlanResult res;
        for (int pass = 0; pass <= cfg_.replan_passes; ++pass) {
            std::vector<LearnedBlocks> blocks(N_, LearnedBlocks(kNumSlots));
            Eigen::MatrixXd u_surr = Eigen::MatrixXd::Zero(N_, 2 * kNumSlots);
            if (model_) {
                ad::NoGradGuard inference;
                const model::ModelOutput out = model_->forward(frame, u_nominal);
                blocks = out.to_learned_blocks(kNumSlots, N_);
                u_surr = out.u_surr_matrix();
            }
            PlanProblem p =
                build_plan_problem(X0, Xm1, params, blocks, u_surr, u_nominal, weights, cfg_, N_);
            res = solve_plan_condensed(p, cfg_);
            if (res.status != qp::QpStatus::optimal) {
                if (auto enumerated = enumerate_binaries(p, cfg_)) {
                    res = *enumerated;
                } else {
                    res = braking_fallback(p);
                    break;
                }
            }
            u_nominal = res.u_ego;
        }
        last_plan_ = res;
        if (dump_.is_open()) dump_plan(res);
        return res;
    }

    ControlInput act(const sim::EgoObservation& obs) override {
        const PlanResult res = plan(obs);
        if (res.u_ego.rows() == 0) return {cfg_.a_min, 0.0};
        return {res.u_ego(0, 0), res.u_ego(0, 1)};  // rolling horizon: first step only
    }

    const std::optional<PlanResult>& last_plan() const { return last_plan_; }

private:
    Eigen::MatrixXd warm_start() const {
        Eigen::MatrixXd u = Eigen::MatrixXd::Zero(N_, 2);
        if (last_plan_ && last_plan_->u_ego.rows() == N_ && !last_plan_->degraded) {
            u.topRows(N_ - 1) = last_plan_->u_ego.bottomRows(N_ - 1);  // shift one step
            u.row(N_ - 1) = last_plan_->u_ego.row(N_ - 1);
        }
        return u;
    }

    PlanResult braking_fallback(const PlanProblem& p) const {
        PlanResult res;
        res.degraded = true;
        res.status = qp::QpStatus::infeasible;
        res.binaries = p.binaries;
        res.u_ego = Eigen::MatrixXd::Zero(N_, 2);
        res.u_ego.col(0).setConstant(cfg_.a_min);
        res.X_pred = rollout(p.X0, p.Xm1, p.seq, unstack_ego(res.u_ego, p.n),
                             unstack_surr(p.u_surr, p.n, p.N, p.X0.present), cfg_.dt);
        return res;
    }

    void dump_plan(const PlanResult& res) {
        nlohmann::json j;
        j["status"] = qp::to_string(res.status);
        j["degraded"] = res.degraded;
        j["objective"] = res.objective;
        nlohmann::json u = nlohmann::json::array();
        for (int k = 0; k < res.u_ego.rows(); ++k) u.push_back({res.u_ego(k, 0), res.u_ego(k, 1)});
        j["u_ego"] = u;
        nlohmann::json x = nlohmann::json::array();
        for (const auto& st : res.X_pred) {
            nlohmann::json row = nlohmann::json::array();
            const Vec v = st.flatten();
            for (int i = 0; i < v.size(); ++i) row.push_back(v[i]);
            x.push_back(row);
        }
        j["X_pred"] = x;
        nlohmann::json b = nlohmann::json::array();
        for (int jx = 0; jx < res.binaries.rows(); ++jx) {
            nlohmann::json row = nlohmann::json::array();
            for (int k = 0; k < res.binaries.cols(); ++k) row.push_back(res.binaries(jx, k));
            b.push_back(row);
        }
        j["binaries"] = b;
        dump_ << j.dump() << "\n";
    }

    const model::EncoderDecoder* model_;
    Config cfg_;
    int N_;
    std::optional<PlanResult> last_plan_;
    std::ofstream dump_;
};

}  // namespace socmpc::plan
