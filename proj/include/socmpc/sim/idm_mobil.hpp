#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace socmpc::sim {

struct IdmParams {
    double v0 = 30.0;     ///< desired speed [m/s]
    double T = 1.5;       ///< desired time headway [s]
    double a_max = 1.5;   ///< maximum acceleration [m/s^2]
    double b = 2.0;       ///< comfortable deceleration [m/s^2]
    double s0 = 2.0;      ///< jam distance [m]
    double delta = 4.0;   ///< acceleration exponent
    double b_max = 6.0;   ///< emergency braking bound [m/s^2]
};

inline constexpr double kNoLeaderGap = std::numeric_limits<double>::infinity();

/// Intelligent Driver Model acceleration. Pass gap = kNoLeaderGap for free
/// road. A non-positive gap with a leader present returns emergency braking.
inline double idm_accel(double v, double v_lead, double gap, const IdmParams& p) {
    if (!(gap > 0.0)) return -p.b_max;
    double interaction = 0.0;
    if (std::isfinite(gap)) {
        const double dv = v - v_lead;
        const double s_star = p.s0 + std::max(0.0, v * p.T + v * dv / (2.0 * std::sqrt(p.a_max * p.b)));
        interaction = (s_star / gap) * (s_star / gap);
    }
    const double a = p.a_max * (1.0 - std::pow(v / p.v0, p.delta) - interaction);
    return std::clamp(a, -p.b_max, p.a_max);
}

struct MobilParams {
    double politeness = 0.3;  ///< weight on follower accelerations
    double delta_a_th = 0.2;  ///< incentive threshold [m/s^2]
    double b_safe = 4.0;      ///< maximum imposed deceleration on the new follower [m/s^2]
};

/// Neighbor view of one lane relative to the subject vehicle. Gaps are
/// bumper-to-bumper and positive when there is free space.
struct LaneContext {
    bool exists = false;
    bool has_leader = false;
    double leader_v = 0.0;
    double leader_gap = kNoLeaderGap;
    bool has_follower = false;
    double follower_v = 0.0;
    double follower_gap = kNoLeaderGap;
    /// Gap from the lane's follower to the lane's current leader (the
    /// follower's situation before the subject merges in between).
    double follower_to_leader_gap = kNoLeaderGap;
    double bias = 0.0;  ///< extra incentive, e.g. a route term toward an off-ramp
};

enum class LaneChange { stay, left, right };

namespace detail {

inline double lane_gap(bool has, double gap) { return has ? gap : kNoLeaderGap; }

/// Incentive of moving into `target`, minus threshold; -inf when unsafe.
inline double change_incentive(double v, const LaneContext& cur, const LaneContext& target,
                               const IdmParams& idm, const MobilParams& mp) {
    if (!target.exists) return -std::numeric_limits<double>::infinity();
    // minimum physical gaps before a change may even be considered
    if (target.has_leader && target.leader_gap < 1.0 + 0.3 * v) return -std::numeric_limits<double>::infinity();
    if (target.has_follower && target.follower_gap < 1.0 + 0.3 * target.follower_v)
        return -std::numeric_limits<double>::infinity();

    const double a_self = idm_accel(v, cur.leader_v, lane_gap(cur.has_leader, cur.leader_gap), idm);
    const double a_self_new = idm_accel(v, target.leader_v, lane_gap(target.has_leader, target.leader_gap), idm);

    // new follower: its leader becomes the subject
    double d_follower_new = 0.0;
    if (target.has_follower) {
        const double before =
            idm_accel(target.follower_v, target.leader_v, target.follower_to_leader_gap, idm);
        const double after = idm_accel(target.follower_v, v, target.follower_gap, idm);
        if (after < -mp.b_safe) return -std::numeric_limits<double>::infinity();  // safety veto
        d_follower_new = after - before;
    }
    // old follower: loses the subject as leader
    double d_follower_old = 0.0;
    if (cur.has_follower) {
        const double before = idm_accel(cur.follower_v, v, cur.follower_gap, idm);
        const double after =
            idm_accel(cur.follower_v, cur.leader_v, cur.follower_to_leader_gap, idm);
        d_follower_old = after - before;
    }
    return (a_self_new - a_self) + mp.politeness * (d_follower_new + d_follower_old) + target.bias -
           mp.delta_a_th;
}

}  // namespace detail

/// MOBIL lane-change decision. Returns stay unless one side passes both the
/// safety criterion and the incentive threshold; ties break toward stay.
inline LaneChange mobil_decide(double v, const LaneContext& current, const LaneContext& left,
                               const LaneContext& right, const IdmParams& idm, const MobilParams& mp) {
    const double inc_left = detail::change_incentive(v, current, left, idm, mp);
    const double inc_right = detail::change_incentive(v, current, right, idm, mp);
    if (inc_left <= 0.0 && inc_right <= 0.0) return LaneChange::stay;
    return inc_left > inc_right ? LaneChange::left : LaneChange::right;
}

}  // namespace socmpc::sim
