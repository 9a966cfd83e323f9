#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace socmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// State of one vehicle in Frenet coordinates.
/// Component order everywhere in this library: (s, v, y, psi).
struct VehicleState {
    double s = 0.0;    ///< longitudinal position [m]
    double v = 0.0;    ///< speed [m/s]
    double y = 0.0;    ///< lateral position [m]
    double psi = 0.0;  ///< heading angle [rad]

    Eigen::Vector4d vec() const { return {s, v, y, psi}; }
    static VehicleState from_vec(const Eigen::Vector4d& x) {
        return VehicleState{x[0], x[1], x[2], x[3]};
    }
};

/// Control input of one vehicle.
struct ControlInput {
    double a = 0.0;        ///< acceleration [m/s^2]
    double delta_f = 0.0;  ///< front steering angle [rad]

    Eigen::Vector2d vec() const { return {a, delta_f}; }
    static ControlInput from_vec(const Eigen::Vector2d& u) { return ControlInput{u[0], u[1]}; }
};

/// Geometric vehicle parameters.
struct VehicleParams {
    double l_f = 1.5;     ///< gravity center to front axle [m]
    double l_r = 1.5;     ///< gravity center to rear axle [m]
    double length = 4.5;  ///< footprint length [m]
    double width = 1.8;   ///< footprint width [m]

    double wheelbase() const { return l_f + l_r; }
};

/// Neighbor slot roles around the ego, in fixed order.
enum class Slot : int { FV = 0, RV = 1, LFV = 2, LRV = 3, RFV = 4, RRV = 5 };

inline constexpr int kNumSlots = 6;
inline constexpr int kStateDim = 4;
inline constexpr int kControlDim = 2;

inline const char* slot_name(int i) {
    static constexpr const char* names[kNumSlots] = {"FV", "RV", "LFV", "LRV", "RFV", "RRV"};
    if (i < 0 || i >= kNumSlots) throw std::out_of_range("slot index");
    return names[i];
}

/// Parses a slot name ("FV", "RV", ...). Returns -1 for unknown names.
inline int slot_index(const std::string& name) {
    for (int i = 0; i < kNumSlots; ++i)
        if (name == slot_name(i)) return i;
    return -1;
}

/// Stacked state of ego + n surrounding vehicles with a per-slot presence mask.
/// Absent slots keep placeholder states that must never reach numeric results.
struct SystemState {
    VehicleState ego;
    std::vector<VehicleState> surr;
    std::vector<bool> present;

    SystemState() = default;
    explicit SystemState(int n) : surr(n), present(n, false) {}

    int n_surr() const { return static_cast<int>(surr.size()); }
    int dim() const { return kStateDim * (n_surr() + 1); }

    /// Row-block offset of vehicle i (0 = ego, 1..n = surr) in the flat vector.
    static int block(int vehicle) { return kStateDim * vehicle; }

    Vec flatten() const {
        Vec x(dim());
        x.segment<4>(0) = ego.vec();
        for (int i = 0; i < n_surr(); ++i) x.segment<4>(block(i + 1)) = surr[i].vec();
        return x;
    }

    static SystemState unflatten(const Vec& x, const std::vector<bool>& present) {
        const int n = static_cast<int>(present.size());
        if (x.size() != kStateDim * (n + 1)) throw std::invalid_argument("SystemState::unflatten: size mismatch");
        SystemState st(n);
        st.ego = VehicleState::from_vec(x.segment<4>(0));
        for (int i = 0; i < n; ++i) st.surr[i] = VehicleState::from_vec(x.segment<4>(block(i + 1)));
        st.present = present;
        return st;
    }
};

/// Stacked control vector. An ego-control instance carries zero surr blocks
/// and vice versa; the factory functions below enforce that.
struct SystemControl {
    ControlInput ego;
    std::vector<ControlInput> surr;
    std::vector<bool> present;

    SystemControl() = default;
    explicit SystemControl(int n) : surr(n), present(n, false) {}

    int n_surr() const { return static_cast<int>(surr.size()); }
    int dim() const { return kControlDim * (n_surr() + 1); }

    static SystemControl ego_control(const ControlInput& u, int n) {
        SystemControl c(n);
        c.ego = u;
        return c;
    }

    static SystemControl surr_control(const std::vector<ControlInput>& us, const std::vector<bool>& present) {
        SystemControl c(static_cast<int>(us.size()));
        c.surr = us;
        c.present = present;
        return c;
    }

    Vec flatten() const {
        Vec u = Vec::Zero(dim());
        u.segment<2>(0) = ego.vec();
        for (int i = 0; i < n_surr(); ++i)
            if (i < static_cast<int>(present.size()) && present[i]) u.segment<2>(kControlDim * (i + 1)) = surr[i].vec();
        return u;
    }
};

}  // namespace socmpc
