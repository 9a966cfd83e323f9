#pragma once

#include "socmpc/core/types.hpp"

#include <cmath>
#include <stdexcept>

namespace socmpc {

/// Small-angle linearization of the kinematic bicycle model at speed v_lin.
///
/// A and B carry the fixed sparsity
///     A = [[0,1,0,0],[0,0,0,0],[0,0,0,v],[0,0,0,0]]
///     B = [[0,0],[1,0],[0,0],[0, v/(l_r+l_f)]]
/// over the state (s, v, y, psi) and input (a, delta_f).
struct LinearizedVehicle {
    Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
    Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
    double v_lin = 0.0;
};

/// Continuous-time kinematic bicycle model. Returns (s_dot, v_dot, y_dot, psi_dot).
/// The slip angle phi = atan(l_r/(l_r+l_f) * tan(delta_f)) is computed internally.
inline Eigen::Vector4d bicycle_derivative(const VehicleState& x, const ControlInput& u, const VehicleParams& p) {
    if (std::abs(u.delta_f) >= M_PI / 2.0) throw std::domain_error("bicycle_derivative: |delta_f| >= pi/2");
    const double phi = std::atan(p.l_r / (p.l_r + p.l_f) * std::tan(u.delta_f));
    Eigen::Vector4d dx;
    dx[0] = x.v * std::cos(x.psi + phi);   // s_dot
    dx[1] = u.a;                           // v_dot
    dx[2] = x.v * std::sin(x.psi + phi);   // y_dot
    dx[3] = x.v / p.l_r * std::sin(phi);   // psi_dot
    return dx;
}

inline LinearizedVehicle linearize(double v_lin, const VehicleParams& p) {
    LinearizedVehicle lin;
    lin.v_lin = v_lin;
    lin.A(0, 1) = 1.0;
    lin.A(2, 3) = v_lin;
    lin.B(1, 0) = 1.0;
    lin.B(3, 1) = v_lin / (p.l_r + p.l_f);
    return lin;
}

/// Forward-Euler discretization: x' = (A dt + I) x + B dt u.
inline VehicleState discrete_step(const VehicleState& x, const ControlInput& u, const LinearizedVehicle& lin,
                                  double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("discrete_step: dt must be positive");
    const Eigen::Vector4d next =
        (lin.A * dt + Eigen::Matrix4d::Identity()) * x.vec() + lin.B * dt * u.vec();
    return VehicleState::from_vec(next);
}

}  // namespace socmpc
