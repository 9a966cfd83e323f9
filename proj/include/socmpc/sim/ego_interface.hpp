#pragma once

#include "socmpc/core/frame.hpp"

namespace socmpc::sim {

/// What an ego planner sees each cycle: a frame-shaped view of the world
/// (history tracks, maps, neighbor slots; no future), plus the driving task.
struct EgoObservation {
    Frame frame;          ///< future tracks empty; slots assigned around the ego
    double t = 0.0;       ///< simulation time [s]
    double dt = 0.1;
    double target_y = 0.0;       ///< lateral center of the task lane [m]
    double lane_width = 3.5;
    double desired_speed = 15.0; ///< task speed [m/s]
    double ramp_start = 0.0;     ///< longitudinal window of the off-ramp [m]
    double ramp_end = 0.0;
};

/// One controller instance per episode; implementations may keep state
/// (warm starts, lane-change progress) between cycles.
class EgoPlanner {
public:
    virtual ~EgoPlanner() = default;
    virtual ControlInput act(const EgoObservation& obs) = 0;
    virtual const char* name() const = 0;
};

}  // namespace socmpc::sim
