#pragma once

#include "repairlab/image.hpp"
#include "repairlab/sim/track.hpp"

namespace repairlab::sim {

/// Rear-axle pose plus forward speed.
struct VehicleState {
    Vec2 position;
    double heading = 0.0;  ///< radians, wrapped to (-pi, pi]
    double speed = 0.0;    ///< m/s, in [0, v_max]

    friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct SimConfig {
    double dt = 0.05;
    double wheelbase = 1.0;
    double max_steer_angle = 0.5;
    double v_max = 10.0;
    double max_accel = 4.0;    ///< acceleration at full throttle, m/s^2
    double drag = 0.3;         ///< linear speed drag, 1/s
    double target_speed = 6.0; ///< expert cruise speed, m/s

    int image_height = 120;
    int image_width = 160;
    double camera_height = 1.2;
    double camera_pitch = 0.25;      ///< radians below horizontal
    double camera_forward = 0.5;     ///< camera offset ahead of the rear axle, m
    double horizon_fraction = 0.35;  ///< image row fraction where the horizon sits
    int supersample = 2;             ///< per-axis subpixel samples

    void validate() const;
};

double wrap_angle(double a);

/// One kinematic-bicycle step. Out-of-range actions are clamped first.
/// Positive steering turns left (heading increases).
VehicleState step_dynamics(const VehicleState& state, const ControlAction& action,
                           const SimConfig& config);

}  // namespace repairlab::sim
