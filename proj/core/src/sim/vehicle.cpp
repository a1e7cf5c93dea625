#include "repairlab/sim/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace repairlab::sim {

void SimConfig::validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("sim: dt must be positive");
    if (!(wheelbase > 0.0)) throw std::invalid_argument("sim: wheelbase must be positive");
    if (!(max_steer_angle > 0.0 && max_steer_angle < std::numbers::pi / 2))
        throw std::invalid_argument("sim: max_steer_angle must lie in (0, pi/2)");
    if (!(v_max > 0.0)) throw std::invalid_argument("sim: v_max must be positive");
    if (image_height <= 0 || image_width <= 0)
        throw std::invalid_argument("sim: image dimensions must be positive");
    if (!(camera_pitch > 0.0 && camera_pitch < std::numbers::pi / 2))
        throw std::invalid_argument("sim: camera_pitch must lie in (0, pi/2)");
    if (!(horizon_fraction >= 0.0 && horizon_fraction < 0.5))
        throw std::invalid_argument("sim: horizon_fraction must lie in [0, 0.5)");
    if (supersample < 1) throw std::invalid_argument("sim: supersample must be >= 1");
}

double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

VehicleState step_dynamics(const VehicleState& state, const ControlAction& action,
                           const SimConfig& config) {
    const ControlAction u = action.clamped();
    const double delta = u.steering * config.max_steer_angle;
    const double v = state.speed;
    VehicleState next;
    next.position = {state.position.x + v * std::cos(state.heading) * config.dt,
                     state.position.y + v * std::sin(state.heading) * config.dt};
    next.heading = wrap_angle(state.heading + v / config.wheelbase * std::tan(delta) * config.dt);
    const double accel = config.max_accel * u.throttle - config.drag * v;
    next.speed = std::clamp(v + accel * config.dt, 0.0, config.v_max);
    return next;
}

}  // namespace repairlab::sim
