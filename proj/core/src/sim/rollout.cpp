#include "repairlab/sim/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "repairlab/sim/render.hpp"

namespace repairlab::sim {

namespace {
constexpr double kLookaheadGain = 1.5;
constexpr double kSpeedGain = 0.5;
}  // namespace

double idle_throttle(const SimConfig& config) {
    return std::clamp(config.drag * config.target_speed / config.max_accel, 0.0, 1.0);
}

ControlAction expert_action(const Track& track, const VehicleState& state, const SimConfig& config) {
    const double lookahead =
        kLookaheadGain * config.wheelbase * (1.0 + state.speed / config.v_max);
    const Projection proj = track.project(state.position);
    const Vec2 target = track.point_at(proj.s + lookahead);
    const Vec2 d = target - state.position;
    const double alpha = wrap_angle(std::atan2(d.y, d.x) - state.heading);
    const double ld = std::max(d.norm(), 1e-6);
    const double delta = std::atan2(2.0 * config.wheelbase * std::sin(alpha), ld);
    ControlAction u;
    u.steering = delta / config.max_steer_angle;
    u.throttle = idle_throttle(config) + kSpeedGain * (config.target_speed - state.speed);
    return u.clamped();
}

Policy expert_policy(const Track& track, const SimConfig& config) {
    return [&track, config](const Image&, const VehicleState& state) {
        return expert_action(track, state, config);
    };
}

Policy image_policy(std::function<ControlAction(const Image&)> fn) {
    return [fn = std::move(fn)](const Image& img, const VehicleState&) { return fn(img); };
}

std::vector<double> Trajectory::cte_values() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.cte);
    return out;
}

std::vector<double> Trajectory::padded_cte(double boundary) const {
    std::vector<double> out = cte_values();
    const int missing = std::max(0, scheduled_steps - static_cast<int>(records.size()));
    out.insert(out.end(), static_cast<std::size_t>(missing), boundary);
    return out;
}

Trajectory rollout(const Policy& policy, const Track& track, const VehicleState& x0,
                   const SimConfig& config, const RolloutOptions& options) {
    if (options.max_steps <= 0) throw std::invalid_argument("rollout: max_steps must be positive");
    if (!policy) throw std::invalid_argument("rollout: policy is empty");
    config.validate();
    const double limit = track.half_width() + options.off_track_margin;
    Trajectory traj;
    traj.scheduled_steps = options.max_steps;
    traj.records.reserve(static_cast<std::size_t>(options.max_steps));
    VehicleState state = x0;
    for (int t = 0; t < options.max_steps; ++t) {
        const double cte = cross_track_error(track, state.position);
        if (!(std::abs(cte) <= limit)) {
            traj.termination = Termination::OffTrack;
            return traj;
        }
        Image obs = render_observation(track, state, config);
        Image seen = options.observe ? options.observe(obs, t) : obs;
        if (options.repair) seen = options.repair(seen);
        const ControlAction action = policy(seen, state);
        if (!action.finite())
            throw std::runtime_error("rollout: policy returned a non-finite action at step " +
                                     std::to_string(t));
        TrajectoryRecord rec;
        rec.t = t;
        rec.state = state;
        rec.action = action;
        rec.cte = cte;
        if (options.keep_observations) rec.observation = std::move(obs);
        traj.records.push_back(std::move(rec));
        state = step_dynamics(state, action, config);
    }
    traj.termination = Termination::Completed;
    return traj;
}

VehicleState pose_on_track(const Track& track, double s, double lateral_offset,
                           double heading_offset, double speed) {
    const Vec2 c = track.point_at(s);
    const Vec2 t = track.tangent_at(s);
    const Vec2 n{-t.y, t.x};
    VehicleState st;
    st.position = c + n * lateral_offset;
    st.heading = wrap_angle(std::atan2(t.y, t.x) + heading_offset);
    st.speed = speed;
    return st;
}

std::string trajectory_to_csv(const Trajectory& traj) {
    std::ostringstream os;
    os.precision(17);
    os << "t,x,y,heading,speed,steering,throttle,cte\n";
    for (const auto& r : traj.records) {
        os << r.t << ',' << r.state.position.x << ',' << r.state.position.y << ',' << r.state.heading
           << ',' << r.state.speed << ',' << r.action.steering << ',' << r.action.throttle << ','
           << r.cte << '\n';
    }
    return os.str();
}

}  // namespace repairlab::sim
