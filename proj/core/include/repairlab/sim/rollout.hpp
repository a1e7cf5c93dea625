#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "repairlab/image.hpp"
#include "repairlab/sim/track.hpp"
#include "repairlab/sim/vehicle.hpp"

namespace repairlab::sim {

/// Pure-pursuit steering toward the centerline point one lookahead ahead of the
/// projection, plus proportional speed control around config.target_speed.
ControlAction expert_action(const Track& track, const VehicleState& state, const SimConfig& config);

/// Throttle that holds target_speed against drag; the expert never exceeds it when at or
/// above target speed.
double idle_throttle(const SimConfig& config);

/// Policies see the (possibly corrupted/repaired) image. The state argument is privileged
/// information that only the expert uses.
using Policy = std::function<ControlAction(const Image&, const VehicleState&)>;
using RepairFn = std::function<Image(const Image&)>;
/// Applied to the clean render before repair, keyed by step index.
using ObservationFn = std::function<Image(const Image&, int step)>;

Policy expert_policy(const Track& track, const SimConfig& config);
Policy image_policy(std::function<ControlAction(const Image&)> fn);

enum class Termination { Completed, OffTrack };

struct TrajectoryRecord {
    int t = 0;
    VehicleState state;
    Image observation;  ///< empty unless RolloutOptions::keep_observations
    ControlAction action;
    double cte = 0.0;
};

struct Trajectory {
    std::vector<TrajectoryRecord> records;
    Termination termination = Termination::Completed;
    int scheduled_steps = 0;

    std::vector<double> cte_values() const;
    /// CTE sequence with off-track padding: missing scheduled steps take `boundary`.
    std::vector<double> padded_cte(double boundary) const;
};

struct RolloutOptions {
    int max_steps = 600;
    double off_track_margin = 1.0;
    bool keep_observations = false;
    ObservationFn observe;  ///< corruption hook; identity when empty
    RepairFn repair;        ///< repair model; none when empty
};

/// render -> observe -> repair -> policy -> step, until max_steps or |cte| exceeds
/// half width + margin.
Trajectory rollout(const Policy& policy, const Track& track, const VehicleState& x0,
                   const SimConfig& config, const RolloutOptions& options);

/// Start pose on the centerline at arc length s, optionally offset laterally and rotated.
VehicleState pose_on_track(const Track& track, double s, double lateral_offset,
                           double heading_offset, double speed);

/// Saves (t, x, y, heading, speed, steering, throttle, cte) rows.
std::string trajectory_to_csv(const Trajectory& traj);

}  // namespace repairlab::sim
