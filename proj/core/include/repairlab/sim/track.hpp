#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace repairlab::sim {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double k) const { return {x * k, y * k}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Closed loop of waypoints in meters plus a road width.
struct TrackSpec {
    std::string name = "custom";
    std::vector<Vec2> waypoints;
    double width = 4.0;
};

/// Result of projecting a point onto the centerline.
struct Projection {
    double s = 0.0;            ///< arc length of the closest centerline point
    double signed_offset = 0;  ///< positive = left of the travel direction
    Vec2 point;
};

/// Top-down lookup of distance-from-centerline, used by the renderer.
struct GroundMap {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double cell = 0.05;
    int cols = 0;
    int rows = 0;
    std::vector<float> distance;  ///< unsigned lateral distance, +inf off the stamped band
    std::vector<float> arc;       ///< arc length of the nearest centerline sample

    /// Bilinear distance lookup; +inf outside the map.
    double distance_at(double x, double y) const;
    double arc_at(double x, double y) const;
};

/// Arc-length parameterized closed centerline (periodic centripetal Catmull-Rom spline
/// through every waypoint). Immutable after construction.
class Track {
public:
    explicit Track(const TrackSpec& spec);

    double length() const noexcept { return length_; }
    double width() const noexcept { return width_; }
    double half_width() const noexcept { return 0.5 * width_; }
    const std::string& name() const noexcept { return name_; }
    const std::vector<Vec2>& waypoints() const noexcept { return waypoints_; }

    /// Centerline position at arc length s (wrapped into [0, L)).
    Vec2 point_at(double s) const;
    /// Unit tangent at arc length s.
    Vec2 tangent_at(double s) const;
    /// Signed curvature at arc length s (positive = turning left).
    double curvature_at(double s) const;

    Projection project(Vec2 q) const;

    /// Dense centerline polyline (one vertex per arc-length table entry).
    const std::vector<Vec2>& samples() const noexcept { return samples_; }

    const GroundMap& ground_map() const noexcept { return ground_; }

    /// Raw spline evaluation by global parameter g in [0, n_segments).
    Vec2 spline_point(double g) const;
    Vec2 spline_derivative(double g) const;
    int segment_count() const noexcept { return static_cast<int>(waypoints_.size()); }

private:
    struct Segment {
        Vec2 p1, p2, m1, m2;  // cubic Hermite form over u in [0,1]
    };

    double wrap_s(double s) const;
    double wrap_g(double g) const;
    double param_at(double s) const;
    double arc_at_param(double g) const;
    void build_ground_map();

    std::string name_;
    std::vector<Vec2> waypoints_;
    double width_;
    std::vector<Segment> segments_;
    std::vector<double> table_g_;  // global parameter per table entry
    std::vector<double> table_s_;  // cumulative arc length per table entry
    std::vector<Vec2> samples_;
    double length_ = 0.0;
    GroundMap ground_;
};

/// Validates a spec and builds the track; throws std::invalid_argument on degenerate input.
Track build_track(const TrackSpec& spec);

/// Signed perpendicular distance to the centerline, positive on the left.
double cross_track_error(const Track& track, Vec2 position);

/// JSON form: {"name": str, "width": m, "waypoints": [[x, y], ...]}.
TrackSpec parse_track_spec(std::string_view json_text);
std::string track_spec_to_json(const TrackSpec& spec);

/// Shipped desk-scale loop (~110 m, left and right turns, width 4 m).
TrackSpec default_track_spec();

}  // namespace repairlab::sim
