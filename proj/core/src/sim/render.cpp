#include "repairlab/sim/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>

namespace repairlab::sim {

namespace {

using Rgb = std::array<float, 3>;

constexpr Rgb kSkyTop = {0.50f, 0.70f, 0.95f};
constexpr Rgb kSkyHorizon = {0.82f, 0.89f, 0.97f};
constexpr Rgb kGrassA = {0.20f, 0.52f, 0.20f};
constexpr Rgb kGrassB = {0.28f, 0.63f, 0.26f};
constexpr Rgb kGrassFar = {0.24f, 0.575f, 0.23f};
constexpr Rgb kRoad = {0.36f, 0.36f, 0.38f};
constexpr Rgb kEdgeLine = {0.95f, 0.95f, 0.95f};
constexpr Rgb kCenterLine = {0.92f, 0.80f, 0.20f};

constexpr double kEdgeLineWidth = 0.25;
constexpr double kCenterLineHalfWidth = 0.08;
constexpr double kDashPeriod = 2.0;
constexpr double kCheckerSize = 2.0;
constexpr double kFarDistance = 40.0;

enum class Surface { Sky, Grass, Road, Edge, Center, Far };

struct Camera {
    double f, cx, cy, sin_p, cos_p, height;
    Vec2 origin, forward, left;
};

Camera make_camera(const VehicleState& state, const SimConfig& config) {
    Camera cam{};
    const double h = config.image_height;
    cam.f = (0.5 * h - config.horizon_fraction * h) / std::tan(config.camera_pitch);
    cam.cx = 0.5 * config.image_width;
    cam.cy = 0.5 * h;
    cam.sin_p = std::sin(config.camera_pitch);
    cam.cos_p = std::cos(config.camera_pitch);
    cam.height = config.camera_height;
    cam.forward = {std::cos(state.heading), std::sin(state.heading)};
    cam.left = {-cam.forward.y, cam.forward.x};
    cam.origin = state.position + cam.forward * config.camera_forward;
    return cam;
}

struct Hit {
    Surface surface;
    Vec2 ground;
};

Hit cast(const Track& track, const Camera& cam, double u, double v) {
    const double xn = (u - cam.cx) / cam.f;
    const double yn = (v - cam.cy) / cam.f;
    const double denom = cam.sin_p + yn * cam.cos_p;
    if (denom <= 1e-9) return {Surface::Sky, {}};
    const double t = cam.height / denom;
    const double fwd = t * (cam.cos_p - yn * cam.sin_p);
    const double lat = -t * xn;
    const Vec2 g = cam.origin + cam.forward * fwd + cam.left * lat;
    if (fwd > kFarDistance) return {Surface::Far, g};
    const GroundMap& map = track.ground_map();
    const double d = map.distance_at(g.x, g.y);
    const double half = track.half_width();
    if (d >= half) return {Surface::Grass, g};
    if (d >= half - kEdgeLineWidth) return {Surface::Edge, g};
    if (d < kCenterLineHalfWidth) {
        const double phase = std::fmod(map.arc_at(g.x, g.y), kDashPeriod);
        if (phase < 0.5 * kDashPeriod) return {Surface::Center, g};
    }
    return {Surface::Road, g};
}

Rgb shade(const Hit& hit, double v, double horizon_row) {
    switch (hit.surface) {
        case Surface::Sky: {
            const double t = horizon_row > 0 ? std::clamp(v / horizon_row, 0.0, 1.0) : 1.0;
            Rgb c;
            for (int i = 0; i < 3; ++i)
                c[i] = static_cast<float>(kSkyTop[i] * (1 - t) + kSkyHorizon[i] * t);
            return c;
        }
        case Surface::Far: return kGrassFar;
        case Surface::Grass: {
            const auto cx = static_cast<long long>(std::floor(hit.ground.x / kCheckerSize));
            const auto cy = static_cast<long long>(std::floor(hit.ground.y / kCheckerSize));
            return ((cx + cy) & 1) ? kGrassA : kGrassB;
        }
        case Surface::Road: return kRoad;
        case Surface::Edge: return kEdgeLine;
        case Surface::Center: return kCenterLine;
    }
    return kRoad;
}

}  // namespace

Image render_observation(const Track& track, const VehicleState& state, const SimConfig& config) {
    config.validate();
    const Camera cam = make_camera(state, config);
    const int ss = config.supersample;
    const double horizon_row = cam.cy - cam.f * std::tan(config.camera_pitch);
    Image img(config.image_height, config.image_width);
    const float norm = 1.0f / static_cast<float>(ss * ss);
    for (int r = 0; r < config.image_height; ++r) {
        for (int c = 0; c < config.image_width; ++c) {
            Rgb acc = {0, 0, 0};
            for (int sy = 0; sy < ss; ++sy) {
                for (int sx = 0; sx < ss; ++sx) {
                    const double u = c + (sx + 0.5) / ss;
                    const double v = r + (sy + 0.5) / ss;
                    const Rgb col = shade(cast(track, cam, u, v), v, horizon_row);
                    for (int i = 0; i < 3; ++i) acc[i] += col[i];
                }
            }
            for (int i = 0; i < 3; ++i) img.at(r, c, i) = acc[i] * norm;
        }
    }
    quantize_8bit(img);
    return img;
}

std::vector<std::uint8_t> render_road_mask(const Track& track, const VehicleState& state,
                                           const SimConfig& config) {
    config.validate();
    const Camera cam = make_camera(state, config);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(config.image_height) * config.image_width, 0);
    for (int r = 0; r < config.image_height; ++r) {
        for (int c = 0; c < config.image_width; ++c) {
            const Surface s = cast(track, cam, c + 0.5, r + 0.5).surface;
            const bool road = s == Surface::Road || s == Surface::Edge || s == Surface::Center;
            mask[static_cast<std::size_t>(r) * config.image_width + c] = road ? 1 : 0;
        }
    }
    return mask;
}

}  // namespace repairlab::sim
