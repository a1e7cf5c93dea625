#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "repairlab/image.hpp"
#include "repairlab/sim/track.hpp"
#include "repairlab/sim/vehicle.hpp"

namespace repairlab::fixtures {

/// Counter-clockwise rectangle with waypoints every `spacing` meters. The bottom edge
/// runs along +x at y = 0, so it is an exactly straight stretch of centerline.
inline sim::TrackSpec rectangle_track(double length = 120.0, double height = 30.0,
                                      double spacing = 5.0, double width = 4.0) {
    sim::TrackSpec spec;
    spec.name = "rectangle";
    spec.width = width;
    for (double x = 0; x < length; x += spacing) spec.waypoints.push_back({x, 0});
    for (double y = 0; y < height; y += spacing) spec.waypoints.push_back({length, y});
    for (double x = length; x > 0; x -= spacing) spec.waypoints.push_back({x, height});
    for (double y = height; y > 0; y -= spacing) spec.waypoints.push_back({0, y});
    return spec;
}

inline sim::TrackSpec circle_track(double radius, int points, double width = 4.0) {
    sim::TrackSpec spec;
    spec.name = "circle";
    spec.width = width;
    for (int i = 0; i < points; ++i) {
        const double a = 2.0 * M_PI * i / points;
        spec.waypoints.push_back({radius * std::cos(a), radius * std::sin(a)});
    }
    return spec;
}

/// Small, fast-rendering camera for tests.
inline sim::SimConfig small_camera(int h = 32, int w = 48) {
    sim::SimConfig c;
    c.image_height = h;
    c.image_width = w;
    return c;
}

/// Deterministic smooth test image.
inline Image gradient_image(int h, int w, float phase = 0.0f) {
    Image img(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) =
                    0.5f + 0.4f * std::sin(0.3f * r + 0.2f * c + phase + 1.3f * static_cast<float>(ch));
    return img;
}

/// Fresh scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() / ("repairlab_" + tag);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace repairlab::fixtures
