#include "repairlab/sim/track.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace repairlab::sim {

namespace {

constexpr int kTablePerSegment = 256;
constexpr double kStampBand = 1.2;  // meters beyond the road edge stamped into the ground map

// 5-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 5> kGlNodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                            0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGlWeights = {0.2369268850561891, 0.4786286704993665,
                                              0.5688888888888889, 0.4786286704993665,
                                              0.2369268850561891};

void validate(const TrackSpec& spec) {
    const auto& w = spec.waypoints;
    if (w.size() < 4) throw std::invalid_argument("track spec needs at least 4 waypoints");
    if (!(spec.width > 0.0) || !std::isfinite(spec.width))
        throw std::invalid_argument("track width must be positive");
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!std::isfinite(w[i].x) || !std::isfinite(w[i].y))
            throw std::invalid_argument("track waypoint " + std::to_string(i) + " is not finite");
        const Vec2 next = w[(i + 1) % w.size()];
        if ((next - w[i]).norm() < 1e-9)
            throw std::invalid_argument("track waypoints " + std::to_string(i) + " and " +
                                        std::to_string((i + 1) % w.size()) + " coincide");
    }
    double max_cross = 0.0;
    double scale = 0.0;
    for (std::size_t i = 1; i < w.size(); ++i) {
        scale = std::max(scale, (w[i] - w[0]).norm());
        for (std::size_t j = i + 1; j < w.size(); ++j)
            max_cross = std::max(max_cross, std::abs((w[i] - w[0]).cross(w[j] - w[0])));
    }
    if (max_cross <= 1e-9 * scale * scale)
        throw std::invalid_argument("track waypoints are collinear");
}

}  // namespace

double GroundMap::distance_at(double x, double y) const {
    const double fx = (x - origin_x) / cell - 0.5;
    const double fy = (y - origin_y) / cell - 0.5;
    if (!(fx >= 0.0 && fy >= 0.0 && fx < cols - 1 && fy < rows - 1))
        return std::numeric_limits<double>::infinity();
    const int ix = static_cast<int>(fx);
    const int iy = static_cast<int>(fy);
    const double tx = fx - ix;
    const double ty = fy - iy;
    const auto at = [&](int cx, int cy) {
        return static_cast<double>(distance[static_cast<std::size_t>(cy) * cols + cx]);
    };
    const double d00 = at(ix, iy), d10 = at(ix + 1, iy), d01 = at(ix, iy + 1),
                 d11 = at(ix + 1, iy + 1);
    if (!std::isfinite(d00) || !std::isfinite(d10) || !std::isfinite(d01) || !std::isfinite(d11)) {
        // Band edge: fall back to nearest cell.
        return at(static_cast<int>(std::lround(fx)), static_cast<int>(std::lround(fy)));
    }
    return (d00 * (1 - tx) + d10 * tx) * (1 - ty) + (d01 * (1 - tx) + d11 * tx) * ty;
}

double GroundMap::arc_at(double x, double y) const {
    const int ix = static_cast<int>(std::floor((x - origin_x) / cell));
    const int iy = static_cast<int>(std::floor((y - origin_y) / cell));
    if (ix < 0 || iy < 0 || ix >= cols || iy >= rows) return 0.0;
    return arc[static_cast<std::size_t>(iy) * cols + ix];
}

Track::Track(const TrackSpec& spec) : name_(spec.name), waypoints_(spec.waypoints), width_(spec.width) {
    validate(spec);
    const int n = static_cast<int>(waypoints_.size());
    segments_.reserve(n);
    for (int i = 0; i < n; ++i) {
        const Vec2 p0 = waypoints_[(i + n - 1) % n];
        const Vec2 p1 = waypoints_[i];
        const Vec2 p2 = waypoints_[(i + 1) % n];
        const Vec2 p3 = waypoints_[(i + 2) % n];
        // Centripetal knot spacing.
        const double t01 = std::sqrt((p1 - p0).norm());
        const double t12 = std::sqrt((p2 - p1).norm());
        const double t23 = std::sqrt((p3 - p2).norm());
        const Vec2 m1 = ((p1 - p0) * (1.0 / t01) - (p2 - p0) * (1.0 / (t01 + t12)) +
                         (p2 - p1) * (1.0 / t12)) * t12;
        const Vec2 m2 = ((p2 - p1) * (1.0 / t12) - (p3 - p1) * (1.0 / (t12 + t23)) +
                         (p3 - p2) * (1.0 / t23)) * t12;
        segments_.push_back({p1, p2, m1, m2});
    }

    const int entries = n * kTablePerSegment;
    table_g_.resize(entries + 1);
    table_s_.resize(entries + 1);
    samples_.resize(entries);
    table_g_[0] = 0.0;
    table_s_[0] = 0.0;
    const double dg = 1.0 / kTablePerSegment;
    for (int k = 0; k < entries; ++k) {
        const double g0 = k * dg;
        double acc = 0.0;
        for (std::size_t q = 0; q < kGlNodes.size(); ++q) {
            const double g = g0 + 0.5 * dg * (kGlNodes[q] + 1.0);
            acc += kGlWeights[q] * spline_derivative(g).norm();
        }
        table_g_[k + 1] = (k + 1) * dg;
        table_s_[k + 1] = table_s_[k] + 0.5 * dg * acc;
        samples_[k] = spline_point(g0);
    }
    length_ = table_s_.back();
    build_ground_map();
}

Vec2 Track::spline_point(double g) const {
    g = wrap_g(g);
    const int n = segment_count();
    int i = std::min(static_cast<int>(g), n - 1);
    const double u = g - i;
    const Segment& sg = segments_[i];
    const double u2 = u * u, u3 = u2 * u;
    return sg.p1 * (2 * u3 - 3 * u2 + 1) + sg.m1 * (u3 - 2 * u2 + u) + sg.p2 * (-2 * u3 + 3 * u2) +
           sg.m2 * (u3 - u2);
}

Vec2 Track::spline_derivative(double g) const {
    g = wrap_g(g);
    const int n = segment_count();
    int i = std::min(static_cast<int>(g), n - 1);
    const double u = g - i;
    const Segment& sg = segments_[i];
    const double u2 = u * u;
    return sg.p1 * (6 * u2 - 6 * u) + sg.m1 * (3 * u2 - 4 * u + 1) + sg.p2 * (-6 * u2 + 6 * u) +
           sg.m2 * (3 * u2 - 2 * u);
}

namespace {

Vec2 hermite_second(const Vec2& p1, const Vec2& m1, const Vec2& p2, const Vec2& m2, double u) {
    return p1 * (12 * u - 6) + m1 * (6 * u - 4) + p2 * (-12 * u + 6) + m2 * (6 * u - 2);
}

}  // namespace

double Track::wrap_s(double s) const {
    s = std::fmod(s, length_);
    if (s < 0) s += length_;
    return s;
}

double Track::wrap_g(double g) const {
    const double n = segment_count();
    g = std::fmod(g, n);
    if (g < 0) g += n;
    return g;
}

double Track::arc_at_param(double g) const {
    g = wrap_g(g);
    const double dg = 1.0 / kTablePerSegment;
    const auto k = std::min(static_cast<std::size_t>(g / dg), table_g_.size() - 2);
    const double g0 = table_g_[k];
    const double h = g - g0;
    double acc = 0.0;
    for (std::size_t q = 0; q < kGlNodes.size(); ++q) {
        acc += kGlWeights[q] * spline_derivative(g0 + 0.5 * h * (kGlNodes[q] + 1.0)).norm();
    }
    return table_s_[k] + 0.5 * h * acc;
}

double Track::param_at(double s) const {
    s = wrap_s(s);
    auto it = std::upper_bound(table_s_.begin(), table_s_.end(), s);
    const auto k = static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(std::distance(table_s_.begin(), it) - 1, 0,
                                   static_cast<std::ptrdiff_t>(table_s_.size()) - 2));
    const double ds = table_s_[k + 1] - table_s_[k];
    double g = table_g_[k] + (ds > 0 ? (s - table_s_[k]) / ds : 0.0) * (table_g_[k + 1] - table_g_[k]);
    for (int iter = 0; iter < 3; ++iter) {
        const double speed = spline_derivative(g).norm();
        if (speed <= 0) break;
        g -= (arc_at_param(g) - s) / speed;
        g = std::clamp(g, table_g_[k], table_g_[k + 1]);
    }
    return g;
}

Vec2 Track::point_at(double s) const { return spline_point(param_at(s)); }

Vec2 Track::tangent_at(double s) const {
    const Vec2 d = spline_derivative(param_at(s));
    return d * (1.0 / d.norm());
}

double Track::curvature_at(double s) const {
    const double g = param_at(s);
    const Vec2 d1 = spline_derivative(g);
    const int n = segment_count();
    const double gw = wrap_g(g);
    const int i = std::min(static_cast<int>(gw), n - 1);
    const Segment& sg = segments_[i];
    const Vec2 d2 = hermite_second(sg.p1, sg.m1, sg.p2, sg.m2, gw - i);
    const double speed = d1.norm();
    return d1.cross(d2) / (speed * speed * speed);
}

Projection Track::project(Vec2 q) const {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const Vec2 d = samples_[i] - q;
        const double d2 = d.dot(d);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    const double dg = 1.0 / kTablePerSegment;
    const double g_center = table_g_[best];
    double g = g_center;
    const int n = segment_count();
    for (int iter = 0; iter < 12; ++iter) {
        const Vec2 p = spline_point(g);
        const Vec2 d1 = spline_derivative(g);
        const double gw = wrap_g(g);
        const int i = std::min(static_cast<int>(gw), n - 1);
        const Segment& sg = segments_[i];
        const Vec2 d2 = hermite_second(sg.p1, sg.m1, sg.p2, sg.m2, gw - i);
        const Vec2 r = p - q;
        const double f = r.dot(d1);
        const double fp = d1.dot(d1) + r.dot(d2);
        if (fp <= 0) break;
        const double step = f / fp;
        g = std::clamp(g - step, g_center - 2 * dg, g_center + 2 * dg);
        if (std::abs(step) < 1e-14) break;
    }
    Projection out;
    out.point = spline_point(g);
    const Vec2 d1 = spline_derivative(g);
    const Vec2 tangent = d1 * (1.0 / d1.norm());
    out.signed_offset = tangent.cross(q - out.point);
    out.s = wrap_s(arc_at_param(g));
    return out;
}

void Track::build_ground_map() {
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    double max_x = -min_x, max_y = -min_x;
    for (const Vec2& p : samples_) {
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
        max_x = std::max(max_x, p.x);
        max_y = std::max(max_y, p.y);
    }
    const double reach = half_width() + kStampBand;
    ground_.cell = 0.05;
    ground_.origin_x = min_x - reach - ground_.cell;
    ground_.origin_y = min_y - reach - ground_.cell;
    ground_.cols = static_cast<int>(std::ceil((max_x - min_x + 2 * reach) / ground_.cell)) + 3;
    ground_.rows = static_cast<int>(std::ceil((max_y - min_y + 2 * reach) / ground_.cell)) + 3;
    const auto cells = static_cast<std::size_t>(ground_.cols) * ground_.rows;
    ground_.distance.assign(cells, std::numeric_limits<float>::infinity());
    ground_.arc.assign(cells, 0.0f);

    const double step = 0.5 * ground_.cell;
    const int along = static_cast<int>(std::ceil(length_ / step));
    const int across = static_cast<int>(std::ceil(reach / step));
    for (int k = 0; k < along; ++k) {
        const double s = k * length_ / along;
        const double g = param_at(s);
        const Vec2 c = spline_point(g);
        const Vec2 d = spline_derivative(g);
        const Vec2 normal = Vec2{-d.y, d.x} * (1.0 / d.norm());
        for (int j = -across; j <= across; ++j) {
            const double off = j * step;
            const Vec2 p = c + normal * off;
            const int ix = static_cast<int>(std::floor((p.x - ground_.origin_x) / ground_.cell));
            const int iy = static_cast<int>(std::floor((p.y - ground_.origin_y) / ground_.cell));
            if (ix < 0 || iy < 0 || ix >= ground_.cols || iy >= ground_.rows) continue;
            // Distance from the cell center to the centerline point, measured along the normal.
            const double cx = ground_.origin_x + (ix + 0.5) * ground_.cell;
            const double cy = ground_.origin_y + (iy + 0.5) * ground_.cell;
            const double lateral = std::abs(normal.dot(Vec2{cx, cy} - c));
            const auto idx = static_cast<std::size_t>(iy) * ground_.cols + ix;
            if (lateral < ground_.distance[idx]) {
                ground_.distance[idx] = static_cast<float>(lateral);
                ground_.arc[idx] = static_cast<float>(s);
            }
        }
    }
}

Track build_track(const TrackSpec& spec) { return Track(spec); }

double cross_track_error(const Track& track, Vec2 position) {
    return track.project(position).signed_offset;
}

TrackSpec parse_track_spec(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("track spec is not valid JSON: ") + e.what());
    }
    TrackSpec spec;
    spec.name = j.value("name", std::string("custom"));
    if (!j.contains("width") || !j.contains("waypoints"))
        throw std::invalid_argument("track spec requires 'width' and 'waypoints'");
    spec.width = j.at("width").get<double>();
    for (const auto& wp : j.at("waypoints")) {
        if (!wp.is_array() || wp.size() != 2)
            throw std::invalid_argument("each waypoint must be an [x, y] pair");
        spec.waypoints.push_back({wp[0].get<double>(), wp[1].get<double>()});
    }
    return spec;
}

std::string track_spec_to_json(const TrackSpec& spec) {
    nlohmann::json j;
    j["name"] = spec.name;
    j["width"] = spec.width;
    j["waypoints"] = nlohmann::json::array();
    for (const Vec2& p : spec.waypoints) j["waypoints"].push_back({p.x, p.y});
    return j.dump(2);
}

TrackSpec default_track_spec() {
    TrackSpec spec;
    spec.name = "default";
    spec.width = 4.0;
    spec.waypoints = {{0, 0},   {12, 0},  {22, 0},  {30, 3},  {34, 10}, {32, 18}, {25, 21}, {18, 18},
                      {12, 16}, {6, 19},  {0, 24},  {-7, 23}, {-11, 17}, {-11, 9}, {-8, 3}};
    return spec;
}

}  // namespace repairlab::sim
