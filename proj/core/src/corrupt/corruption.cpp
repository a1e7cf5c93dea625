#include "repairlab/corrupt/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "repairlab/rng.hpp"

namespace repairlab::corrupt {

namespace {

// Counter-RNG stream ids, one per random quantity.
constexpr std::uint64_t kStreamSpHit = 1;
constexpr std::uint64_t kStreamSpSalt = 2;
constexpr std::uint64_t kStreamRain = 3;
constexpr std::uint64_t kStreamSnow = 4;
constexpr std::uint64_t kStreamDataset = 5;

constexpr std::array<float, 3> kStreakColor = {0.86f, 0.88f, 0.93f};
constexpr float kFlakeValue = 1.0f;
constexpr double kFogContrastLoss = 0.5;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("corruption: " + msg);
}

std::vector<std::uint8_t> stamp_discs(int h, int w, int n, double radius, std::uint64_t seed) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w, 0);
    const CounterRng rng(seed);
    for (int i = 0; i < n; ++i) {
        const double cx = rng.uniform(kStreamSnow, 2ULL * i) * w;
        const double cy = rng.uniform(kStreamSnow, 2ULL * i + 1) * h;
        const int r0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
        const int r1 = std::min(h - 1, static_cast<int>(std::ceil(cy + radius)));
        const int c0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
        const int c1 = std::min(w - 1, static_cast<int>(std::ceil(cx + radius)));
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                const double dx = c + 0.5 - cx, dy = r + 0.5 - cy;
                if (dx * dx + dy * dy <= radius * radius) mask[static_cast<std::size_t>(r) * w + c] = 1;
            }
    }
    return mask;
}

}  // namespace

std::string_view kind_name(Kind kind) {
    switch (kind) {
        case Kind::None: return "none";
        case Kind::Darken: return "darken";
        case Kind::SaltPepper: return "salt_pepper";
        case Kind::Rain: return "rain";
        case Kind::Fog: return "fog";
        case Kind::Snow: return "snow";
    }
    return "none";
}

Kind parse_kind(std::string_view name) {
    for (Kind k : {Kind::None, Kind::Darken, Kind::SaltPepper, Kind::Rain, Kind::Fog, Kind::Snow})
        if (kind_name(k) == name) return k;
    throw std::invalid_argument("unknown corruption kind: " + std::string(name));
}

void CorruptionSpec::validate() const {
    std::visit(Overloaded{
                   [](const NoParams&) {},
                   [](const DarkenParams& p) {
                       require(p.coeff > 0.0 && p.coeff <= 1.0, "darken.coeff must lie in (0, 1]");
                   },
                   [](const SaltPepperParams& p) {
                       require(p.p >= 0.0 && p.p <= 1.0, "salt_pepper.p must lie in [0, 1]");
                   },
                   [](const RainParams& p) {
                       require(p.n_streaks >= 0, "rain.n_streaks must be >= 0");
                       require(std::isfinite(p.angle_deg), "rain.angle_deg must be finite");
                       require(p.opacity >= 0.0 && p.opacity <= 1.0, "rain.opacity must lie in [0, 1]");
                   },
                   [](const FogParams& p) {
                       require(p.density >= 0.0 && p.density <= 1.0, "fog.density must lie in [0, 1]");
                       for (float c : p.color)
                           require(c >= 0.0f && c <= 1.0f, "fog.color must lie in [0, 1]");
                   },
                   [](const SnowParams& p) {
                       require(p.n_flakes >= 0, "snow.n_flakes must be >= 0");
                       require(p.radius_px >= 0.0, "snow.radius_px must be >= 0");
                       require(p.brightness_lift >= 0.0 && p.brightness_lift <= 1.0,
                               "snow.brightness_lift must lie in [0, 1]");
                   },
               },
               params);
}

CorruptionSpec default_spec(Kind kind, std::uint64_t seed, int image_height, int image_width) {
    const double area_scale = static_cast<double>(image_height) * image_width / (120.0 * 160.0);
    const double length_scale = image_height / 120.0;
    CorruptionSpec spec;
    spec.seed = seed;
    switch (kind) {
        case Kind::None: spec.params = NoParams{}; break;
        case Kind::Darken: spec.params = DarkenParams{}; break;
        case Kind::SaltPepper: spec.params = SaltPepperParams{}; break;
        case Kind::Rain: {
            RainParams p;
            p.n_streaks = std::max(1, static_cast<int>(std::lround(p.n_streaks * area_scale)));
            spec.params = p;
            break;
        }
        case Kind::Fog: spec.params = FogParams{}; break;
        case Kind::Snow: {
            SnowParams p;
            p.n_flakes = std::max(1, static_cast<int>(std::lround(p.n_flakes * area_scale)));
            p.radius_px = std::max(0.75, p.radius_px * length_scale);
            spec.params = p;
            break;
        }
    }
    return spec;
}

Image darken(const Image& y, double coeff) {
    Image out = y;
    const auto k = static_cast<float>(coeff);
    for (float& v : out.data()) v *= k;
    clamp_unit(out);
    return out;
}

Image salt_pepper(const Image& y, double p, std::uint64_t seed) {
    Image out = y;
    if (p <= 0.0) return out;
    const CounterRng rng(seed);
    const int w = y.width();
    for (int r = 0; r < y.height(); ++r) {
        for (int c = 0; c < w; ++c) {
            const auto idx = static_cast<std::uint64_t>(r) * w + c;
            if (rng.uniform(kStreamSpHit, idx) >= p) continue;
            const float value = rng.uniform(kStreamSpSalt, idx) < 0.5 ? 0.0f : 1.0f;
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = value;
        }
    }
    return out;
}

Image rain_blur(const Image& y) {
    const int h = y.height(), w = y.width();
    Image tmp(h, w), out(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                const float l = y.at(r, std::max(c - 1, 0), ch);
                const float m = y.at(r, c, ch);
                const float rt = y.at(r, std::min(c + 1, w - 1), ch);
                tmp.at(r, c, ch) = 0.25f * l + 0.5f * m + 0.25f * rt;
            }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                const float u = tmp.at(std::max(r - 1, 0), c, ch);
                const float m = tmp.at(r, c, ch);
                const float d = tmp.at(std::min(r + 1, h - 1), c, ch);
                out.at(r, c, ch) = 0.25f * u + 0.5f * m + 0.25f * d;
            }
    clamp_unit(out);
    return out;
}

std::vector<std::uint8_t> rain_streak_mask(int height, int width, int n_streaks, double angle_deg,
                                           std::uint64_t seed) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(height) * width, 0);
    const CounterRng rng(seed);
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double dir_x = std::sin(a), dir_y = std::cos(a);
    for (int i = 0; i < n_streaks; ++i) {
        const auto base = 3ULL * static_cast<std::uint64_t>(i);
        const double x0 = rng.uniform(kStreamRain, base) * width;
        const double y0 = rng.uniform(kStreamRain, base + 1) * height;
        const double len = height * (0.08 + 0.12 * rng.uniform(kStreamRain, base + 2));
        const int steps = static_cast<int>(std::ceil(2.0 * len));
        for (int k = 0; k <= steps; ++k) {
            const double t = len * k / std::max(steps, 1);
            const int c = static_cast<int>(std::floor(x0 + dir_x * t));
            const int r = static_cast<int>(std::floor(y0 + dir_y * t));
            if (r < 0 || c < 0 || r >= height || c >= width) continue;
            mask[static_cast<std::size_t>(r) * width + c] = 1;
        }
    }
    return mask;
}

Image rain(const Image& y, int n_streaks, double angle_deg, double opacity, std::uint64_t seed) {
    Image out = rain_blur(y);
    if (n_streaks <= 0 || opacity <= 0.0) return out;
    const auto mask = rain_streak_mask(y.height(), y.width(), n_streaks, angle_deg, seed);
    const auto alpha = static_cast<float>(opacity);
    for (int r = 0; r < y.height(); ++r)
        for (int c = 0; c < y.width(); ++c) {
            if (!mask[static_cast<std::size_t>(r) * y.width() + c]) continue;
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) = (1.0f - alpha) * out.at(r, c, ch) + alpha * kStreakColor[ch];
        }
    clamp_unit(out);
    return out;
}

Image fog_blend(const Image& y, double density, std::array<float, 3> color) {
    Image out = y;
    const auto d = static_cast<float>(density);
    for (int r = 0; r < y.height(); ++r)
        for (int c = 0; c < y.width(); ++c)
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) = y.at(r, c, ch) * (1.0f - d) + color[ch] * d;
    return out;
}

Image fog(const Image& y, double density, std::array<float, 3> color) {
    if (density <= 0.0) return y;
    Image out = fog_blend(y, density, color);
    // Contrast reduction toward the fog color, proportional to density.
    const auto keep = static_cast<float>(1.0 - kFogContrastLoss * density);
    for (int r = 0; r < y.height(); ++r)
        for (int c = 0; c < y.width(); ++c)
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) = color[ch] + (out.at(r, c, ch) - color[ch]) * keep;
    clamp_unit(out);
    return out;
}

std::vector<std::uint8_t> snow_flake_mask(int height, int width, int n_flakes, double radius_px,
                                          std::uint64_t seed) {
    return stamp_discs(height, width, n_flakes, radius_px, seed);
}

Image snow(const Image& y, int n_flakes, double radius_px, double brightness_lift, std::uint64_t seed) {
    Image out = y;
    if (n_flakes > 0 && radius_px > 0.0) {
        const auto mask = stamp_discs(y.height(), y.width(), n_flakes, radius_px, seed);
        for (int r = 0; r < y.height(); ++r)
            for (int c = 0; c < y.width(); ++c)
                if (mask[static_cast<std::size_t>(r) * y.width() + c])
                    for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = kFlakeValue;
    }
    if (brightness_lift > 0.0) {
        const auto lift = static_cast<float>(brightness_lift);
        for (float& v : out.data()) v = std::min(1.0f, v + lift);
    }
    return out;
}

Image apply_corruption(const Image& y, const CorruptionSpec& spec) {
    spec.validate();
    return std::visit(
        Overloaded{
            [&](const NoParams&) { return y; },
            [&](const DarkenParams& p) { return darken(y, p.coeff); },
            [&](const SaltPepperParams& p) { return salt_pepper(y, p.p, spec.seed); },
            [&](const RainParams& p) { return rain(y, p.n_streaks, p.angle_deg, p.opacity, spec.seed); },
            [&](const FogParams& p) { return fog(y, p.density, p.color); },
            [&](const SnowParams& p) {
                return snow(y, p.n_flakes, p.radius_px, p.brightness_lift, spec.seed);
            },
        },
        spec.params);
}

std::uint64_t stream_seed(std::uint64_t stream, std::uint64_t index) {
    return CounterRng(stream).bits(kStreamDataset, index);
}

std::vector<Image> corrupt_dataset(const std::vector<Image>& images, const CorruptionSpec& spec,
                                   std::uint64_t stream) {
    std::vector<Image> out;
    out.reserve(images.size());
    CorruptionSpec s = spec;
    for (std::size_t i = 0; i < images.size(); ++i) {
        s.seed = stream_seed(stream, i);
        out.push_back(apply_corruption(images[i], s));
    }
    return out;
}

nlohmann::json to_json(const CorruptionSpec& spec) {
    nlohmann::json j;
    j["kind"] = std::string(kind_name(spec.kind()));
    j["seed"] = spec.seed;
    std::visit(Overloaded{
                   [](const NoParams&) {},
                   [&](const DarkenParams& p) { j["coeff"] = p.coeff; },
                   [&](const SaltPepperParams& p) { j["p"] = p.p; },
                   [&](const RainParams& p) {
                       j["n_streaks"] = p.n_streaks;
                       j["angle_deg"] = p.angle_deg;
                       j["opacity"] = p.opacity;
                   },
                   [&](const FogParams& p) {
                       j["density"] = p.density;
                       j["color"] = p.color;
                   },
                   [&](const SnowParams& p) {
                       j["n_flakes"] = p.n_flakes;
                       j["radius_px"] = p.radius_px;
                       j["brightness_lift"] = p.brightness_lift;
                   },
               },
               spec.params);
    return j;
}

CorruptionSpec corruption_from_json(const nlohmann::json& j) {
    const Kind kind = parse_kind(j.at("kind").get<std::string>());
    CorruptionSpec spec = default_spec(kind, j.value("seed", std::uint64_t{0}));
    std::visit(Overloaded{
                   [](NoParams&) {},
                   [&](DarkenParams& p) { p.coeff = j.value("coeff", p.coeff); },
                   [&](SaltPepperParams& p) { p.p = j.value("p", p.p); },
                   [&](RainParams& p) {
                       p.n_streaks = j.value("n_streaks", p.n_streaks);
                       p.angle_deg = j.value("angle_deg", p.angle_deg);
                       p.opacity = j.value("opacity", p.opacity);
                   },
                   [&](FogParams& p) {
                       p.density = j.value("density", p.density);
                       if (j.contains("color")) p.color = j.at("color").get<std::array<float, 3>>();
                   },
                   [&](SnowParams& p) {
                       p.n_flakes = j.value("n_flakes", p.n_flakes);
                       p.radius_px = j.value("radius_px", p.radius_px);
                       p.brightness_lift = j.value("brightness_lift", p.brightness_lift);
                   },
               },
               spec.params);
    spec.validate();
    return spec;
}

}  // namespace repairlab::corrupt
