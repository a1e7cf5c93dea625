#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "repairlab/image.hpp"

namespace repairlab::corrupt {

enum class Kind { None, Darken, SaltPepper, Rain, Fog, Snow };

inline constexpr std::array<Kind, 5> kAllCorruptions = {Kind::Darken, Kind::SaltPepper, Kind::Rain,
                                                        Kind::Fog, Kind::Snow};

std::string_view kind_name(Kind kind);
Kind parse_kind(std::string_view name);

struct NoParams {
    friend bool operator==(const NoParams&, const NoParams&) = default;
};
struct DarkenParams {
    double coeff = 0.25;
    friend bool operator==(const DarkenParams&, const DarkenParams&) = default;
};
struct SaltPepperParams {
    double p = 0.05;
    friend bool operator==(const SaltPepperParams&, const SaltPepperParams&) = default;
};
struct RainParams {
    int n_streaks = 60;
    double angle_deg = 15.0;
    double opacity = 0.7;
    friend bool operator==(const RainParams&, const RainParams&) = default;
};
struct FogParams {
    double density = 0.5;
    std::array<float, 3> color = {0.8f, 0.8f, 0.8f};
    friend bool operator==(const FogParams&, const FogParams&) = default;
};
struct SnowParams {
    int n_flakes = 150;
    double radius_px = 2.0;
    double brightness_lift = 0.2;
    friend bool operator==(const SnowParams&, const SnowParams&) = default;
};

using Params = std::variant<NoParams, DarkenParams, SaltPepperParams, RainParams, FogParams, SnowParams>;

/// A corruption function c(., eta) instance: kind, parameters, and the seed of its noise.
struct CorruptionSpec {
    Params params;
    std::uint64_t seed = 0;

    Kind kind() const noexcept { return static_cast<Kind>(params.index()); }
    /// Throws std::invalid_argument when a parameter is out of range.
    void validate() const;

    friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

/// Default parameters for a kind, with streak/flake counts and flake radius scaled from the
/// 120x160 reference resolution to the given image size.
CorruptionSpec default_spec(Kind kind, std::uint64_t seed = 0, int image_height = 120,
                            int image_width = 160);

Image apply_corruption(const Image& y, const CorruptionSpec& spec);

Image darken(const Image& y, double coeff);
Image salt_pepper(const Image& y, double p, std::uint64_t seed);
Image rain(const Image& y, int n_streaks, double angle_deg, double opacity, std::uint64_t seed);
Image fog(const Image& y, double density, std::array<float, 3> color);
Image snow(const Image& y, int n_flakes, double radius_px, double brightness_lift, std::uint64_t seed);

/// Separable [1 2 1]/4 blur with replicated borders; the rain baseline.
Image rain_blur(const Image& y);
/// Convex blend y*(1-density) + color*density, before contrast reduction.
Image fog_blend(const Image& y, double density, std::array<float, 3> color);

/// Row-major H*W masks of the pixels touched by streaks / flakes.
std::vector<std::uint8_t> rain_streak_mask(int height, int width, int n_streaks, double angle_deg,
                                           std::uint64_t seed);
std::vector<std::uint8_t> snow_flake_mask(int height, int width, int n_flakes, double radius_px,
                                          std::uint64_t seed);

/// Seed of the i-th image drawn from a corruption seed stream.
std::uint64_t stream_seed(std::uint64_t stream, std::uint64_t index);

/// Distribution-level corruption: image i is corrupted with stream_seed(stream, i).
std::vector<Image> corrupt_dataset(const std::vector<Image>& images, const CorruptionSpec& spec,
                                   std::uint64_t stream);

nlohmann::json to_json(const CorruptionSpec& spec);
CorruptionSpec corruption_from_json(const nlohmann::json& j);

}  // namespace repairlab::corrupt
