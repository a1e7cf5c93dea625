#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "repairlab/corrupt/corruption.hpp"
#include "test_helpers.hpp"

using namespace repairlab;
using namespace repairlab::corrupt;

namespace {

int count_components(const std::vector<std::uint8_t>& mask, int h, int w) {
    std::vector<int> label(mask.size(), 0);
    int components = 0;
    for (int start = 0; start < h * w; ++start) {
        if (!mask[start] || label[start]) continue;
        ++components;
        std::vector<int> stack{start};
        label[start] = components;
        while (!stack.empty()) {
            const int idx = stack.back();
            stack.pop_back();
            const int r = idx / w, c = idx % w;
            const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& n : nbr) {
                if (n[0] < 0 || n[1] < 0 || n[0] >= h || n[1] >= w) continue;
                const int j = n[0] * w + n[1];
                if (mask[j] && !label[j]) {
                    label[j] = components;
                    stack.push_back(j);
                }
            }
        }
    }
    return components;
}

std::size_t area(const std::vector<std::uint8_t>& mask) {
    std::size_t n = 0;
    for (auto v : mask) n += v;
    return n;
}

Image random_image(int h, int w, std::uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    Image img(h, w);
    for (float& v : img.data()) v = dist(gen);
    return img;
}

}  // namespace

TEST(ApplyCorruption, NoneIsIdentity) {
    const Image y = fixtures::gradient_image(24, 32);
    EXPECT_EQ(apply_corruption(y, default_spec(Kind::None)), y);
}

TEST(Darken, QuarterCoefficientOnConstant) {
    const Image y(120, 160, 0.8f);
    const Image out = apply_corruption(y, default_spec(Kind::Darken));
    for (float v : out.data()) EXPECT_EQ(v, 0.2f);
}

TEST(Darken, EdgeCoefficientsAndArithmetic) {
    const Image y = fixtures::gradient_image(16, 16);
    EXPECT_EQ(darken(y, 1.0), y);
    const Image black = darken(y, 0.0);
    for (float v : black.data()) EXPECT_EQ(v, 0.0f);
    const Image half = darken(Image(4, 4, 0.6f), 0.5);
    for (float v : half.data()) EXPECT_NEAR(v, 0.3f, 1e-7);
}

TEST(Darken, Multiplicative) {
    const Image y = random_image(20, 30, 7);
    // Powers of two: exact in floating point.
    EXPECT_EQ(darken(darken(y, 0.5), 0.25), darken(y, 0.125));
    // General coefficients: equal up to one float rounding.
    const Image a = darken(darken(y, 0.3), 0.7);
    const Image b = darken(y, 0.3 * 0.7);
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_NEAR(a.data()[i], b.data()[i], 2e-7f * std::max(1.0f, b.data()[i]));
}

TEST(SaltPepper, ChangedFractionWithinThreeSigma) {
    const Image y(120, 160, 0.5f);
    const double n = static_cast<double>(y.pixel_count());
    for (double p : {0.01, 0.05, 0.2}) {
        const Image out = salt_pepper(y, p, 12345);
        std::size_t changed = 0;
        for (int r = 0; r < y.height(); ++r)
            for (int c = 0; c < y.width(); ++c)
                if (out.at(r, c, 0) != 0.5f) ++changed;
        const double sigma = std::sqrt(p * (1 - p) / n);
        EXPECT_LE(std::abs(changed / n - p), 3 * sigma) << "p=" << p;
    }
}

TEST(SaltPepper, SaltPepperRatioAndEndpoints) {
    const Image y(120, 160, 0.5f);
    EXPECT_EQ(salt_pepper(y, 0.0, 1), y);
    const Image all_hit = salt_pepper(y, 1.0, 1);
    for (float v : all_hit.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);

    const Image out = salt_pepper(y, 0.2, 99);
    double salt = 0, pepper = 0;
    for (int r = 0; r < y.height(); ++r)
        for (int c = 0; c < y.width(); ++c) {
            // Whole RGB pixel is replaced jointly.
            EXPECT_TRUE(out.at(r, c, 0) == out.at(r, c, 1) && out.at(r, c, 1) == out.at(r, c, 2));
            if (out.at(r, c, 0) == 1.0f) ++salt;
            if (out.at(r, c, 0) == 0.0f) ++pepper;
        }
    const double hits = salt + pepper;
    EXPECT_LE(std::abs(salt - hits / 2), 3 * std::sqrt(hits / 4));
}

TEST(Rain, DegenerateParamsReduceToBlur) {
    const Image y = fixtures::gradient_image(40, 60);
    EXPECT_EQ(rain(y, 0, 10.0, 0.8, 5), rain_blur(y));
    EXPECT_EQ(rain(y, 50, 10.0, 0.0, 5), rain_blur(y));
}

TEST(Rain, StreakAreaMonotoneInCount) {
    std::size_t prev = 0;
    for (int n = 0; n <= 120; n += 10) {
        const std::size_t a = area(rain_streak_mask(120, 160, n, 15.0, 77));
        EXPECT_GE(a, prev);
        prev = a;
    }
    EXPECT_GT(prev, 0u);
    EXPECT_GT(area(rain_streak_mask(120, 160, 120, 15.0, 77)),
              area(rain_streak_mask(120, 160, 10, 15.0, 77)));
}

TEST(Fog, EndpointsAndBlendArithmetic) {
    const Image y = fixtures::gradient_image(10, 12);
    EXPECT_EQ(fog(y, 0.0, {0.8f, 0.8f, 0.8f}), y);
    const std::array<float, 3> color = {0.7f, 0.75f, 0.8f};
    const Image full = fog(y, 1.0, color);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 12; ++c)
            for (int ch = 0; ch < 3; ++ch) EXPECT_FLOAT_EQ(full.at(r, c, ch), color[ch]);
    const Image blend = fog_blend(Image(4, 4, 0.2f), 0.5, {0.8f, 0.8f, 0.8f});
    for (float v : blend.data()) EXPECT_NEAR(v, 0.5f, 1e-7);
}

TEST(Snow, IdentityAndClamp) {
    const Image y = fixtures::gradient_image(16, 20);
    EXPECT_EQ(snow(y, 0, 2.0, 0.0, 3), y);
    const Image lifted = snow(Image(8, 8, 0.9f), 0, 2.0, 0.2, 3);
    for (float v : lifted.data()) EXPECT_EQ(v, 1.0f);
}

TEST(Snow, DiscAreaMatchesNonOverlappingFlakes) {
    const int n = 12;
    const double r = 3.0;
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 200 && checked < 5; ++seed) {
        const auto mask = snow_flake_mask(120, 160, n, r, seed);
        // Non-overlapping and fully inside: one connected component per flake.
        if (count_components(mask, 120, 160) != n) continue;
        ++checked;
        const double expected = n * M_PI * r * r;
        EXPECT_NEAR(static_cast<double>(area(mask)), expected, 0.10 * expected) << "seed " << seed;
    }
    EXPECT_EQ(checked, 5);
}

TEST(Corruption, CodomainAndShapeForEveryKind) {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Image y = random_image(24, 36, static_cast<std::uint32_t>(trial));
        const std::vector<CorruptionSpec> specs = {
            {DarkenParams{std::max(1e-3, unit(gen))}, gen()},
            {SaltPepperParams{unit(gen)}, gen()},
            {RainParams{static_cast<int>(unit(gen) * 80), 60 * unit(gen) - 30, unit(gen)}, gen()},
            {FogParams{unit(gen), {float(unit(gen)), float(unit(gen)), float(unit(gen))}}, gen()},
            {SnowParams{static_cast<int>(unit(gen) * 60), 4 * unit(gen), unit(gen)}, gen()},
        };
        for (const auto& spec : specs) {
            const Image out = apply_corruption(y, spec);
            EXPECT_TRUE(out.same_shape(y));
            EXPECT_TRUE(in_unit_range(out)) << kind_name(spec.kind());
        }
    }
}

TEST(Corruption, SeedDeterminismAndSensitivity) {
    const Image y = fixtures::gradient_image(60, 80);
    for (Kind k : {Kind::SaltPepper, Kind::Rain, Kind::Snow}) {
        const CorruptionSpec a = default_spec(k, 11, 60, 80);
        CorruptionSpec b = a;
        b.seed = 12;
        EXPECT_EQ(apply_corruption(y, a), apply_corruption(y, a)) << kind_name(k);
        EXPECT_NE(apply_corruption(y, a), apply_corruption(y, b)) << kind_name(k);
    }
}

TEST(Corruption, RejectsOutOfRangeParams) {
    const Image y(4, 4, 0.5f);
    EXPECT_THROW(apply_corruption(y, {DarkenParams{0.0}, 0}), std::invalid_argument);
    EXPECT_THROW(apply_corruption(y, {DarkenParams{1.5}, 0}), std::invalid_argument);
    EXPECT_THROW(apply_corruption(y, {SaltPepperParams{-0.1}, 0}), std::invalid_argument);
    EXPECT_THROW(apply_corruption(y, {RainParams{-1, 0, 0.5}, 0}), std::invalid_argument);
    EXPECT_THROW(apply_corruption(y, {FogParams{1.2, {0.5f, 0.5f, 0.5f}}, 0}), std::invalid_argument);
    EXPECT_THROW(apply_corruption(y, {SnowParams{5, 1.0, 2.0}, 0}), std::invalid_argument);
}

TEST(CorruptDataset, ConsistencyAndDeterminism) {
    const std::vector<Image> one = {fixtures::gradient_image(30, 40)};
    const CorruptionSpec spec = default_spec(Kind::SaltPepper, 0, 30, 40);
    CorruptionSpec first = spec;
    first.seed = stream_seed(42, 0);
    EXPECT_EQ(corrupt_dataset(one, spec, 42).front(), apply_corruption(one.front(), first));

    std::vector<Image> many;
    for (int i = 0; i < 4; ++i) many.push_back(fixtures::gradient_image(30, 40, 0.1f * i));
    EXPECT_EQ(corrupt_dataset(many, spec, 7), corrupt_dataset(many, spec, 7));
    EXPECT_NE(corrupt_dataset(many, spec, 7), corrupt_dataset(many, spec, 8));
    EXPECT_TRUE(corrupt_dataset({}, spec, 7).empty());
}

TEST(CorruptionSpecJson, RoundTripEveryKind) {
    for (Kind k : {Kind::None, Kind::Darken, Kind::SaltPepper, Kind::Rain, Kind::Fog, Kind::Snow}) {
        const CorruptionSpec spec = default_spec(k, 314, 32, 48);
        EXPECT_EQ(corruption_from_json(to_json(spec)), spec) << kind_name(k);
    }
    EXPECT_THROW(parse_kind("hail"), std::invalid_argument);
}
