#include "repairlab/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace repairlab {

ControlAction ControlAction::clamped() const {
    return {std::clamp(steering, -1.0, 1.0), std::clamp(throttle, 0.0, 1.0)};
}

bool ControlAction::finite() const { return std::isfinite(steering) && std::isfinite(throttle); }

void clamp_unit(Image& img) {
    for (float& v : img.data()) v = std::clamp(v, 0.0f, 1.0f);
}

bool in_unit_range(const Image& img) {
    return std::all_of(img.data().begin(), img.data().end(),
                       [](float v) { return v >= 0.0f && v <= 1.0f; });
}

void quantize_8bit(Image& img) {
    for (float& v : img.data()) {
        v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
    }
}

double mean_squared_error(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mean_squared_error: shape mismatch");
    const auto da = a.data();
    const auto db = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = static_cast<double>(da[i]) - db[i];
        acc += d * d;
    }
    return da.empty() ? 0.0 : acc / static_cast<double>(da.size());
}

double psnr(const Image& reference, const Image& test) {
    const double mse = mean_squared_error(reference, test);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

Image resize_bilinear(const Image& src, int height, int width) {
    if (src.height() == height && src.width() == width) return src;
    Image out(height, width);
    const double sy = static_cast<double>(src.height()) / height;
    const double sx = static_cast<double>(src.width()) / width;
    for (int r = 0; r < height; ++r) {
        const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height() - 1);
        const double wy = fy - y0;
        for (int c = 0; c < width; ++c) {
            const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width() - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < Image::kChannels; ++ch) {
                const double top = src.at(y0, x0, ch) * (1 - wx) + src.at(y0, x1, ch) * wx;
                const double bot = src.at(y1, x0, ch) * (1 - wx) + src.at(y1, x1, ch) * wx;
                out.at(r, c, ch) = static_cast<float>(top * (1 - wy) + bot * wy);
            }
        }
    }
    return out;
}

}  // namespace repairlab
