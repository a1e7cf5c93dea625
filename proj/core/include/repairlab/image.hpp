#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace repairlab {

/// H x W x 3 float image, interleaved (HWC), intensities nominally in [0,1].
class Image {
public:
    static constexpr int kChannels = 3;

    Image() = default;
    Image(int height, int width, float fill = 0.0f)
        : height_(height), width_(width),
          data_(static_cast<std::size_t>(checked(height) * checked(width) * kChannels), fill) {}

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height_) * width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int row, int col, int ch) noexcept { return data_[index(row, col, ch)]; }
    float at(int row, int col, int ch) const noexcept { return data_[index(row, col, ch)]; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    bool same_shape(const Image& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    static int checked(int dim) {
        if (dim <= 0) throw std::invalid_argument("image dimensions must be positive");
        return dim;
    }
    std::size_t index(int row, int col, int ch) const noexcept {
        return (static_cast<std::size_t>(row) * width_ + col) * kChannels + ch;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

/// Vehicle command. Steering in [-1,1] (maps to +-max steer angle), throttle in [0,1].
struct ControlAction {
    double steering = 0.0;
    double throttle = 0.0;

    ControlAction clamped() const;
    bool finite() const;
    friend bool operator==(const ControlAction&, const ControlAction&) = default;
};

/// Clamp every pixel into [0,1].
void clamp_unit(Image& img);

/// True when every pixel lies in [0,1].
bool in_unit_range(const Image& img);

/// Round every pixel to the nearest 8-bit level (k/255).
void quantize_8bit(Image& img);

double mean_squared_error(const Image& a, const Image& b);

/// Peak signal-to-noise ratio in dB for unit-peak images.
double psnr(const Image& reference, const Image& test);

/// Bilinear resize, used to move between GAN and controller resolutions.
Image resize_bilinear(const Image& src, int height, int width);

}  // namespace repairlab
