#pragma once

#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "repairlab/image.hpp"
#include "repairlab/sim/rollout.hpp"

namespace repairlab::classical {

/// Odd-sized, non-negative, unit-sum 2D kernel.
class Psf {
public:
    /// Normalizes `values` (row-major size x size). Throws on even size, negative entries or zero sum.
    Psf(int size, std::vector<double> values);

    static Psf delta();
    static Psf gaussian(int size, double sigma);

    int size() const noexcept { return size_; }
    int radius() const noexcept { return size_ / 2; }
    double at(int r, int c) const noexcept { return values_[static_cast<std::size_t>(r) * size_ + c]; }
    const std::vector<double>& values() const noexcept { return values_; }
    Psf flipped() const;

    friend bool operator==(const Psf&, const Psf&) = default;

private:
    int size_;
    std::vector<double> values_;
};

/// Per-channel 2D correlation with replicated borders.
Image convolve(const Image& y, const Psf& psf);

/// Multiplicative Richardson updates u <- u * (flip(k) * (y / (k * u))), clamped to [0,1] at the end.
Image lucy_richardson(const Image& y, const Psf& psf, int iters);
/// Same iterations without the final clamp, HWC order.
std::vector<double> lucy_richardson_raw(const Image& y, const Psf& psf, int iters);

struct VbReport {
    double noise_precision_init = 0.0;
    double noise_precision = 0.0;
};

/// Mean-field Gaussian denoising: y = x + n, n ~ N(0, 1/tau), prior exp(-beta/2 sum (x_i - x_j)^2) over
/// 4-neighbours. Jacobi updates of the posterior means, tau re-estimated after each sweep, initialised
/// from a robust (MAD) noise estimate.
Image variational_bayes_restore(const Image& y, int iters, double prior_strength, VbReport* report = nullptr);

enum class Method { LR, VB };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct ClassicalParams {
    Psf psf = Psf::gaussian(5, 1.0);
    int lr_iters = 10;
    int vb_iters = 10;
    double vb_prior_strength = 20.0;
};

nlohmann::json to_json(const ClassicalParams& p);
ClassicalParams classical_params_from_json(const nlohmann::json& j);

/// Repair closure usable by sim::rollout.
sim::RepairFn classical_repair_pipeline(Method method, const ClassicalParams& params);

}  // namespace repairlab::classical
