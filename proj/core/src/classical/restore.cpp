#include "repairlab/classical/restore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace repairlab::classical {

Psf::Psf(int size, std::vector<double> values) : size_(size), values_(std::move(values)) {
    if (size <= 0 || size % 2 == 0) throw std::invalid_argument("psf: size must be odd and positive");
    if (values_.size() != static_cast<std::size_t>(size) * size)
        throw std::invalid_argument("psf: expected size*size values");
    double sum = 0.0;
    for (double v : values_) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("psf: entries must be finite and >= 0");
        sum += v;
    }
    if (!(sum > 0.0)) throw std::invalid_argument("psf: kernel sums to zero");
    // Already-normalized kernels are kept as is so a save/load round trip is exact.
    if (std::abs(sum - 1.0) > 1e-12)
        for (double& v : values_) v /= sum;
}

Psf Psf::delta() { return Psf(1, {1.0}); }

Psf Psf::gaussian(int size, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("psf: sigma must be positive");
    std::vector<double> v(static_cast<std::size_t>(size) * size);
    const int r = size / 2;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
            v[static_cast<std::size_t>(i) * size + j] =
                std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2.0 * sigma * sigma));
    return Psf(size, std::move(v));
}

Psf Psf::flipped() const {
    std::vector<double> v(values_.rbegin(), values_.rend());
    return Psf(size_, std::move(v));
}

namespace {

using Plane = std::vector<double>;

Plane correlate(const Plane& src, int h, int w, const Psf& psf) {
    const int r = psf.radius();
    Plane out(src.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int yy = std::clamp(y + i, 0, h - 1);
                for (int j = -r; j <= r; ++j) {
                    const int xx = std::clamp(x + j, 0, w - 1);
                    acc += psf.at(i + r, j + r) * src[static_cast<std::size_t>(yy) * w + xx];
                }
            }
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    return out;
}

Plane channel(const Image& img, int ch) {
    Plane p(img.pixel_count());
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c)
            p[static_cast<std::size_t>(r) * img.width() + c] = img.at(r, c, ch);
    return p;
}

void store(Image& img, int ch, const Plane& p) {
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c)
            img.at(r, c, ch) = static_cast<float>(std::clamp(p[static_cast<std::size_t>(r) * img.width() + c], 0.0, 1.0));
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<long>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

}  // namespace

Image convolve(const Image& y, const Psf& psf) {
    Image out(y.height(), y.width());
    for (int ch = 0; ch < 3; ++ch) store(out, ch, correlate(channel(y, ch), y.height(), y.width(), psf));
    return out;
}

std::vector<double> lucy_richardson_raw(const Image& y, const Psf& psf, int iters) {
    if (iters < 0) throw std::invalid_argument("lucy_richardson: iters must be >= 0");
    constexpr double kEps = 1e-12;
    const Psf adjoint = psf.flipped();
    const int h = y.height(), w = y.width();
    std::vector<double> out(y.size());
    for (int ch = 0; ch < 3; ++ch) {
        const Plane obs = channel(y, ch);
        Plane u = obs;
        for (int it = 0; it < iters; ++it) {
            const Plane blurred = correlate(u, h, w, psf);
            Plane ratio(obs.size());
            for (std::size_t i = 0; i < obs.size(); ++i) ratio[i] = obs[i] / std::max(blurred[i], kEps);
            const Plane correction = correlate(ratio, h, w, adjoint);
            for (std::size_t i = 0; i < u.size(); ++i) u[i] *= correction[i];
        }
        for (std::size_t i = 0; i < u.size(); ++i) out[i * 3 + ch] = u[i];
    }
    return out;
}

Image lucy_richardson(const Image& y, const Psf& psf, int iters) {
    if (iters == 0) return y;
    const auto raw = lucy_richardson_raw(y, psf, iters);
    Image out(y.height(), y.width());
    auto dst = out.data();
    for (std::size_t i = 0; i < raw.size(); ++i) dst[i] = static_cast<float>(std::clamp(raw[i], 0.0, 1.0));
    return out;
}

Image variational_bayes_restore(const Image& y, int iters, double prior_strength, VbReport* report) {
    if (iters < 1) throw std::invalid_argument("variational_bayes_restore: iters must be >= 1");
    if (!(prior_strength > 0.0)) throw std::invalid_argument("variational_bayes_restore: prior_strength must be > 0");
    const int h = y.height(), w = y.width();
    const double beta = prior_strength;

    // Robust noise scale from horizontal differences, shared by all channels.
    std::vector<double> diffs;
    diffs.reserve(y.pixel_count() * 3);
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c + 1 < w; ++c) diffs.push_back((y.at(r, c + 1, ch) - y.at(r, c, ch)) / std::sqrt(2.0));
    const double center = median(diffs);
    for (double& d : diffs) d = std::abs(d - center);
    const double sigma = std::max(1.4826 * median(diffs), 1e-3);
    double tau = 1.0 / (sigma * sigma);
    if (report) report->noise_precision_init = tau;

    std::vector<Plane> obs, mu;
    for (int ch = 0; ch < 3; ++ch) obs.push_back(channel(y, ch));
    mu = obs;
    std::vector<double> degree(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            degree[static_cast<std::size_t>(r) * w + c] = (r > 0) + (r + 1 < h) + (c > 0) + (c + 1 < w);

    const double n = static_cast<double>(obs[0].size() * 3);
    for (int it = 0; it < iters; ++it) {
        double residual = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
            const Plane& m = mu[ch];
            Plane next(m.size());
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    const std::size_t i = static_cast<std::size_t>(r) * w + c;
                    double nb = 0.0;
                    if (r > 0) nb += m[i - w];
                    if (r + 1 < h) nb += m[i + w];
                    if (c > 0) nb += m[i - 1];
                    if (c + 1 < w) nb += m[i + 1];
                    const double precision = tau + beta * degree[i];
                    next[i] = (tau * obs[ch][i] + beta * nb) / precision;
                    const double e = obs[ch][i] - next[i];
                    residual += e * e + 1.0 / precision;
                }
            mu[ch] = std::move(next);
        }
        tau = n / residual;
    }
    if (report) report->noise_precision = tau;

    Image out(h, w);
    for (int ch = 0; ch < 3; ++ch) store(out, ch, mu[ch]);
    return out;
}

std::string_view method_name(Method m) { return m == Method::LR ? "lucy_richardson" : "variational_bayes"; }

Method parse_method(std::string_view name) {
    if (name == "lucy_richardson" || name == "LR") return Method::LR;
    if (name == "variational_bayes" || name == "VB") return Method::VB;
    throw std::invalid_argument("unknown classical method: " + std::string(name));
}

nlohmann::json to_json(const ClassicalParams& p) {
    return {{"psf_size", p.psf.size()},
            {"psf", p.psf.values()},
            {"lr_iters", p.lr_iters},
            {"vb_iters", p.vb_iters},
            {"vb_prior_strength", p.vb_prior_strength}};
}

ClassicalParams classical_params_from_json(const nlohmann::json& j) {
    ClassicalParams p;
    if (j.contains("psf_sigma"))
        p.psf = Psf::gaussian(j.value("psf_size", 5), j.at("psf_sigma").get<double>());
    else if (j.contains("psf"))
        p.psf = Psf(j.at("psf_size").get<int>(), j.at("psf").get<std::vector<double>>());
    p.lr_iters = j.value("lr_iters", p.lr_iters);
    p.vb_iters = j.value("vb_iters", p.vb_iters);
    p.vb_prior_strength = j.value("vb_prior_strength", p.vb_prior_strength);
    return p;
}

sim::RepairFn classical_repair_pipeline(Method method, const ClassicalParams& params) {
    if (method == Method::LR) {
        if (params.lr_iters < 0) throw std::invalid_argument("classical pipeline: lr_iters must be >= 0");
        return [psf = params.psf, iters = params.lr_iters](const Image& y) { return lucy_richardson(y, psf, iters); };
    }
    if (params.vb_iters < 1 || !(params.vb_prior_strength > 0.0))
        throw std::invalid_argument("classical pipeline: bad VB parameters");
    return [iters = params.vb_iters, beta = params.vb_prior_strength](const Image& y) {
        return variational_bayes_restore(y, iters, beta);
    };
}

}  // namespace repairlab::classical
