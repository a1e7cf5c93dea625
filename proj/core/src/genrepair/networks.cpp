#include "repairlab/genrepair/networks.hpp"

#include <algorithm>
#include <stdexcept>

namespace repairlab::genrepair {

namespace tnn = torch::nn;

namespace {

tnn::InstanceNorm2d instance_norm(int channels) { return tnn::InstanceNorm2d(tnn::InstanceNorm2dOptions(channels)); }

tnn::Conv2d conv(int in, int out, int k, int stride, int pad) {
    return tnn::Conv2d(tnn::Conv2dOptions(in, out, k).stride(stride).padding(pad));
}

tnn::ConvTranspose2d deconv(int in, int out, int k, int stride, int pad, int out_pad = 0) {
    return tnn::ConvTranspose2d(
        tnn::ConvTranspose2dOptions(in, out, k).stride(stride).padding(pad).output_padding(out_pad));
}

tnn::LeakyReLU leaky() { return tnn::LeakyReLU(tnn::LeakyReLUOptions().negative_slope(0.2)); }

class ResidualBlockImpl : public tnn::Module {
public:
    explicit ResidualBlockImpl(int ch) {
        body_ = register_module(
            "body", tnn::Sequential(tnn::ReflectionPad2d(1), conv(ch, ch, 3, 1, 0), instance_norm(ch), tnn::ReLU(),
                                    tnn::ReflectionPad2d(1), conv(ch, ch, 3, 1, 0), instance_norm(ch)));
    }
    torch::Tensor forward(const torch::Tensor& x) { return x + body_->forward(x); }

private:
    tnn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

torch::Tensor to_signed(const torch::Tensor& x) { return x * 2.0 - 1.0; }
torch::Tensor to_unit(const torch::Tensor& t) { return (t + 1.0) * 0.5; }

}  // namespace

ResnetGeneratorImpl::ResnetGeneratorImpl(int filters, int residual_blocks) {
    if (filters <= 0 || residual_blocks < 0) throw std::invalid_argument("resnet generator: bad sizes");
    const int f = filters;
    tnn::Sequential s(tnn::ReflectionPad2d(3), conv(3, f, 7, 1, 0), instance_norm(f), tnn::ReLU(),
                      conv(f, 2 * f, 3, 2, 1), instance_norm(2 * f), tnn::ReLU(),
                      conv(2 * f, 4 * f, 3, 2, 1), instance_norm(4 * f), tnn::ReLU());
    for (int i = 0; i < residual_blocks; ++i) s->push_back(ResidualBlock(4 * f));
    s->push_back(deconv(4 * f, 2 * f, 3, 2, 1, 1));
    s->push_back(instance_norm(2 * f));
    s->push_back(tnn::ReLU());
    s->push_back(deconv(2 * f, f, 3, 2, 1, 1));
    s->push_back(instance_norm(f));
    s->push_back(tnn::ReLU());
    s->push_back(tnn::ReflectionPad2d(3));
    s->push_back(conv(f, 3, 7, 1, 0));
    s->push_back(tnn::Tanh());
    body_ = register_module("body", s);
}

torch::Tensor ResnetGeneratorImpl::forward(const torch::Tensor& x) {
    if (x.size(2) % 4 != 0 || x.size(3) % 4 != 0)
        throw std::invalid_argument("resnet generator: image sides must be divisible by 4");
    return to_unit(body_->forward(to_signed(x)));
}

UnetGeneratorImpl::UnetGeneratorImpl(int filters, int depth) {
    if (filters <= 0 || depth < 2) throw std::invalid_argument("unet generator: need filters > 0 and depth >= 2");
    std::vector<int> ch(depth);
    for (int i = 0; i < depth; ++i) ch[i] = filters * std::min(1 << i, 8);
    for (int i = 0; i < depth; ++i) {
        tnn::Sequential d;
        if (i == 0) {
            d->push_back(conv(3, ch[0], 4, 2, 1));
        } else {
            d->push_back(leaky());
            d->push_back(conv(ch[i - 1], ch[i], 4, 2, 1));
            if (i < depth - 1) d->push_back(instance_norm(ch[i]));
        }
        down_.push_back(register_module("down" + std::to_string(i), d));
    }
    for (int i = 0; i < depth; ++i) {
        const int in = i == depth - 1 ? ch[i] : 2 * ch[i];
        tnn::Sequential u{tnn::ReLU()};
        if (i == 0) {
            u->push_back(deconv(in, 3, 4, 2, 1));
            u->push_back(tnn::Tanh());
        } else {
            u->push_back(deconv(in, ch[i - 1], 4, 2, 1));
            u->push_back(instance_norm(ch[i - 1]));
        }
        up_.push_back(register_module("up" + std::to_string(i), u));
    }
}

torch::Tensor UnetGeneratorImpl::forward(const torch::Tensor& x) {
    const long div = 1L << down_.size();
    if (x.size(2) % div != 0 || x.size(3) % div != 0)
        throw std::invalid_argument("unet generator: image sides must be divisible by " + std::to_string(div));
    std::vector<torch::Tensor> skips;
    torch::Tensor h = to_signed(x);
    for (auto& d : down_) {
        h = d->forward(h);
        skips.push_back(h);
    }
    h = up_.back()->forward(skips.back());
    for (int i = static_cast<int>(up_.size()) - 2; i >= 0; --i) h = up_[i]->forward(torch::cat({h, skips[i]}, 1));
    return to_unit(h);
}

TinyGeneratorImpl::TinyGeneratorImpl(int hidden) {
    c1_ = register_module("c1", conv(3, hidden, 3, 1, 1));
    c2_ = register_module("c2", conv(hidden, 3, 3, 1, 1));
}

torch::Tensor TinyGeneratorImpl::forward(const torch::Tensor& x) {
    return to_unit(torch::tanh(c2_->forward(torch::tanh(c1_->forward(to_signed(x))))));
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(int in_channels, int filters, int layers) {
    if (layers < 1 || filters <= 0) throw std::invalid_argument("patch discriminator: bad sizes");
    tnn::Sequential s(conv(in_channels, filters, 4, 2, 1), leaky());
    int prev = filters;
    for (int n = 1; n < layers; ++n) {
        const int next = filters * std::min(1 << n, 8);
        s->push_back(conv(prev, next, 4, 2, 1));
        s->push_back(instance_norm(next));
        s->push_back(leaky());
        prev = next;
    }
    const int last = filters * std::min(1 << layers, 8);
    s->push_back(conv(prev, last, 4, 1, 1));
    s->push_back(instance_norm(last));
    s->push_back(leaky());
    s->push_back(conv(last, 1, 4, 1, 1));
    body_ = register_module("body", s);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) { return body_->forward(to_signed(x)); }

int patch_receptive_field(int layers) {
    // Walk back from the output: two stride-1 4x4 convs, then `layers` stride-2 4x4 convs.
    int field = 1;
    for (int i = 0; i < 2; ++i) field += 3;
    for (int i = 0; i < layers; ++i) field = 2 * field + 2;
    return field;
}

void init_gan_weights(torch::nn::Module& module) {
    torch::NoGradGuard guard;
    for (auto& item : module.named_parameters(true)) {
        const std::string& name = item.key();
        auto& p = item.value();
        if (name.size() >= 6 && name.compare(name.size() - 6, 6, "weight") == 0 && p.dim() == 4)
            p.normal_(0.0, 0.02);
        else if (name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0)
            p.zero_();
    }
}

VaeNetImpl::VaeNetImpl(int height, int width, int filters, int latent) : latent_(latent) {
    if (height % 8 != 0 || width % 8 != 0) throw std::invalid_argument("vae: image sides must be divisible by 8");
    if (latent <= 0 || filters <= 0) throw std::invalid_argument("vae: bad sizes");
    const int f = filters;
    feat_h_ = height / 8;
    feat_w_ = width / 8;
    feat_c_ = 4 * f;
    const long flat = static_cast<long>(feat_c_) * feat_h_ * feat_w_;
    encoder_ = register_module("encoder", tnn::Sequential(conv(3, f, 4, 2, 1), tnn::ReLU(), conv(f, 2 * f, 4, 2, 1),
                                                          tnn::ReLU(), conv(2 * f, 4 * f, 4, 2, 1), tnn::ReLU(),
                                                          tnn::Flatten()));
    fc_mu_ = register_module("fc_mu", tnn::Linear(flat, latent));
    fc_logvar_ = register_module("fc_logvar", tnn::Linear(flat, latent));
    fc_decode_ = register_module("fc_decode", tnn::Linear(latent, flat));
    decoder_ = register_module("decoder",
                               tnn::Sequential(tnn::ReLU(), deconv(4 * f, 2 * f, 4, 2, 1), tnn::ReLU(),
                                               deconv(2 * f, f, 4, 2, 1), tnn::ReLU(), deconv(f, 3, 4, 2, 1),
                                               tnn::Sigmoid()));
}

std::pair<torch::Tensor, torch::Tensor> VaeNetImpl::encode(const torch::Tensor& x) {
    const auto h = encoder_->forward(x - 0.5);
    return {fc_mu_->forward(h), fc_logvar_->forward(h)};
}

torch::Tensor VaeNetImpl::decode(const torch::Tensor& z) {
    return decoder_->forward(fc_decode_->forward(z).view({z.size(0), feat_c_, feat_h_, feat_w_}));
}

VaeNetImpl::Output VaeNetImpl::forward(const torch::Tensor& x, bool sample) {
    auto [mu, logvar] = encode(x);
    torch::Tensor z = mu;
    if (sample) z = mu + torch::randn_like(mu) * torch::exp(0.5 * logvar);
    return {decode(z), mu, logvar};
}

}  // namespace repairlab::genrepair
