#pragma once

#include <torch/torch.h>

namespace repairlab::genrepair {

/// Generators map [0,1] images to [0,1] images; internally they run on [-1,1] with a tanh output.

/// Residual encoder-decoder: c7s1-f, two stride-2 downsamplings, n residual blocks, two
/// upsamplings, c7s1-3. Instance normalization throughout.
class ResnetGeneratorImpl : public torch::nn::Module {
public:
    ResnetGeneratorImpl(int filters, int residual_blocks);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResnetGenerator);

/// Skip-connected encoder-decoder with `depth` stride-2 levels (4x4 kernels).
class UnetGeneratorImpl : public torch::nn::Module {
public:
    UnetGeneratorImpl(int filters, int depth);
    torch::Tensor forward(const torch::Tensor& x);

private:
    std::vector<torch::nn::Sequential> down_;
    std::vector<torch::nn::Sequential> up_;
};
TORCH_MODULE(UnetGenerator);

/// Two 3x3 conv layers; used for finite-difference gradient checks.
class TinyGeneratorImpl : public torch::nn::Module {
public:
    explicit TinyGeneratorImpl(int hidden = 4);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d c1_{nullptr}, c2_{nullptr};
};
TORCH_MODULE(TinyGenerator);

/// PatchGAN: 4x4 convs, `layers` stride-2 stages then a stride-1 stage and a 1-channel map.
/// With layers = 3 the receptive field is 70 pixels. Outputs logits.
class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    PatchDiscriminatorImpl(int in_channels, int filters, int layers);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

/// Receptive field in pixels of one output logit of PatchDiscriminator(layers).
int patch_receptive_field(int layers);

/// N(0, 0.02) conv weights and zero biases.
void init_gan_weights(torch::nn::Module& module);

/// Convolutional VAE with a Gaussian latent.
class VaeNetImpl : public torch::nn::Module {
public:
    VaeNetImpl(int height, int width, int filters, int latent);

    struct Output {
        torch::Tensor reconstruction;
        torch::Tensor mu;
        torch::Tensor logvar;
    };
    std::pair<torch::Tensor, torch::Tensor> encode(const torch::Tensor& x);
    torch::Tensor decode(const torch::Tensor& z);
    /// Samples z = mu + eps * sigma when `sample` is true, else z = mu.
    Output forward(const torch::Tensor& x, bool sample);

    int latent() const noexcept { return latent_; }

private:
    int latent_;
    int feat_h_, feat_w_, feat_c_;
    torch::nn::Sequential encoder_{nullptr};
    torch::nn::Linear fc_mu_{nullptr}, fc_logvar_{nullptr}, fc_decode_{nullptr};
    torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(VaeNet);

}  // namespace repairlab::genrepair
