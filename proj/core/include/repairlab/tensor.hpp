#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "repairlab/image.hpp"

namespace repairlab::nn {

/// Single-threaded, deterministic CPU execution.
void init_runtime();

/// Seeds torch's global generator.
void seed_torch(std::uint64_t seed);

/// N x 3 x H x W float tensor with values copied from HWC images.
torch::Tensor images_to_tensor(const std::vector<Image>& images);
torch::Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const torch::Tensor& chw);
std::vector<Image> tensor_to_images(const torch::Tensor& nchw);

/// SHA-256 over every parameter and buffer (names, shapes, raw bytes) in registration order.
std::string hash_module(const torch::nn::Module& module);

/// Deep copy of all parameters/buffers, for best-checkpoint selection.
std::vector<torch::Tensor> snapshot(const torch::nn::Module& module);
void restore(torch::nn::Module& module, const std::vector<torch::Tensor>& saved);

void set_requires_grad(torch::nn::Module& module, bool flag);

/// Save/load parameters via torch's archive format.
void save_module(const std::shared_ptr<torch::nn::Module>& module, const std::filesystem::path& path);
void load_module(const std::shared_ptr<torch::nn::Module>& module, const std::filesystem::path& path);

}  // namespace repairlab::nn
