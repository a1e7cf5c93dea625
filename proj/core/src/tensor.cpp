#include "repairlab/tensor.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace repairlab::nn {

void init_runtime() {
    // The interop pool can only be sized once per process.
    static std::once_flag once;
    std::call_once(once, [] {
        at::set_num_threads(1);
        at::set_num_interop_threads(1);
    });
}

void seed_torch(std::uint64_t seed) { torch::manual_seed(seed); }

torch::Tensor images_to_tensor(const std::vector<Image>& images) {
    if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
    const int h = images.front().height();
    const int w = images.front().width();
    auto out = torch::empty({static_cast<long>(images.size()), 3, h, w}, torch::kFloat32);
    float* dst = out.data_ptr<float>();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image& img = images[n];
        if (img.height() != h || img.width() != w)
            throw std::invalid_argument("images_to_tensor: images must share a shape");
        const auto src = img.data();
        float* base = dst + n * 3 * plane;
        for (std::size_t p = 0; p < plane; ++p)
            for (int ch = 0; ch < 3; ++ch) base[ch * plane + p] = src[p * 3 + ch];
    }
    return out;
}

torch::Tensor image_to_tensor(const Image& image) { return images_to_tensor({image}); }

Image tensor_to_image(const torch::Tensor& chw_in) {
    const torch::Tensor chw = chw_in.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    if (chw.dim() != 3 || chw.size(0) != 3) throw std::invalid_argument("tensor_to_image: need 3xHxW");
    const int h = static_cast<int>(chw.size(1));
    const int w = static_cast<int>(chw.size(2));
    Image img(h, w);
    const float* src = chw.data_ptr<float>();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    auto dst = img.data();
    for (std::size_t p = 0; p < plane; ++p)
        for (int ch = 0; ch < 3; ++ch) dst[p * 3 + ch] = src[ch * plane + p];
    return img;
}

std::vector<Image> tensor_to_images(const torch::Tensor& nchw) {
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(nchw.size(0)));
    for (long i = 0; i < nchw.size(0); ++i) out.push_back(tensor_to_image(nchw[i]));
    return out;
}

std::string hash_module(const torch::nn::Module& module) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    const auto feed = [&](const std::string& name, const torch::Tensor& t) {
        const torch::Tensor c = t.detach().to(torch::kCPU).contiguous();
        EVP_DigestUpdate(ctx.get(), name.data(), name.size());
        for (auto s : c.sizes()) EVP_DigestUpdate(ctx.get(), &s, sizeof(s));
        EVP_DigestUpdate(ctx.get(), c.data_ptr(), c.numel() * c.element_size());
    };
    for (const auto& item : module.named_parameters(true)) feed(item.key(), item.value());
    for (const auto& item : module.named_buffers(true)) feed(item.key(), item.value());
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
}

std::vector<torch::Tensor> snapshot(const torch::nn::Module& module) {
    std::vector<torch::Tensor> out;
    for (const auto& p : module.parameters(true)) out.push_back(p.detach().clone());
    for (const auto& b : module.buffers(true)) out.push_back(b.detach().clone());
    return out;
}

void restore(torch::nn::Module& module, const std::vector<torch::Tensor>& saved) {
    torch::NoGradGuard guard;
    std::size_t i = 0;
    for (auto& p : module.parameters(true)) p.copy_(saved.at(i++));
    for (auto& b : module.buffers(true)) b.copy_(saved.at(i++));
}

void set_requires_grad(torch::nn::Module& module, bool flag) {
    for (auto& p : module.parameters(true)) p.set_requires_grad(flag);
}

void save_module(const std::shared_ptr<torch::nn::Module>& module, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    module->save(archive);
    archive.save_to(path.string());
}

void load_module(const std::shared_ptr<torch::nn::Module>& module, const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    module->load(archive);
}

}  // namespace repairlab::nn
