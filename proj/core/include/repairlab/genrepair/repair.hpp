#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "repairlab/control/controller.hpp"
#include "repairlab/genrepair/networks.hpp"
#include "repairlab/image.hpp"
#include "repairlab/rng.hpp"
#include "repairlab/sim/rollout.hpp"

namespace repairlab::genrepair {

enum class ControllerLossMode { None, OnH, OnHAdv };

std::string_view loss_mode_name(ControllerLossMode mode);
ControllerLossMode parse_loss_mode(std::string_view name);

/// mean |a - b| over the batch and both action dimensions.
torch::Tensor action_consistency(const torch::Tensor& a, const torch::Tensor& b);

/// mean |h(y) - h(y')| over the batch and both action dimensions. Batches must be paired.
torch::Tensor controller_consistency_loss(const control::Controller& h, const torch::Tensor& y,
                                          const torch::Tensor& y_prime);

struct CycleGanLambdas {
    double l1 = 10.0;
    double l2 = 10.0;
    double l3 = 0.5;
    double l4 = 10.0;
    friend bool operator==(const CycleGanLambdas&, const CycleGanLambdas&) = default;
};

/// f is the te->tr (repair) direction, b the tr->te direction.
template <typename T>
struct CycleGanComponents {
    T gan_f, gan_b, cyc_f, cyc_b, idt_f, idt_b, gs_f, gs_b;
};

/// L = L_G_f + L_G_b + l1 L_cyc_f + l2 L_cyc_b + l3 (l2 L_idt_f + l1 L_idt_b) + l4 (L_GS_f + L_GS_b)
template <typename T>
T cyclegan_generator_loss(const CycleGanComponents<T>& c, const CycleGanLambdas& l) {
    return c.gan_f + c.gan_b + l.l1 * c.cyc_f + l.l2 * c.cyc_b + l.l3 * (l.l2 * c.idt_f + l.l1 * c.idt_b) +
           l.l4 * (c.gs_f + c.gs_b);
}

/// L = L_GAN + l5 L_L1 + l6 L_GS
template <typename T>
T pix2pix_generator_loss(const T& gan, const T& l1, const T& gs, double lambda5, double lambda6) {
    return gan + lambda5 * l1 + lambda6 * gs;
}

struct GanTrainConfig {
    CycleGanLambdas lambdas;
    double lambda5 = 100.0;
    double lambda6 = 100.0;
    int epochs = 100;
    int batch_size = 1;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    ControllerLossMode controller_loss_mode = ControllerLossMode::None;
    std::uint64_t seed = 0;
    int generator_filters = 32;
    int residual_blocks = 6;
    int unet_depth = 4;
    int discriminator_filters = 64;
    int discriminator_layers = 3;
    int replay_buffer = 50;
    /// GAN resolution; 0 means the data's native size.
    int image_height = 0;
    int image_width = 0;

    void validate() const;
};

/// Same defaults, but 30 epochs.
GanTrainConfig pix2pix_default_config();

nlohmann::json to_json(const GanTrainConfig& cfg);
GanTrainConfig gan_train_config_from_json(const nlohmann::json& j);

/// Learning-rate multiplier: 1 for the first half of training, then linear decay towards 0.
double lr_decay_factor(int epoch, int epochs);

/// Replay buffer of generated images (fixed capacity, counter-seeded choices).
class ImagePool {
public:
    ImagePool(int capacity, std::uint64_t seed);
    /// Per image: store it while filling; afterwards return either it or (p = 0.5) a stored image
    /// that it replaces.
    torch::Tensor query(const torch::Tensor& images);
    std::size_t size() const noexcept { return images_.size(); }

private:
    int capacity_;
    CounterRng rng_;
    std::uint64_t draws_ = 0;
    std::vector<torch::Tensor> images_;
};

/// Training data. `corrupted` is the P_test domain; when `paired`, corrupted[i] pairs clean[i].
struct GanData {
    std::vector<Image> clean;
    std::vector<Image> corrupted;
    bool paired = false;
    /// Held-out pairs for curve checks (optional).
    std::vector<Image> heldout_clean;
    std::vector<Image> heldout_corrupted;
};

struct CycleGanEpochLog {
    int epoch = 0;
    CycleGanComponents<double> components{};
    double generator_loss = 0.0;
    double discriminator_tr = 0.0;
    double discriminator_te = 0.0;
    double heldout_cycle = 0.0;  ///< mean |G_b(G_f(y_hat)) - y_hat| on held-out corrupted images
    double learning_rate = 0.0;
};

/// Per-step record, used to check that the reported loss recomposes from its parts.
struct CycleGanStepLog {
    CycleGanComponents<double> components{};
    double generator_loss = 0.0;
};

class CycleGanModelImpl : public torch::nn::Module {
public:
    CycleGanModelImpl(const GanTrainConfig& cfg);
    ResnetGenerator g_f{nullptr};  ///< te -> tr, the repair direction
    ResnetGenerator g_b{nullptr};  ///< tr -> te
    PatchDiscriminator d_tr{nullptr};
    PatchDiscriminator d_te{nullptr};
};
TORCH_MODULE(CycleGanModel);

struct CycleGan {
    GanTrainConfig config;
    CycleGanModel model{nullptr};
    std::string controller_hash;  ///< empty unless trained with a controller loss
    int height = 0;
    int width = 0;
    std::vector<CycleGanEpochLog> log;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static CycleGan load(const std::filesystem::path& path);
};

using EpochCallback = std::function<void(int epoch)>;

/// One generator + discriminator update on a batch; exposed for recomposition checks.
class CycleGanTrainer {
public:
    CycleGanTrainer(CycleGan& gan, const std::optional<control::Controller>& h);
    CycleGanStepLog step(const torch::Tensor& clean, const torch::Tensor& corrupted, bool paired);
    /// Generator-side components for a batch without updating anything.
    CycleGanComponents<torch::Tensor> components(const torch::Tensor& clean, const torch::Tensor& corrupted,
                                                 bool paired);
    void set_learning_rate(double lr);
    double discriminator_tr_loss() const noexcept { return d_tr_loss_; }
    double discriminator_te_loss() const noexcept { return d_te_loss_; }

private:
    CycleGan& gan_;
    std::optional<control::Controller> h_;
    torch::optim::Adam opt_g_;
    torch::optim::Adam opt_d_;
    ImagePool pool_tr_;
    ImagePool pool_te_;
    double d_tr_loss_ = 0.0;
    double d_te_loss_ = 0.0;
};

/// Trains CycleGAN; the controller, when given, is frozen and its hash verified after every epoch.
CycleGan train_cyclegan(const GanData& data, const std::optional<control::Controller>& h,
                        const GanTrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Batch repair through G_te->tr at the model's resolution.
torch::Tensor cyclegan_repair_batch(const CycleGan& gan, const torch::Tensor& corrupted);
Image cyclegan_repair(const CycleGan& gan, const Image& corrupted);
sim::RepairFn cyclegan_repair_fn(const CycleGan& gan);

struct Pix2PixEpochLog {
    int epoch = 0;
    double gan = 0.0;
    double l1 = 0.0;
    double gs = 0.0;
    double generator_loss = 0.0;
    double discriminator = 0.0;
    double heldout_l1 = 0.0;
    double learning_rate = 0.0;
};

class Pix2PixModelImpl : public torch::nn::Module {
public:
    Pix2PixModelImpl(const GanTrainConfig& cfg);
    UnetGenerator g{nullptr};
    PatchDiscriminator d{nullptr};
};
TORCH_MODULE(Pix2PixModel);

struct Pix2Pix {
    GanTrainConfig config;
    Pix2PixModel model{nullptr};
    std::string controller_hash;
    int height = 0;
    int width = 0;
    std::vector<Pix2PixEpochLog> log;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static Pix2Pix load(const std::filesystem::path& path);
};

struct Pix2PixComponents {
    torch::Tensor gan, l1, gs, total;
};

/// Generator-side pix2pix components on a paired batch.
Pix2PixComponents pix2pix_components(Pix2Pix& p2p, const std::optional<control::Controller>& h,
                                     const torch::Tensor& clean, const torch::Tensor& corrupted);

Pix2Pix train_pix2pix(const GanData& data, const std::optional<control::Controller>& h, const GanTrainConfig& cfg,
                      const EpochCallback& on_epoch = {});

torch::Tensor pix2pix_repair_batch(const Pix2Pix& p2p, const torch::Tensor& corrupted);
Image pix2pix_repair(const Pix2Pix& p2p, const Image& corrupted);
sim::RepairFn pix2pix_repair_fn(const Pix2Pix& p2p);

struct VaeConfig {
    int latent = 128;
    int filters = 32;
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double kl_weight = 1.0;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const VaeConfig& cfg);
VaeConfig vae_config_from_json(const nlohmann::json& j);

struct VaeEpochLog {
    int epoch = 0;
    double reconstruction = 0.0;  ///< per-image summed squared error, batch mean
    double kl = 0.0;              ///< per-image KL to N(0, I), batch mean
};

struct Vae {
    VaeConfig config;
    VaeNet net{nullptr};
    int height = 0;
    int width = 0;
    std::vector<VaeEpochLog> log;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static Vae load(const std::filesystem::path& path);
};

/// KL(N(mu, exp(logvar)) || N(0, I)) summed over latent dims, averaged over the batch.
torch::Tensor vae_kl(const torch::Tensor& mu, const torch::Tensor& logvar);
/// Summed squared error per image, averaged over the batch.
torch::Tensor vae_reconstruction(const torch::Tensor& reconstruction, const torch::Tensor& target);

Vae train_vae(const std::vector<Image>& clean, const VaeConfig& cfg);
Image vae_repair(const Vae& vae, const Image& corrupted);
torch::Tensor vae_repair_batch(const Vae& vae, const torch::Tensor& corrupted);
sim::RepairFn vae_repair_fn(const Vae& vae);

/// Resize a batch to (height, width) with bilinear interpolation; identity when already that size.
torch::Tensor resize_batch(const torch::Tensor& x, int height, int width);

}  // namespace repairlab::genrepair
