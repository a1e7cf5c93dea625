#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "repairlab/datagen/datagen.hpp"
#include "repairlab/image.hpp"

namespace repairlab::control {

/// Conv stack followed by two fully connected layers.
struct ControllerArch {
    int height = 120;
    int width = 160;
    std::vector<int> channels = {24, 32, 64, 64, 64};
    std::vector<int> kernels = {5, 5, 5, 3, 3};
    std::vector<int> strides = {2, 2, 2, 1, 1};
    int hidden = 100;

    void validate() const;
    /// Two small conv layers; used by gradient checks.
    static ControllerArch tiny(int height, int width);
    friend bool operator==(const ControllerArch&, const ControllerArch&) = default;
};

nlohmann::json to_json(const ControllerArch& arch);
ControllerArch arch_from_json(const nlohmann::json& j);

class ControllerNetImpl : public torch::nn::Module {
public:
    explicit ControllerNetImpl(const ControllerArch& arch);
    /// Raw (unclamped) actions for N x 3 x H x W inputs in [0,1].
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Sequential features_{nullptr};
    torch::nn::Sequential head_{nullptr};
};
TORCH_MODULE(ControllerNet);

/// Steering clamped to [-1,1], throttle to [0,1]. Differentiable inside the bounds.
torch::Tensor clamp_actions(const torch::Tensor& raw);

class Controller {
public:
    Controller(const ControllerArch& arch, std::uint64_t seed);

    const ControllerArch& arch() const noexcept { return arch_; }
    ControllerNet& net() noexcept { return net_; }
    const ControllerNet& net() const noexcept { return net_; }

    /// Clamped actions for a batch; keeps the autograd graph.
    torch::Tensor actions(const torch::Tensor& images) const;
    ControlAction predict(const Image& y) const;
    std::vector<ControlAction> predict_batch(const std::vector<Image>& images) const;

    /// Disables gradients and switches to eval mode.
    void freeze();
    std::string weights_hash() const;

    /// Checkpoint plus `<path>.json` sidecar.
    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static Controller load(const std::filesystem::path& path);

private:
    ControllerArch arch_;
    ControllerNet net_;
};

struct ControllerTrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 1e-4;
    double validation_fraction = 0.1;
    double lambda_adv = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const ControllerTrainConfig&, const ControllerTrainConfig&) = default;
};

nlohmann::json to_json(const ControllerTrainConfig& cfg);
ControllerTrainConfig controller_train_config_from_json(const nlohmann::json& j);

/// Loss per epoch; entry 0 is measured before the first update.
struct TrainLog {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = 0;
    double best_val_loss = 0.0;
};

/// Images and labels in memory.
struct LabeledImages {
    std::vector<Image> images;
    std::vector<ControlAction> actions;
};

/// Clean images plus corrupted renditions aligned index-by-index with them.
struct PairedImages {
    std::vector<Image> clean;
    std::vector<ControlAction> actions;
    std::vector<std::pair<corrupt::Kind, std::vector<Image>>> corrupted;
};

/// Behavior cloning by MSE with best-validation checkpoint selection.
Controller train_controller(const LabeledImages& data, const ControllerArch& arch,
                            const ControllerTrainConfig& cfg, TrainLog* log = nullptr);
/// Manifest form; every row must be clean.
Controller train_controller(const datagen::Manifest& clean, const ControllerArch& arch,
                            const ControllerTrainConfig& cfg, TrainLog* log = nullptr);

/// Mean over the batch of the squared L2 distance between paired predictions.
torch::Tensor consistency_penalty(const torch::Tensor& pred_clean, const torch::Tensor& pred_corrupted);

struct AdversarialLoss {
    torch::Tensor total;
    torch::Tensor cloning;      ///< MSE on clean and corrupted rows together
    torch::Tensor consistency;  ///< mean over corrupted rows of ||h(y) - h(y_hat)||^2
};

/// Objective for h_adv on one batch. `corrupted` holds one tensor per kind, aligned with `clean`.
AdversarialLoss adversarial_objective(ControllerNet& net, const torch::Tensor& clean,
                                      const std::vector<torch::Tensor>& corrupted,
                                      const torch::Tensor& labels, double lambda_adv);

/// Trains h_adv on clean + corrupted pairs. Every corrupted kind must belong to the split's
/// training corruptions and all of them must be present.
Controller train_adversarial_controller(const PairedImages& data, const datagen::ExperimentConfigSplit& split,
                                        const ControllerArch& arch, const ControllerTrainConfig& cfg,
                                        TrainLog* log = nullptr);

/// Loads a clean manifest and its paired corrupted manifest into memory.
PairedImages load_paired(const datagen::Manifest& clean, const datagen::Manifest& corrupted);

}  // namespace repairlab::control
