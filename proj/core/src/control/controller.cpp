#include "repairlab/control/controller.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "repairlab/io.hpp"
#include "repairlab/rng.hpp"
#include "repairlab/tensor.hpp"

namespace repairlab::control {

namespace F = torch::nn::functional;
using corrupt::Kind;

void ControllerArch::validate() const {
    if (height <= 0 || width <= 0) throw std::invalid_argument("controller: input dims must be positive");
    if (channels.empty()) throw std::invalid_argument("controller: need at least one conv layer");
    if (kernels.size() != channels.size() || strides.size() != channels.size())
        throw std::invalid_argument("controller: channels/kernels/strides length mismatch");
    for (std::size_t i = 0; i < channels.size(); ++i)
        if (channels[i] <= 0 || kernels[i] <= 0 || kernels[i] % 2 == 0 || strides[i] <= 0)
            throw std::invalid_argument("controller: bad conv layer " + std::to_string(i));
    if (hidden <= 0) throw std::invalid_argument("controller: hidden width must be positive");
}

ControllerArch ControllerArch::tiny(int height, int width) {
    ControllerArch a;
    a.height = height;
    a.width = width;
    a.channels = {4, 4};
    a.kernels = {3, 3};
    a.strides = {2, 2};
    a.hidden = 8;
    return a;
}

nlohmann::json to_json(const ControllerArch& a) {
    return {{"height", a.height}, {"width", a.width},     {"channels", a.channels},
            {"kernels", a.kernels}, {"strides", a.strides}, {"hidden", a.hidden}};
}

ControllerArch arch_from_json(const nlohmann::json& j) {
    ControllerArch a;
    a.height = j.value("height", a.height);
    a.width = j.value("width", a.width);
    a.channels = j.value("channels", a.channels);
    a.kernels = j.value("kernels", a.kernels);
    a.strides = j.value("strides", a.strides);
    a.hidden = j.value("hidden", a.hidden);
    a.validate();
    return a;
}

ControllerNetImpl::ControllerNetImpl(const ControllerArch& arch) {
    arch.validate();
    features_ = torch::nn::Sequential();
    int in = 3;
    for (std::size_t i = 0; i < arch.channels.size(); ++i) {
        features_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, arch.channels[i], arch.kernels[i])
                                                   .stride(arch.strides[i])
                                                   .padding(arch.kernels[i] / 2)));
        features_->push_back(torch::nn::ReLU());
        in = arch.channels[i];
    }
    features_->push_back(torch::nn::Flatten());
    long flat = 0;
    {
        torch::NoGradGuard guard;
        flat = features_->forward(torch::zeros({1, 3, arch.height, arch.width})).size(1);
    }
    head_ = torch::nn::Sequential(torch::nn::Linear(flat, arch.hidden), torch::nn::ReLU(),
                                  torch::nn::Linear(arch.hidden, 2));
    register_module("features", features_);
    register_module("head", head_);
}

torch::Tensor ControllerNetImpl::forward(const torch::Tensor& x) {
    return head_->forward(features_->forward(x - 0.5));
}

torch::Tensor clamp_actions(const torch::Tensor& raw) {
    const auto steering = raw.select(1, 0).clamp(-1.0, 1.0);
    const auto throttle = raw.select(1, 1).clamp(0.0, 1.0);
    return torch::stack({steering, throttle}, 1);
}

Controller::Controller(const ControllerArch& arch, std::uint64_t seed) : arch_(arch), net_(nullptr) {
    nn::seed_torch(seed);
    net_ = ControllerNet(arch);
}

torch::Tensor Controller::actions(const torch::Tensor& images) const {
    if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != arch_.height ||
        images.size(3) != arch_.width)
        throw std::invalid_argument("controller: input batch does not match " + std::to_string(arch_.height) +
                                    "x" + std::to_string(arch_.width) + "x3");
    return clamp_actions(const_cast<ControllerNet&>(net_)->forward(images));
}

ControlAction Controller::predict(const Image& y) const {
    if (y.height() != arch_.height || y.width() != arch_.width)
        throw std::invalid_argument("controller: image is " + std::to_string(y.height()) + "x" +
                                    std::to_string(y.width()) + ", expected " + std::to_string(arch_.height) +
                                    "x" + std::to_string(arch_.width));
    torch::NoGradGuard guard;
    const auto a = actions(nn::image_to_tensor(y));
    return {a[0][0].item<double>(), a[0][1].item<double>()};
}

std::vector<ControlAction> Controller::predict_batch(const std::vector<Image>& images) const {
    std::vector<ControlAction> out;
    if (images.empty()) return out;
    torch::NoGradGuard guard;
    const auto a = actions(nn::images_to_tensor(images)).contiguous();
    const float* p = a.data_ptr<float>();
    for (std::size_t i = 0; i < images.size(); ++i) out.push_back({p[2 * i], p[2 * i + 1]});
    return out;
}

void Controller::freeze() {
    nn::set_requires_grad(*net_, false);
    net_->eval();
}

std::string Controller::weights_hash() const { return nn::hash_module(*net_); }

void Controller::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
    nn::save_module(net_.ptr(), path);
    nlohmann::json meta = {
        {"format", "repairlab.controller"},
        {"version", 1},
        {"arch", to_json(arch_)},
        {"input", {{"height", arch_.height}, {"width", arch_.width}, {"channels", 3}}},
        {"normalization", {{"offset", -0.5}, {"scale", 1.0}}},
        {"weights_sha256", weights_hash()},
    };
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
    io::write_text(path.string() + ".json", meta.dump(2) + "\n");
}

Controller Controller::load(const std::filesystem::path& path) {
    const auto meta = nlohmann::json::parse(io::read_text(path.string() + ".json"));
    if (meta.value("format", "") != "repairlab.controller" || meta.value("version", 0) != 1)
        throw std::runtime_error("controller: unsupported checkpoint " + path.string());
    Controller c(arch_from_json(meta.at("arch")), 0);
    nn::load_module(c.net_.ptr(), path);
    if (c.weights_hash() != meta.at("weights_sha256").get<std::string>())
        throw std::runtime_error("controller: weight hash mismatch in " + path.string());
    return c;
}

void ControllerTrainConfig::validate() const {
    if (epochs < 0 || batch_size <= 0 || !(learning_rate > 0.0))
        throw std::invalid_argument("controller train config: epochs/batch/learning_rate out of range");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw std::invalid_argument("controller train config: validation_fraction must be in [0,1)");
    if (!(lambda_adv >= 0.0)) throw std::invalid_argument("controller train config: lambda_adv must be >= 0");
}

nlohmann::json to_json(const ControllerTrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"validation_fraction", c.validation_fraction},
            {"lambda_adv", c.lambda_adv},
            {"seed", c.seed}};
}

ControllerTrainConfig controller_train_config_from_json(const nlohmann::json& j) {
    ControllerTrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.lambda_adv = j.value("lambda_adv", c.lambda_adv);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

namespace {

torch::Tensor actions_tensor(const std::vector<ControlAction>& actions) {
    auto t = torch::empty({static_cast<long>(actions.size()), 2}, torch::kFloat32);
    auto a = t.accessor<float, 2>();
    for (std::size_t i = 0; i < actions.size(); ++i) {
        a[i][0] = static_cast<float>(actions[i].steering);
        a[i][1] = static_cast<float>(actions[i].throttle);
    }
    return t;
}

torch::Tensor index_tensor(const std::vector<long>& idx, std::size_t begin, std::size_t end) {
    return torch::tensor(std::vector<long>(idx.begin() + begin, idx.begin() + end), torch::kLong);
}

struct Holdout {
    std::vector<long> train;
    std::vector<long> val;
};

Holdout split_holdout(std::size_t n, double fraction, std::uint64_t seed) {
    const auto perm = permutation(n, seed, 0x7661);
    std::size_t n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    if (n_val >= n) n_val = n > 1 ? n - 1 : 0;
    Holdout h;
    h.val.assign(perm.begin(), perm.begin() + n_val);
    h.train.assign(perm.begin() + n_val, perm.end());
    // Tiny sets validate on the training data.
    if (h.val.empty()) h.val = h.train;
    return h;
}

/// batch_loss(indices, training) -> scalar loss tensor.
template <typename BatchLoss>
Controller fit(Controller controller, std::size_t n, const ControllerTrainConfig& cfg, BatchLoss&& batch_loss,
               TrainLog* log) {
    cfg.validate();
    const Holdout h = split_holdout(n, cfg.validation_fraction, cfg.seed);
    ControllerNet& net = controller.net();
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));

    const auto evaluate = [&](const std::vector<long>& idx) {
        torch::NoGradGuard guard;
        double sum = 0.0;
        for (std::size_t b = 0; b < idx.size(); b += cfg.batch_size) {
            const std::size_t e = std::min(idx.size(), b + cfg.batch_size);
            sum += batch_loss(index_tensor(idx, b, e)).template item<double>() * static_cast<double>(e - b);
        }
        return sum / static_cast<double>(idx.size());
    };

    TrainLog local;
    local.train_loss.push_back(evaluate(h.train));
    local.val_loss.push_back(evaluate(h.val));
    local.best_val_loss = local.val_loss.back();
    auto best = nn::snapshot(*net);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = permutation(h.train.size(), cfg.seed, 0x6570 + static_cast<std::uint64_t>(epoch));
        std::vector<long> shuffled(h.train.size());
        for (std::size_t i = 0; i < order.size(); ++i) shuffled[i] = h.train[order[i]];
        double sum = 0.0;
        for (std::size_t b = 0; b < shuffled.size(); b += cfg.batch_size) {
            const std::size_t e = std::min(shuffled.size(), b + cfg.batch_size);
            opt.zero_grad();
            auto loss = batch_loss(index_tensor(shuffled, b, e));
            loss.backward();
            opt.step();
            sum += loss.template item<double>() * static_cast<double>(e - b);
        }
        local.train_loss.push_back(sum / static_cast<double>(shuffled.size()));
        local.val_loss.push_back(evaluate(h.val));
        if (local.val_loss.back() < local.best_val_loss) {
            local.best_val_loss = local.val_loss.back();
            local.best_epoch = epoch;
            best = nn::snapshot(*net);
        }
    }
    nn::restore(*net, best);
    if (log) *log = std::move(local);
    return controller;
}

}  // namespace

Controller train_controller(const LabeledImages& data, const ControllerArch& arch, const ControllerTrainConfig& cfg,
                            TrainLog* log) {
    if (data.images.empty()) throw std::invalid_argument("train_controller: empty dataset");
    if (data.images.size() != data.actions.size())
        throw std::invalid_argument("train_controller: images/actions size mismatch");
    cfg.validate();
    const torch::Tensor x = nn::images_to_tensor(data.images);
    const torch::Tensor y = actions_tensor(data.actions);
    Controller controller(arch, cfg.seed);
    if (x.size(2) != arch.height || x.size(3) != arch.width)
        throw std::invalid_argument("train_controller: image dims do not match the architecture");
    ControllerNet net = controller.net();
    const auto loss = [&](const torch::Tensor& idx) {
        return F::mse_loss(net->forward(x.index_select(0, idx)), y.index_select(0, idx));
    };
    return fit(std::move(controller), data.images.size(), cfg, loss, log);
}

Controller train_controller(const datagen::Manifest& clean, const ControllerArch& arch,
                            const ControllerTrainConfig& cfg, TrainLog* log) {
    if (clean.empty()) throw std::invalid_argument("train_controller: empty manifest");
    for (const auto& r : clean.rows)
        if (r.kind != Kind::None)
            throw std::invalid_argument("train_controller: manifest contains corrupted row " + r.image_path);
    return train_controller(LabeledImages{clean.load_images(), clean.actions()}, arch, cfg, log);
}

torch::Tensor consistency_penalty(const torch::Tensor& pred_clean, const torch::Tensor& pred_corrupted) {
    if (pred_clean.sizes() != pred_corrupted.sizes())
        throw std::invalid_argument("consistency_penalty: prediction batches are not paired");
    return (pred_clean - pred_corrupted).pow(2).sum(1).mean();
}

AdversarialLoss adversarial_objective(ControllerNet& net, const torch::Tensor& clean,
                                      const std::vector<torch::Tensor>& corrupted, const torch::Tensor& labels,
                                      double lambda_adv) {
    std::vector<torch::Tensor> inputs{clean};
    for (const auto& c : corrupted) {
        if (c.sizes() != clean.sizes()) throw std::invalid_argument("adversarial_objective: unpaired batch");
        inputs.push_back(c);
    }
    const long b = clean.size(0);
    const auto preds = net->forward(torch::cat(inputs, 0));
    const auto targets = labels.repeat({static_cast<long>(inputs.size()), 1});
    AdversarialLoss out;
    out.cloning = F::mse_loss(preds, targets);
    const auto p0 = preds.narrow(0, 0, b);
    out.consistency = torch::zeros({}, preds.options());
    for (std::size_t k = 1; k < inputs.size(); ++k)
        out.consistency = out.consistency + consistency_penalty(p0, preds.narrow(0, static_cast<long>(k) * b, b));
    if (!corrupted.empty()) out.consistency = out.consistency / static_cast<double>(corrupted.size());
    out.total = out.cloning + lambda_adv * out.consistency;
    return out;
}

Controller train_adversarial_controller(const PairedImages& data, const datagen::ExperimentConfigSplit& split,
                                        const ControllerArch& arch, const ControllerTrainConfig& cfg,
                                        TrainLog* log) {
    if (data.clean.empty()) throw std::invalid_argument("train_adversarial_controller: empty dataset");
    if (data.clean.size() != data.actions.size())
        throw std::invalid_argument("train_adversarial_controller: images/actions size mismatch");
    std::set<Kind> given;
    for (const auto& [kind, images] : data.corrupted) {
        if (split.is_test_kind(kind))
            throw std::invalid_argument("train_adversarial_controller: test-split corruption '" +
                                        std::string(corrupt::kind_name(kind)) + "' in training input");
        if (images.size() != data.clean.size())
            throw std::invalid_argument("train_adversarial_controller: corrupted set not aligned with clean set");
        given.insert(kind);
    }
    const auto expected_kinds = split.train_corrupted_kinds();
    if (given != std::set<Kind>(expected_kinds.begin(), expected_kinds.end()) ||
        given.size() != data.corrupted.size())
        throw std::invalid_argument("train_adversarial_controller: corrupted kinds must match split " + split.name);
    cfg.validate();

    const torch::Tensor x = nn::images_to_tensor(data.clean);
    std::vector<torch::Tensor> xc;
    for (const auto& [kind, images] : data.corrupted) xc.push_back(nn::images_to_tensor(images));
    const torch::Tensor y = actions_tensor(data.actions);
    Controller controller(arch, cfg.seed);
    ControllerNet net = controller.net();
    const auto loss = [&](const torch::Tensor& idx) {
        std::vector<torch::Tensor> batch;
        for (const auto& t : xc) batch.push_back(t.index_select(0, idx));
        return adversarial_objective(net, x.index_select(0, idx), batch, y.index_select(0, idx), cfg.lambda_adv)
            .total;
    };
    return fit(std::move(controller), data.clean.size(), cfg, loss, log);
}

PairedImages load_paired(const datagen::Manifest& clean, const datagen::Manifest& corrupted) {
    PairedImages out;
    out.clean = clean.load_images();
    out.actions = clean.actions();
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < clean.rows.size(); ++i) index.emplace(clean.rows[i].pair_id, i);
    std::map<Kind, std::vector<Image>> by_kind;
    std::map<Kind, std::size_t> filled;
    for (const auto& row : corrupted.rows) {
        auto& slot = by_kind[row.kind];
        if (slot.empty()) slot.resize(out.clean.size());
        const auto it = index.find(row.pair_id);
        if (it == index.end()) throw std::invalid_argument("load_paired: no clean partner for " + row.image_path);
        slot[it->second] = corrupted.load_image(row);
        ++filled[row.kind];
    }
    for (auto& [kind, images] : by_kind) {
        if (filled[kind] != out.clean.size())
            throw std::invalid_argument("load_paired: kind " + std::string(corrupt::kind_name(kind)) +
                                        " does not cover every clean row");
        out.corrupted.emplace_back(kind, std::move(images));
    }
    return out;
}

}  // namespace repairlab::control
