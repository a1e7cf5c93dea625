#include "repairlab/genrepair/repair.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "repairlab/io.hpp"
#include "repairlab/tensor.hpp"

namespace repairlab::genrepair {

namespace F = torch::nn::functional;

std::string_view loss_mode_name(ControllerLossMode mode) {
    switch (mode) {
        case ControllerLossMode::None: return "none";
        case ControllerLossMode::OnH: return "on_h";
        case ControllerLossMode::OnHAdv: return "on_h_adv";
    }
    return "none";
}

ControllerLossMode parse_loss_mode(std::string_view name) {
    if (name == "none") return ControllerLossMode::None;
    if (name == "on_h") return ControllerLossMode::OnH;
    if (name == "on_h_adv") return ControllerLossMode::OnHAdv;
    throw std::invalid_argument("unknown controller_loss_mode: " + std::string(name));
}

torch::Tensor resize_batch(const torch::Tensor& x, int height, int width) {
    if (x.size(2) == height && x.size(3) == width) return x;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{height, width})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

torch::Tensor action_consistency(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) throw std::invalid_argument("action_consistency: shapes differ");
    return (a - b).abs().mean();
}

torch::Tensor controller_consistency_loss(const control::Controller& h, const torch::Tensor& y,
                                          const torch::Tensor& y_prime) {
    if (y.sizes() != y_prime.sizes())
        throw std::invalid_argument("controller_consistency_loss: batches are not paired");
    const int ch = h.arch().height, cw = h.arch().width;
    return action_consistency(h.actions(resize_batch(y, ch, cw)), h.actions(resize_batch(y_prime, ch, cw)));
}

void GanTrainConfig::validate() const {
    for (double l : {lambdas.l1, lambdas.l2, lambdas.l3, lambdas.l4, lambda5, lambda6})
        if (!(l >= 0.0)) throw std::invalid_argument("gan config: lambdas must be >= 0");
    if (epochs < 0 || batch_size <= 0 || !(learning_rate > 0.0))
        throw std::invalid_argument("gan config: epochs/batch_size/learning_rate out of range");
    if (generator_filters <= 0 || residual_blocks < 0 || unet_depth < 2 || discriminator_filters <= 0 ||
        discriminator_layers < 1 || replay_buffer < 0)
        throw std::invalid_argument("gan config: bad architecture sizes");
    if (image_height < 0 || image_width < 0 || (image_height == 0) != (image_width == 0))
        throw std::invalid_argument("gan config: image_height/image_width must both be 0 or positive");
}

GanTrainConfig pix2pix_default_config() {
    GanTrainConfig c;
    c.epochs = 30;
    return c;
}

nlohmann::json to_json(const GanTrainConfig& c) {
    return {{"lambda1", c.lambdas.l1},
            {"lambda2", c.lambdas.l2},
            {"lambda3", c.lambdas.l3},
            {"lambda4", c.lambdas.l4},
            {"lambda5", c.lambda5},
            {"lambda6", c.lambda6},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"controller_loss_mode", std::string(loss_mode_name(c.controller_loss_mode))},
            {"seed", c.seed},
            {"generator_filters", c.generator_filters},
            {"residual_blocks", c.residual_blocks},
            {"unet_depth", c.unet_depth},
            {"discriminator_filters", c.discriminator_filters},
            {"discriminator_layers", c.discriminator_layers},
            {"replay_buffer", c.replay_buffer},
            {"image_height", c.image_height},
            {"image_width", c.image_width}};
}

GanTrainConfig gan_train_config_from_json(const nlohmann::json& j) {
    GanTrainConfig c;
    c.lambdas.l1 = j.value("lambda1", c.lambdas.l1);
    c.lambdas.l2 = j.value("lambda2", c.lambdas.l2);
    c.lambdas.l3 = j.value("lambda3", c.lambdas.l3);
    c.lambdas.l4 = j.value("lambda4", c.lambdas.l4);
    c.lambda5 = j.value("lambda5", c.lambda5);
    c.lambda6 = j.value("lambda6", c.lambda6);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.controller_loss_mode = parse_loss_mode(j.value("controller_loss_mode", std::string("none")));
    c.seed = j.value("seed", c.seed);
    c.generator_filters = j.value("generator_filters", c.generator_filters);
    c.residual_blocks = j.value("residual_blocks", c.residual_blocks);
    c.unet_depth = j.value("unet_depth", c.unet_depth);
    c.discriminator_filters = j.value("discriminator_filters", c.discriminator_filters);
    c.discriminator_layers = j.value("discriminator_layers", c.discriminator_layers);
    c.replay_buffer = j.value("replay_buffer", c.replay_buffer);
    c.image_height = j.value("image_height", c.image_height);
    c.image_width = j.value("image_width", c.image_width);
    c.validate();
    return c;
}

double lr_decay_factor(int epoch, int epochs) {
    const int constant = epochs / 2;
    const int decay = epochs - constant;
    if (epoch < constant || decay <= 0) return 1.0;
    return 1.0 - static_cast<double>(epoch - constant + 1) / static_cast<double>(decay + 1);
}

ImagePool::ImagePool(int capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {}

torch::Tensor ImagePool::query(const torch::Tensor& images) {
    if (capacity_ == 0) return images;
    std::vector<torch::Tensor> out;
    for (long i = 0; i < images.size(0); ++i) {
        torch::Tensor img = images[i].detach().clone();
        if (static_cast<int>(images_.size()) < capacity_) {
            images_.push_back(img);
            out.push_back(img);
            continue;
        }
        const std::uint64_t n = draws_++;
        if (rng_.uniform(0, n) < 0.5) {
            const std::size_t k = rng_.bits(1, n) % images_.size();
            out.push_back(images_[k]);
            images_[k] = img;
        } else {
            out.push_back(img);
        }
    }
    return torch::stack(out);
}

namespace {

torch::Tensor zero_scalar() { return torch::zeros({}); }

CycleGanComponents<double> to_double(const CycleGanComponents<torch::Tensor>& c) {
    return {c.gan_f.item<double>(), c.gan_b.item<double>(), c.cyc_f.item<double>(), c.cyc_b.item<double>(),
            c.idt_f.item<double>(), c.idt_b.item<double>(), c.gs_f.item<double>(), c.gs_b.item<double>()};
}

void accumulate(CycleGanComponents<double>& sum, const CycleGanComponents<double>& c, double w) {
    sum.gan_f += w * c.gan_f;
    sum.gan_b += w * c.gan_b;
    sum.cyc_f += w * c.cyc_f;
    sum.cyc_b += w * c.cyc_b;
    sum.idt_f += w * c.idt_f;
    sum.idt_b += w * c.idt_b;
    sum.gs_f += w * c.gs_f;
    sum.gs_b += w * c.gs_b;
}

struct CycleForward {
    CycleGanComponents<torch::Tensor> components;
    torch::Tensor fake_tr;  // G_f(y_hat)
    torch::Tensor fake_te;  // G_b(y)
};

bool uses_controller(const GanTrainConfig& cfg) { return cfg.controller_loss_mode != ControllerLossMode::None; }

CycleForward cycle_forward(CycleGan& gan, const std::optional<control::Controller>& h, const torch::Tensor& y,
                           const torch::Tensor& y_hat, bool paired) {
    auto& m = *gan.model;
    const auto& lam = gan.config.lambdas;
    CycleForward out;
    out.fake_tr = m.g_f->forward(y_hat);
    const auto rec_te = m.g_b->forward(out.fake_tr);
    out.fake_te = m.g_b->forward(y);
    const auto rec_tr = m.g_f->forward(out.fake_te);

    auto& c = out.components;
    const auto pred_tr = m.d_tr->forward(out.fake_tr);
    const auto pred_te = m.d_te->forward(out.fake_te);
    c.gan_f = F::mse_loss(pred_tr, torch::ones_like(pred_tr));
    c.gan_b = F::mse_loss(pred_te, torch::ones_like(pred_te));
    c.cyc_f = F::l1_loss(rec_te, y_hat);
    c.cyc_b = F::l1_loss(rec_tr, y);
    if (lam.l3 > 0.0) {
        c.idt_f = F::l1_loss(m.g_f->forward(y), y);
        c.idt_b = F::l1_loss(m.g_b->forward(y_hat), y_hat);
    } else {
        c.idt_f = zero_scalar();
        c.idt_b = zero_scalar();
    }
    if (uses_controller(gan.config) && lam.l4 > 0.0) {
        if (!paired) throw std::invalid_argument("cyclegan: controller loss requires paired data");
        if (!h) throw std::invalid_argument("cyclegan: controller loss requires a controller");
        c.gs_f = controller_consistency_loss(*h, y, out.fake_tr);
        c.gs_b = controller_consistency_loss(*h, y, out.fake_te);
    } else {
        c.gs_f = zero_scalar();
        c.gs_b = zero_scalar();
    }
    return out;
}

torch::optim::AdamOptions adam(const GanTrainConfig& cfg) {
    return torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.beta1, cfg.beta2});
}

std::vector<torch::Tensor> concat_params(std::initializer_list<torch::nn::Module*> modules) {
    std::vector<torch::Tensor> out;
    for (auto* m : modules)
        for (auto& p : m->parameters()) out.push_back(p);
    return out;
}

void set_lr(torch::optim::Optimizer& opt, double lr) {
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

std::optional<control::Controller> frozen_copy(const std::optional<control::Controller>& h,
                                               const GanTrainConfig& cfg) {
    if (!uses_controller(cfg)) return std::nullopt;
    if (!h) throw std::invalid_argument("controller_loss_mode " + std::string(loss_mode_name(cfg.controller_loss_mode)) +
                                        " requires a controller");
    std::optional<control::Controller> out = h;
    out->freeze();
    return out;
}

void check_data(const GanData& data, const GanTrainConfig& cfg, bool require_paired, const char* who) {
    if (data.clean.empty() || data.corrupted.empty()) throw std::invalid_argument(std::string(who) + ": empty data");
    if (require_paired && !data.paired) throw std::invalid_argument(std::string(who) + ": paired data required");
    if (uses_controller(cfg) && !data.paired)
        throw std::invalid_argument(std::string(who) + ": controller loss requires paired data");
    if (data.paired && data.clean.size() != data.corrupted.size())
        throw std::invalid_argument(std::string(who) + ": paired sets differ in size");
    if (data.heldout_clean.size() != data.heldout_corrupted.size() && !data.heldout_clean.empty())
        throw std::invalid_argument(std::string(who) + ": held-out sets differ in size");
}

std::pair<int, int> gan_resolution(const GanTrainConfig& cfg, const Image& sample) {
    if (cfg.image_height > 0) return {cfg.image_height, cfg.image_width};
    return {sample.height(), sample.width()};
}

torch::Tensor load_batch(const std::vector<Image>& images, int h, int w) {
    return resize_batch(nn::images_to_tensor(images), h, w).contiguous();
}

/// Batch index tensors for one epoch. Paired data shares one permutation; unpaired data draws the
/// corrupted side independently and runs for the longer of the two sets.
struct EpochPlan {
    std::vector<torch::Tensor> clean;
    std::vector<torch::Tensor> corrupted;
};

EpochPlan plan_epoch(std::size_t n_clean, std::size_t n_corrupted, bool paired, int batch, std::uint64_t seed,
                     int epoch) {
    const auto pc = permutation(n_clean, seed, 0x100 + static_cast<std::uint64_t>(epoch));
    const auto pu = paired ? pc : permutation(n_corrupted, seed, 0x200 + static_cast<std::uint64_t>(epoch));
    const std::size_t steps = paired ? n_clean : std::max(n_clean, n_corrupted);
    EpochPlan plan;
    for (std::size_t b = 0; b < steps; b += static_cast<std::size_t>(batch)) {
        const std::size_t e = std::min(steps, b + static_cast<std::size_t>(batch));
        std::vector<long> ic, iu;
        for (std::size_t i = b; i < e; ++i) {
            ic.push_back(pc[i % n_clean]);
            iu.push_back(pu[i % n_corrupted]);
        }
        plan.clean.push_back(torch::tensor(ic, torch::kLong));
        plan.corrupted.push_back(torch::tensor(iu, torch::kLong));
    }
    return plan;
}

void verify_frozen(const std::optional<control::Controller>& h, const std::string& expected) {
    if (h && h->weights_hash() != expected) throw std::runtime_error("controller weights changed during GAN training");
}

Image single_repair(const torch::Tensor& out) { return nn::tensor_to_image(out[0]); }

template <typename Fn>
torch::Tensor repair_at(const torch::Tensor& corrupted, int h, int w, Fn&& generator) {
    torch::NoGradGuard guard;
    const auto x = resize_batch(corrupted, h, w);
    return resize_batch(generator(x), static_cast<int>(corrupted.size(2)), static_cast<int>(corrupted.size(3)))
        .clamp(0.0, 1.0);
}

nlohmann::json cycle_log_json(const std::vector<CycleGanEpochLog>& log) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : log) {
        const auto& c = e.components;
        out.push_back({{"epoch", e.epoch},
                       {"gan_f", c.gan_f}, {"gan_b", c.gan_b}, {"cyc_f", c.cyc_f}, {"cyc_b", c.cyc_b},
                       {"idt_f", c.idt_f}, {"idt_b", c.idt_b}, {"gs_f", c.gs_f}, {"gs_b", c.gs_b},
                       {"generator_loss", e.generator_loss},
                       {"discriminator_tr", e.discriminator_tr},
                       {"discriminator_te", e.discriminator_te},
                       {"heldout_cycle", e.heldout_cycle},
                       {"learning_rate", e.learning_rate}});
    }
    return out;
}

nlohmann::json sidecar(std::string_view format, const GanTrainConfig& cfg, int h, int w,
                       const std::string& controller_hash, const std::string& weights_hash, const nlohmann::json& log,
                       const nlohmann::json& extra) {
    nlohmann::json meta = {{"format", format},
                           {"version", 1},
                           {"config", to_json(cfg)},
                           {"height", h},
                           {"width", w},
                           {"controller_loss_mode", std::string(loss_mode_name(cfg.controller_loss_mode))},
                           {"controller_sha256", controller_hash},
                           {"weights_sha256", weights_hash},
                           {"log", log}};
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
    return meta;
}

nlohmann::json read_sidecar(const std::filesystem::path& path, std::string_view format) {
    const auto meta = nlohmann::json::parse(io::read_text(path.string() + ".json"));
    if (meta.value("format", "") != format || meta.value("version", 0) != 1)
        throw std::runtime_error("unsupported checkpoint " + path.string());
    return meta;
}

}  // namespace

// ---------------------------------------------------------------- CycleGAN

CycleGanModelImpl::CycleGanModelImpl(const GanTrainConfig& cfg) {
    g_f = register_module("g_f", ResnetGenerator(cfg.generator_filters, cfg.residual_blocks));
    g_b = register_module("g_b", ResnetGenerator(cfg.generator_filters, cfg.residual_blocks));
    d_tr = register_module("d_tr", PatchDiscriminator(3, cfg.discriminator_filters, cfg.discriminator_layers));
    d_te = register_module("d_te", PatchDiscriminator(3, cfg.discriminator_filters, cfg.discriminator_layers));
    init_gan_weights(*this);
}

CycleGanTrainer::CycleGanTrainer(CycleGan& gan, const std::optional<control::Controller>& h)
    : gan_(gan),
      h_(frozen_copy(h, gan.config)),
      opt_g_(concat_params({gan.model->g_f.get(), gan.model->g_b.get()}), adam(gan.config)),
      opt_d_(concat_params({gan.model->d_tr.get(), gan.model->d_te.get()}), adam(gan.config)),
      pool_tr_(gan.config.replay_buffer, derive_seed(gan.config.seed, "pool_tr")),
      pool_te_(gan.config.replay_buffer, derive_seed(gan.config.seed, "pool_te")) {}

CycleGanComponents<torch::Tensor> CycleGanTrainer::components(const torch::Tensor& clean,
                                                              const torch::Tensor& corrupted, bool paired) {
    return cycle_forward(gan_, h_, clean, corrupted, paired).components;
}

void CycleGanTrainer::set_learning_rate(double lr) {
    set_lr(opt_g_, lr);
    set_lr(opt_d_, lr);
}

CycleGanStepLog CycleGanTrainer::step(const torch::Tensor& clean, const torch::Tensor& corrupted, bool paired) {
    auto& m = *gan_.model;
    nn::set_requires_grad(*m.d_tr, false);
    nn::set_requires_grad(*m.d_te, false);
    opt_g_.zero_grad();
    const CycleForward fwd = cycle_forward(gan_, h_, clean, corrupted, paired);
    const auto loss = cyclegan_generator_loss(fwd.components, gan_.config.lambdas);
    loss.backward();
    opt_g_.step();

    nn::set_requires_grad(*m.d_tr, true);
    nn::set_requires_grad(*m.d_te, true);
    opt_d_.zero_grad();
    const auto fake_tr = pool_tr_.query(fwd.fake_tr.detach());
    const auto fake_te = pool_te_.query(fwd.fake_te.detach());
    const auto real_tr = m.d_tr->forward(clean);
    const auto pool_tr = m.d_tr->forward(fake_tr);
    const auto real_te = m.d_te->forward(corrupted);
    const auto pool_te = m.d_te->forward(fake_te);
    const auto d_tr = 0.5 * (F::mse_loss(real_tr, torch::ones_like(real_tr)) +
                             F::mse_loss(pool_tr, torch::zeros_like(pool_tr)));
    const auto d_te = 0.5 * (F::mse_loss(real_te, torch::ones_like(real_te)) +
                             F::mse_loss(pool_te, torch::zeros_like(pool_te)));
    (d_tr + d_te).backward();
    opt_d_.step();
    d_tr_loss_ = d_tr.item<double>();
    d_te_loss_ = d_te.item<double>();
    return {to_double(fwd.components), loss.item<double>()};
}

CycleGan train_cyclegan(const GanData& data, const std::optional<control::Controller>& h,
                        const GanTrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    check_data(data, cfg, false, "train_cyclegan");
    const auto [gh, gw] = gan_resolution(cfg, data.clean.front());

    nn::seed_torch(cfg.seed);
    CycleGan gan{cfg, CycleGanModel(cfg), {}, gh, gw, {}};
    CycleGanTrainer trainer(gan, h);
    const std::optional<control::Controller> frozen = frozen_copy(h, cfg);
    const std::string h_hash = frozen ? frozen->weights_hash() : std::string();
    gan.controller_hash = h_hash;

    const auto x_clean = load_batch(data.clean, gh, gw);
    const auto x_corrupted = load_batch(data.corrupted, gh, gw);
    const auto x_heldout =
        data.heldout_corrupted.empty() ? torch::Tensor() : load_batch(data.heldout_corrupted, gh, gw);
    const auto heldout_cycle = [&]() {
        if (!x_heldout.defined()) return 0.0;
        torch::NoGradGuard guard;
        return F::l1_loss(gan.model->g_b->forward(gan.model->g_f->forward(x_heldout)), x_heldout).item<double>();
    };

    CycleGanEpochLog start;
    start.heldout_cycle = heldout_cycle();
    start.learning_rate = cfg.learning_rate;
    gan.log.push_back(start);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate * lr_decay_factor(epoch, cfg.epochs);
        trainer.set_learning_rate(lr);
        const EpochPlan plan = plan_epoch(data.clean.size(), data.corrupted.size(), data.paired, cfg.batch_size,
                                          cfg.seed, epoch);
        CycleGanEpochLog entry;
        entry.epoch = epoch + 1;
        entry.learning_rate = lr;
        double total = 0.0;
        for (std::size_t b = 0; b < plan.clean.size(); ++b) {
            const double w = static_cast<double>(plan.clean[b].size(0));
            const auto step = trainer.step(x_clean.index_select(0, plan.clean[b]),
                                           x_corrupted.index_select(0, plan.corrupted[b]), data.paired);
            accumulate(entry.components, step.components, w);
            entry.generator_loss += w * step.generator_loss;
            entry.discriminator_tr += w * trainer.discriminator_tr_loss();
            entry.discriminator_te += w * trainer.discriminator_te_loss();
            total += w;
        }
        CycleGanComponents<double> mean{};
        accumulate(mean, entry.components, 1.0 / total);
        entry.components = mean;
        entry.generator_loss /= total;
        entry.discriminator_tr /= total;
        entry.discriminator_te /= total;
        entry.heldout_cycle = heldout_cycle();
        gan.log.push_back(entry);
        verify_frozen(frozen, h_hash);
        if (on_epoch) on_epoch(epoch + 1);
    }
    verify_frozen(frozen, h_hash);
    gan.model->eval();
    return gan;
}

torch::Tensor cyclegan_repair_batch(const CycleGan& gan, const torch::Tensor& corrupted) {
    return repair_at(corrupted, gan.height, gan.width, [g = gan.model->g_f](const torch::Tensor& x) mutable { return g->forward(x); });
}

Image cyclegan_repair(const CycleGan& gan, const Image& corrupted) {
    return single_repair(cyclegan_repair_batch(gan, nn::image_to_tensor(corrupted)));
}

sim::RepairFn cyclegan_repair_fn(const CycleGan& gan) {
    return [gan](const Image& y) { return cyclegan_repair(gan, y); };
}

void CycleGan::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
    nn::save_module(model.ptr(), path);
    io::write_text(path.string() + ".json",
                   sidecar("repairlab.cyclegan", config, height, width, controller_hash, nn::hash_module(*model),
                           cycle_log_json(log), extra)
                           .dump(2) +
                       "\n");
}

CycleGan CycleGan::load(const std::filesystem::path& path) {
    const auto meta = read_sidecar(path, "repairlab.cyclegan");
    CycleGan gan;
    gan.config = gan_train_config_from_json(meta.at("config"));
    gan.model = CycleGanModel(gan.config);
    gan.height = meta.at("height");
    gan.width = meta.at("width");
    gan.controller_hash = meta.value("controller_sha256", "");
    nn::load_module(gan.model.ptr(), path);
    if (nn::hash_module(*gan.model) != meta.at("weights_sha256").get<std::string>())
        throw std::runtime_error("cyclegan: weight hash mismatch in " + path.string());
    gan.model->eval();
    return gan;
}

// ---------------------------------------------------------------- pix2pix

Pix2PixModelImpl::Pix2PixModelImpl(const GanTrainConfig& cfg) {
    g = register_module("g", UnetGenerator(cfg.generator_filters, cfg.unet_depth));
    d = register_module("d", PatchDiscriminator(6, cfg.discriminator_filters, cfg.discriminator_layers));
    init_gan_weights(*this);
}

Pix2PixComponents pix2pix_components(Pix2Pix& p2p, const std::optional<control::Controller>& h,
                                     const torch::Tensor& clean, const torch::Tensor& corrupted) {
    if (clean.sizes() != corrupted.sizes()) throw std::invalid_argument("pix2pix: batches are not paired");
    auto& m = *p2p.model;
    const auto fake = m.g->forward(corrupted);
    const auto pred = m.d->forward(torch::cat({corrupted, fake}, 1));
    Pix2PixComponents c;
    c.gan = F::binary_cross_entropy_with_logits(pred, torch::ones_like(pred));
    c.l1 = F::l1_loss(fake, clean);
    if (uses_controller(p2p.config) && p2p.config.lambda6 > 0.0) {
        if (!h) throw std::invalid_argument("pix2pix: controller loss requires a controller");
        c.gs = controller_consistency_loss(*h, clean, fake);
    } else {
        c.gs = zero_scalar();
    }
    c.total = pix2pix_generator_loss(c.gan, c.l1, c.gs, p2p.config.lambda5, p2p.config.lambda6);
    return c;
}

Pix2Pix train_pix2pix(const GanData& data, const std::optional<control::Controller>& h, const GanTrainConfig& cfg,
                      const EpochCallback& on_epoch) {
    cfg.validate();
    check_data(data, cfg, true, "train_pix2pix");
    const auto [gh, gw] = gan_resolution(cfg, data.clean.front());

    nn::seed_torch(cfg.seed);
    Pix2Pix p2p{cfg, Pix2PixModel(cfg), {}, gh, gw, {}};
    const std::optional<control::Controller> frozen = frozen_copy(h, cfg);
    const std::string h_hash = frozen ? frozen->weights_hash() : std::string();
    p2p.controller_hash = h_hash;
    auto& m = *p2p.model;
    torch::optim::Adam opt_g(m.g->parameters(), adam(cfg));
    torch::optim::Adam opt_d(m.d->parameters(), adam(cfg));

    const auto x_clean = load_batch(data.clean, gh, gw);
    const auto x_corrupted = load_batch(data.corrupted, gh, gw);
    torch::Tensor hx_clean, hx_corrupted;
    if (!data.heldout_clean.empty()) {
        hx_clean = load_batch(data.heldout_clean, gh, gw);
        hx_corrupted = load_batch(data.heldout_corrupted, gh, gw);
    }
    const auto heldout_l1 = [&]() {
        if (!hx_clean.defined()) return 0.0;
        torch::NoGradGuard guard;
        return F::l1_loss(m.g->forward(hx_corrupted), hx_clean).item<double>();
    };

    Pix2PixEpochLog start;
    start.heldout_l1 = heldout_l1();
    start.learning_rate = cfg.learning_rate;
    p2p.log.push_back(start);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate * lr_decay_factor(epoch, cfg.epochs);
        set_lr(opt_g, lr);
        set_lr(opt_d, lr);
        const EpochPlan plan = plan_epoch(data.clean.size(), data.corrupted.size(), true, cfg.batch_size, cfg.seed, epoch);
        Pix2PixEpochLog entry;
        entry.epoch = epoch + 1;
        entry.learning_rate = lr;
        double total = 0.0;
        for (std::size_t b = 0; b < plan.clean.size(); ++b) {
            const auto y = x_clean.index_select(0, plan.clean[b]);
            const auto y_hat = x_corrupted.index_select(0, plan.corrupted[b]);
            nn::set_requires_grad(*m.d, false);
            opt_g.zero_grad();
            const auto c = pix2pix_components(p2p, frozen, y, y_hat);
            c.total.backward();
            opt_g.step();

            nn::set_requires_grad(*m.d, true);
            opt_d.zero_grad();
            torch::Tensor fake;
            {
                torch::NoGradGuard guard;
                fake = m.g->forward(y_hat);
            }
            const auto real_pred = m.d->forward(torch::cat({y_hat, y}, 1));
            const auto fake_pred = m.d->forward(torch::cat({y_hat, fake}, 1));
            const auto d_loss =
                0.5 * (F::binary_cross_entropy_with_logits(real_pred, torch::ones_like(real_pred)) +
                       F::binary_cross_entropy_with_logits(fake_pred, torch::zeros_like(fake_pred)));
            d_loss.backward();
            opt_d.step();

            const double w = static_cast<double>(y.size(0));
            entry.gan += w * c.gan.item<double>();
            entry.l1 += w * c.l1.item<double>();
            entry.gs += w * c.gs.item<double>();
            entry.generator_loss += w * c.total.item<double>();
            entry.discriminator += w * d_loss.item<double>();
            total += w;
        }
        entry.gan /= total;
        entry.l1 /= total;
        entry.gs /= total;
        entry.generator_loss /= total;
        entry.discriminator /= total;
        entry.heldout_l1 = heldout_l1();
        p2p.log.push_back(entry);
        verify_frozen(frozen, h_hash);
        if (on_epoch) on_epoch(epoch + 1);
    }
    verify_frozen(frozen, h_hash);
    m.eval();
    return p2p;
}

torch::Tensor pix2pix_repair_batch(const Pix2Pix& p2p, const torch::Tensor& corrupted) {
    return repair_at(corrupted, p2p.height, p2p.width, [g = p2p.model->g](const torch::Tensor& x) mutable { return g->forward(x); });
}

Image pix2pix_repair(const Pix2Pix& p2p, const Image& corrupted) {
    return single_repair(pix2pix_repair_batch(p2p, nn::image_to_tensor(corrupted)));
}

sim::RepairFn pix2pix_repair_fn(const Pix2Pix& p2p) {
    return [p2p](const Image& y) { return pix2pix_repair(p2p, y); };
}

void Pix2Pix::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
    nlohmann::json log_json = nlohmann::json::array();
    for (const auto& e : log)
        log_json.push_back({{"epoch", e.epoch}, {"gan", e.gan}, {"l1", e.l1}, {"gs", e.gs},
                            {"generator_loss", e.generator_loss}, {"discriminator", e.discriminator},
                            {"heldout_l1", e.heldout_l1}, {"learning_rate", e.learning_rate}});
    nn::save_module(model.ptr(), path);
    io::write_text(path.string() + ".json",
                   sidecar("repairlab.pix2pix", config, height, width, controller_hash, nn::hash_module(*model),
                           log_json, extra)
                           .dump(2) +
                       "\n");
}

Pix2Pix Pix2Pix::load(const std::filesystem::path& path) {
    const auto meta = read_sidecar(path, "repairlab.pix2pix");
    Pix2Pix p2p;
    p2p.config = gan_train_config_from_json(meta.at("config"));
    p2p.model = Pix2PixModel(p2p.config);
    p2p.height = meta.at("height");
    p2p.width = meta.at("width");
    p2p.controller_hash = meta.value("controller_sha256", "");
    nn::load_module(p2p.model.ptr(), path);
    if (nn::hash_module(*p2p.model) != meta.at("weights_sha256").get<std::string>())
        throw std::runtime_error("pix2pix: weight hash mismatch in " + path.string());
    p2p.model->eval();
    return p2p;
}

// ---------------------------------------------------------------- VAE

nlohmann::json to_json(const VaeConfig& c) {
    return {{"latent", c.latent},         {"filters", c.filters},
            {"epochs", c.epochs},         {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate}, {"kl_weight", c.kl_weight},
            {"seed", c.seed}};
}

VaeConfig vae_config_from_json(const nlohmann::json& j) {
    VaeConfig c;
    c.latent = j.value("latent", c.latent);
    c.filters = j.value("filters", c.filters);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.kl_weight = j.value("kl_weight", c.kl_weight);
    c.seed = j.value("seed", c.seed);
    return c;
}

torch::Tensor vae_kl(const torch::Tensor& mu, const torch::Tensor& logvar) {
    return (-0.5 * (1.0 + logvar - mu.pow(2) - logvar.exp())).sum(1).mean();
}

torch::Tensor vae_reconstruction(const torch::Tensor& reconstruction, const torch::Tensor& target) {
    return (reconstruction - target).pow(2).flatten(1).sum(1).mean();
}

Vae train_vae(const std::vector<Image>& clean, const VaeConfig& cfg) {
    if (clean.empty()) throw std::invalid_argument("train_vae: empty data");
    if (cfg.epochs < 0 || cfg.batch_size <= 0 || !(cfg.learning_rate > 0.0) || !(cfg.kl_weight >= 0.0))
        throw std::invalid_argument("train_vae: bad config");
    const int h = clean.front().height(), w = clean.front().width();
    nn::seed_torch(cfg.seed);
    Vae vae{cfg, VaeNet(h, w, cfg.filters, cfg.latent), h, w, {}};
    torch::optim::Adam opt(vae.net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
    const auto x = nn::images_to_tensor(clean);
    const std::size_t n = clean.size();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = permutation(n, cfg.seed, 0x300 + static_cast<std::uint64_t>(epoch));
        VaeEpochLog entry;
        entry.epoch = epoch + 1;
        double total = 0.0;
        for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(n, b + static_cast<std::size_t>(cfg.batch_size));
            const auto idx = torch::tensor(std::vector<long>(order.begin() + b, order.begin() + e), torch::kLong);
            const auto batch = x.index_select(0, idx);
            opt.zero_grad();
            const auto out = vae.net->forward(batch, true);
            const auto rec = vae_reconstruction(out.reconstruction, batch);
            const auto kl = vae_kl(out.mu, out.logvar);
            (rec + cfg.kl_weight * kl).backward();
            opt.step();
            const double wgt = static_cast<double>(e - b);
            entry.reconstruction += wgt * rec.item<double>();
            entry.kl += wgt * kl.item<double>();
            total += wgt;
        }
        entry.reconstruction /= total;
        entry.kl /= total;
        vae.log.push_back(entry);
    }
    vae.net->eval();
    return vae;
}

torch::Tensor vae_repair_batch(const Vae& vae, const torch::Tensor& corrupted) {
    return repair_at(corrupted, vae.height, vae.width,
                     [net = vae.net](const torch::Tensor& x) mutable { return net->forward(x, false).reconstruction; });
}

Image vae_repair(const Vae& vae, const Image& corrupted) {
    return single_repair(vae_repair_batch(vae, nn::image_to_tensor(corrupted)));
}

sim::RepairFn vae_repair_fn(const Vae& vae) {
    return [vae](const Image& y) { return vae_repair(vae, y); };
}

void Vae::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
    nn::save_module(net.ptr(), path);
    nlohmann::json log_json = nlohmann::json::array();
    for (const auto& e : log)
        log_json.push_back({{"epoch", e.epoch}, {"reconstruction", e.reconstruction}, {"kl", e.kl}});
    nlohmann::json meta = {{"format", "repairlab.vae"}, {"version", 1},       {"config", to_json(config)},
                           {"height", height},          {"width", width},     {"weights_sha256", nn::hash_module(*net)},
                           {"log", log_json}};
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
    io::write_text(path.string() + ".json", meta.dump(2) + "\n");
}

Vae Vae::load(const std::filesystem::path& path) {
    const auto meta = read_sidecar(path, "repairlab.vae");
    Vae vae;
    vae.config = vae_config_from_json(meta.at("config"));
    vae.height = meta.at("height");
    vae.width = meta.at("width");
    vae.net = VaeNet(vae.height, vae.width, vae.config.filters, vae.config.latent);
    nn::load_module(vae.net.ptr(), path);
    if (nn::hash_module(*vae.net) != meta.at("weights_sha256").get<std::string>())
        throw std::runtime_error("vae: weight hash mismatch in " + path.string());
    vae.net->eval();
    return vae;
}

}  // namespace repairlab::genrepair
