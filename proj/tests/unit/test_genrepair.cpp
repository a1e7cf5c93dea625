#include <gtest/gtest.h>

#include <cmath>
#include <optional>

#include "repairlab/control/controller.hpp"
#include "repairlab/genrepair/networks.hpp"
#include "repairlab/genrepair/repair.hpp"
#include "repairlab/io.hpp"
#include "repairlab/tensor.hpp"
#include "test_helpers.hpp"

using namespace repairlab;
using namespace repairlab::genrepair;

namespace {

std::vector<Image> images(int n, int h, int w, float phase0) {
    std::vector<Image> out;
    for (int i = 0; i < n; ++i) out.push_back(fixtures::gradient_image(h, w, phase0 + 0.37f * static_cast<float>(i)));
    return out;
}

std::vector<Image> darker(const std::vector<Image>& in, float k) {
    std::vector<Image> out = in;
    for (auto& img : out)
        for (auto& v : img.data()) v *= k;
    return out;
}

GanTrainConfig small_gan(int epochs) {
    GanTrainConfig c;
    c.epochs = epochs;
    c.batch_size = 2;
    c.generator_filters = 4;
    c.residual_blocks = 1;
    c.unet_depth = 2;
    c.discriminator_filters = 4;
    c.discriminator_layers = 2;
    c.replay_buffer = 4;
    c.seed = 11;
    return c;
}

GanData paired_data(int n = 6) {
    GanData d;
    d.clean = images(n, 16, 16, 0.0f);
    d.corrupted = darker(d.clean, 0.4f);
    d.paired = true;
    d.heldout_clean = images(2, 16, 16, 5.0f);
    d.heldout_corrupted = darker(d.heldout_clean, 0.4f);
    return d;
}

control::Controller tiny_controller(std::uint64_t seed) { return {control::ControllerArch::tiny(16, 16), seed}; }

CycleGanComponents<double> unit_components() { return {1, 1, 1, 1, 1, 1, 1, 1}; }

void expect_repair_contract(const Image& in, const Image& a, const Image& b) {
    ASSERT_EQ(a.height(), in.height());
    ASSERT_EQ(a.width(), in.width());
    ASSERT_EQ(a.data().size(), b.data().size());
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        ASSERT_EQ(a.data()[i], b.data()[i]);
        ASSERT_GE(a.data()[i], 0.0f);
        ASSERT_LE(a.data()[i], 1.0f);
    }
}

}  // namespace

// ---- loss arithmetic

TEST(GenrepairLoss, CycleGanUnitComponents) {
    EXPECT_NEAR(cyclegan_generator_loss(unit_components(), CycleGanLambdas{}), 52.0, 1e-6);
}

TEST(GenrepairLoss, CycleGanMatchesHandExpansion) {
    const CycleGanComponents<double> c{0.3, 0.7, 0.11, 0.13, 0.05, 0.07, 0.2, 0.4};
    const CycleGanLambdas l{2.0, 3.0, 0.25, 5.0};
    const double expect = 0.3 + 0.7 + 2.0 * 0.11 + 3.0 * 0.13 + 0.25 * (3.0 * 0.05 + 2.0 * 0.07) + 5.0 * (0.2 + 0.4);
    EXPECT_NEAR(cyclegan_generator_loss(c, l), expect, 1e-12);
}

TEST(GenrepairLoss, CycleGanLambda4ZeroIsStandardObjective) {
    auto c = unit_components();
    CycleGanLambdas l;
    l.l4 = 0.0;
    EXPECT_NEAR(cyclegan_generator_loss(c, l), 32.0, 1e-12);
    c.gs_f = 123.0;
    c.gs_b = -7.0;
    EXPECT_NEAR(cyclegan_generator_loss(c, l), 32.0, 1e-12);
}

TEST(GenrepairLoss, ZeroComponentsGiveZero) {
    EXPECT_EQ(cyclegan_generator_loss(CycleGanComponents<double>{0, 0, 0, 0, 0, 0, 0, 0}, CycleGanLambdas{}), 0.0);
    EXPECT_EQ(pix2pix_generator_loss(0.0, 0.0, 0.0, 100.0, 100.0), 0.0);
}

TEST(GenrepairLoss, Pix2PixUnitComponents) {
    EXPECT_NEAR(pix2pix_generator_loss(1.0, 1.0, 1.0, 100.0, 100.0), 201.0, 1e-6);
    EXPECT_NEAR(pix2pix_generator_loss(1.0, 1.0, 9.0, 100.0, 0.0), 101.0, 1e-12);
}

TEST(GenrepairLoss, ConfigDefaults) {
    const GanTrainConfig c;
    EXPECT_EQ(c.lambdas, (CycleGanLambdas{10, 10, 0.5, 10}));
    EXPECT_EQ(c.lambda5, 100.0);
    EXPECT_EQ(c.lambda6, 100.0);
    EXPECT_EQ(c.epochs, 100);
    EXPECT_EQ(pix2pix_default_config().epochs, 30);
}

TEST(GenrepairLoss, ConfigJsonRoundTripAndValidation) {
    GanTrainConfig c = small_gan(3);
    c.lambdas.l3 = 0.75;
    c.controller_loss_mode = ControllerLossMode::OnHAdv;
    const auto back = gan_train_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    auto bad = to_json(c);
    bad["lambda4"] = -1.0;
    EXPECT_THROW(gan_train_config_from_json(bad), std::invalid_argument);
    bad = to_json(c);
    bad["controller_loss_mode"] = "sometimes";
    EXPECT_THROW(gan_train_config_from_json(bad), std::invalid_argument);
}

TEST(GenrepairLoss, LearningRateSchedule) {
    EXPECT_EQ(lr_decay_factor(0, 4), 1.0);
    EXPECT_EQ(lr_decay_factor(1, 4), 1.0);
    EXPECT_NEAR(lr_decay_factor(2, 4), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(lr_decay_factor(3, 4), 1.0 / 3.0, 1e-12);
}

// ---- controller-consistency loss

TEST(ConsistencyLoss, Arithmetic) {
    const auto a = torch::tensor({0.2, 0.5}, torch::kDouble).view({1, 2});
    const auto b = torch::tensor({-0.1, 0.7}, torch::kDouble).view({1, 2});
    EXPECT_NEAR(action_consistency(a, b).item<double>(), 0.25, 1e-12);
    EXPECT_NEAR(action_consistency(b, a).item<double>(), 0.25, 1e-12);
}

TEST(ConsistencyLoss, IdentitySymmetryAndPairing) {
    const auto h = tiny_controller(3);
    const auto y = nn::images_to_tensor(images(3, 16, 16, 0.0f));
    const auto y2 = nn::images_to_tensor(darker(images(3, 16, 16, 0.0f), 0.3f));
    EXPECT_EQ(controller_consistency_loss(h, y, y).item<double>(), 0.0);
    EXPECT_EQ(controller_consistency_loss(h, y, y2).item<double>(), controller_consistency_loss(h, y2, y).item<double>());
    EXPECT_GT(controller_consistency_loss(h, y, y2).item<double>(), 0.0);
    EXPECT_THROW(controller_consistency_loss(h, y, y2.narrow(0, 0, 2)), std::invalid_argument);
}

TEST(ConsistencyLoss, ResizesToControllerResolution) {
    const auto h = tiny_controller(3);
    const auto y = nn::images_to_tensor(images(2, 32, 32, 0.0f));
    EXPECT_NO_THROW(controller_consistency_loss(h, y, y * 0.5));
}

TEST(ConsistencyLoss, GradientMatchesFiniteDifferences) {
    torch::manual_seed(5);
    TinyGenerator g(4);
    g->to(torch::kDouble);
    control::Controller h(control::ControllerArch::tiny(8, 8), 9);
    h.net()->to(torch::kDouble);
    h.freeze();

    const auto y = nn::images_to_tensor(images(2, 8, 8, 0.0f)).to(torch::kDouble);
    const auto y_hat = (y * 0.5).contiguous();
    const auto loss_fn = [&]() { return controller_consistency_loss(h, y, g->forward(y_hat)); };

    g->zero_grad();
    loss_fn().backward();
    int significant = 0, good = 0;
    const double eps = 1e-6;
    for (auto& p : g->parameters()) {
        const auto grad = p.grad().clone();
        auto flat = p.data().view(-1);
        for (long i = 0; i < flat.numel(); ++i) {
            const double analytic = grad.view(-1)[i].item<double>();
            const double orig = flat[i].item<double>();
            double plus = 0.0, minus = 0.0;
            {
                torch::NoGradGuard guard;
                flat[i] = orig + eps;
                plus = loss_fn().item<double>();
                flat[i] = orig - eps;
                minus = loss_fn().item<double>();
                flat[i] = orig;
            }
            const double numeric = (plus - minus) / (2 * eps);
            if (std::max(std::abs(analytic), std::abs(numeric)) <= 1e-6) continue;
            ++significant;
            const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
            if (rel < 1e-3) ++good;
        }
    }
    ASSERT_GT(significant, 20);
    EXPECT_GE(static_cast<double>(good), 0.95 * significant) << good << "/" << significant;
}

// ---- networks

TEST(GenrepairNetworks, GeneratorsPreserveShapeAndRange) {
    torch::manual_seed(0);
    const auto x = torch::rand({2, 3, 16, 24});
    for (const auto& y : {ResnetGenerator(4, 2)->forward(x), UnetGenerator(4, 3)->forward(x),
                          TinyGenerator(3)->forward(x)}) {
        EXPECT_EQ(y.sizes(), x.sizes());
        EXPECT_GE(y.min().item<float>(), 0.0f);
        EXPECT_LE(y.max().item<float>(), 1.0f);
    }
    EXPECT_THROW(ResnetGenerator(4, 1)->forward(torch::rand({1, 3, 10, 16})), std::invalid_argument);
    EXPECT_THROW(UnetGenerator(4, 3)->forward(torch::rand({1, 3, 12, 16})), std::invalid_argument);
}

TEST(GenrepairNetworks, PatchDiscriminatorReceptiveField) {
    EXPECT_EQ(patch_receptive_field(3), 70);
    EXPECT_EQ(patch_receptive_field(1), 16);
    // Output map size follows from the same layer arithmetic.
    const auto out = PatchDiscriminator(3, 4, 3)->forward(torch::rand({1, 3, 64, 64}));
    EXPECT_EQ(out.size(1), 1);
    EXPECT_EQ(out.size(2), 6);
}

TEST(GenrepairNetworks, ImagePoolBehaviour) {
    ImagePool none(0, 1);
    const auto x = torch::rand({3, 3, 4, 4});
    EXPECT_TRUE(torch::equal(none.query(x), x));
    ImagePool pool(2, 1);
    EXPECT_TRUE(torch::equal(pool.query(x.narrow(0, 0, 2)), x.narrow(0, 0, 2)));
    EXPECT_EQ(pool.size(), 2u);
    const auto out = pool.query(x.narrow(0, 2, 1));
    EXPECT_EQ(out.sizes(), x.narrow(0, 2, 1).sizes());
    EXPECT_EQ(pool.size(), 2u);
}

// ---- CycleGAN

TEST(CycleGan, StepRecomposesFromIndependentComponents) {
    auto cfg = small_gan(1);
    cfg.controller_loss_mode = ControllerLossMode::OnH;
    const auto h = tiny_controller(2);
    nn::seed_torch(cfg.seed);
    CycleGan gan{cfg, CycleGanModel(cfg), {}, 16, 16, {}};
    CycleGanTrainer trainer(gan, h);
    const auto d = paired_data(2);
    const auto y = nn::images_to_tensor(d.clean), y_hat = nn::images_to_tensor(d.corrupted);

    CycleGanComponents<double> before{};
    {
        const auto c = trainer.components(y, y_hat, true);
        before = {c.gan_f.item<double>(), c.gan_b.item<double>(), c.cyc_f.item<double>(), c.cyc_b.item<double>(),
                  c.idt_f.item<double>(), c.idt_b.item<double>(), c.gs_f.item<double>(), c.gs_b.item<double>()};
    }
    const auto step = trainer.step(y, y_hat, true);
    const double recomposed = cyclegan_generator_loss(before, cfg.lambdas);
    EXPECT_NEAR(step.generator_loss, recomposed, 1e-5 * std::abs(recomposed));
    EXPECT_NEAR(step.generator_loss, cyclegan_generator_loss(step.components, cfg.lambdas),
                1e-5 * std::abs(step.generator_loss));
    EXPECT_GT(before.gs_f, 0.0);
    for (double v : {before.gan_f, before.gan_b, before.cyc_f, before.cyc_b, before.idt_f, before.idt_b})
        EXPECT_TRUE(std::isfinite(v) && v >= 0.0);
}

TEST(CycleGan, ControllerWeightsBitIdenticalAcrossTraining) {
    auto cfg = small_gan(2);
    cfg.controller_loss_mode = ControllerLossMode::OnH;
    const auto h = tiny_controller(4);
    const std::string before = h.weights_hash();
    int callbacks = 0;
    const auto gan = train_cyclegan(paired_data(), h, cfg, [&](int) {
        ++callbacks;
        EXPECT_EQ(h.weights_hash(), before);
    });
    EXPECT_EQ(callbacks, 2);
    EXPECT_EQ(h.weights_hash(), before);
    EXPECT_EQ(gan.controller_hash, before);
    ASSERT_EQ(gan.log.size(), 3u);
    EXPECT_GT(gan.log[1].components.gs_f, 0.0);
}

TEST(CycleGan, ControllerLossRequiresPairedDataAndController) {
    auto cfg = small_gan(1);
    cfg.controller_loss_mode = ControllerLossMode::OnH;
    auto d = paired_data();
    d.paired = false;
    EXPECT_THROW(train_cyclegan(d, tiny_controller(1), cfg), std::invalid_argument);
    EXPECT_THROW(train_cyclegan(paired_data(), std::nullopt, cfg), std::invalid_argument);
    cfg.controller_loss_mode = ControllerLossMode::None;
    EXPECT_NO_THROW(train_cyclegan(d, std::nullopt, small_gan(0)));
}

TEST(CycleGan, ZeroControllerWeightIsControllerIndependent) {
    auto cfg = small_gan(2);
    cfg.controller_loss_mode = ControllerLossMode::OnH;
    cfg.lambdas.l4 = 0.0;
    const auto a = train_cyclegan(paired_data(), tiny_controller(1), cfg);
    const auto b = train_cyclegan(paired_data(), tiny_controller(2), cfg);
    EXPECT_EQ(nn::hash_module(*a.model), nn::hash_module(*b.model));
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        EXPECT_EQ(a.log[i].generator_loss, b.log[i].generator_loss);
        EXPECT_EQ(a.log[i].heldout_cycle, b.log[i].heldout_cycle);
    }
    // Mode none ignores whatever controller is supplied.
    cfg.controller_loss_mode = ControllerLossMode::None;
    cfg.lambdas.l4 = 10.0;
    const auto c = train_cyclegan(paired_data(), tiny_controller(1), cfg);
    const auto e = train_cyclegan(paired_data(), std::nullopt, cfg);
    EXPECT_EQ(nn::hash_module(*c.model), nn::hash_module(*e.model));
}

TEST(CycleGan, UnpairedTrainingRunsLongerDomain) {
    auto cfg = small_gan(1);
    GanData d;
    d.clean = images(5, 16, 16, 0.0f);
    d.corrupted = darker(images(3, 16, 16, 9.0f), 0.5f);
    const auto gan = train_cyclegan(d, std::nullopt, cfg);
    ASSERT_EQ(gan.log.size(), 2u);
    EXPECT_TRUE(std::isfinite(gan.log[1].generator_loss));
    EXPECT_EQ(gan.log[1].components.gs_f, 0.0);
}

TEST(CycleGan, RepairContractAndCheckpointRoundTrip) {
    const auto gan = train_cyclegan(paired_data(), std::nullopt, small_gan(1));
    const Image in = darker(images(1, 16, 16, 2.0f), 0.5f)[0];
    expect_repair_contract(in, cyclegan_repair(gan, in), cyclegan_repair(gan, in));
    const auto fn = cyclegan_repair_fn(gan);
    expect_repair_contract(in, fn(in), cyclegan_repair(gan, in));

    fixtures::TempDir dir("cyclegan_ckpt");
    gan.save(dir.path() / "g.pt", {{"note", "x"}});
    const auto back = CycleGan::load(dir.path() / "g.pt");
    expect_repair_contract(in, cyclegan_repair(back, in), cyclegan_repair(gan, in));
    const auto meta = nlohmann::json::parse(io::read_text((dir.path() / "g.pt.json").string()));
    EXPECT_EQ(meta.at("config").at("lambda4"), gan.config.lambdas.l4);
    EXPECT_EQ(meta.at("note"), "x");
}

TEST(CycleGan, ResolutionOverrideResizesOutputBack) {
    auto cfg = small_gan(1);
    cfg.image_height = 12;
    cfg.image_width = 12;
    const auto gan = train_cyclegan(paired_data(), std::nullopt, cfg);
    const Image in = images(1, 16, 16, 1.0f)[0];
    const Image out = cyclegan_repair(gan, in);
    EXPECT_EQ(out.height(), 16);
    EXPECT_EQ(out.width(), 16);
}

// ---- pix2pix

TEST(Pix2Pix, ComponentsRecompose) {
    auto cfg = small_gan(1);
    cfg.controller_loss_mode = ControllerLossMode::OnH;
    nn::seed_torch(cfg.seed);
    Pix2Pix p2p{cfg, Pix2PixModel(cfg), {}, 16, 16, {}};
    const auto d = paired_data(2);
    const auto c = pix2pix_components(p2p, tiny_controller(3), nn::images_to_tensor(d.clean),
                                      nn::images_to_tensor(d.corrupted));
    const double recomposed =
        pix2pix_generator_loss(c.gan.item<double>(), c.l1.item<double>(), c.gs.item<double>(), cfg.lambda5, cfg.lambda6);
    EXPECT_NEAR(c.total.item<double>(), recomposed, 1e-5 * std::abs(recomposed));
    EXPECT_GT(c.gs.item<double>(), 0.0);
}

TEST(Pix2Pix, RequiresPairedData) {
    auto d = paired_data();
    d.paired = false;
    EXPECT_THROW(train_pix2pix(d, std::nullopt, small_gan(1)), std::invalid_argument);
}

TEST(Pix2Pix, ZeroControllerWeightIsControllerIndependentAndFrozen) {
    auto cfg = small_gan(2);
    cfg.controller_loss_mode = ControllerLossMode::OnH;
    cfg.lambda6 = 0.0;
    const auto a = train_pix2pix(paired_data(), tiny_controller(1), cfg);
    const auto b = train_pix2pix(paired_data(), tiny_controller(2), cfg);
    EXPECT_EQ(nn::hash_module(*a.model), nn::hash_module(*b.model));

    cfg.lambda6 = 100.0;
    const auto h = tiny_controller(5);
    const auto before = h.weights_hash();
    const auto c = train_pix2pix(paired_data(), h, cfg);
    EXPECT_EQ(h.weights_hash(), before);
    EXPECT_EQ(c.controller_hash, before);
}

TEST(Pix2Pix, RepairContractAndHeldoutLog) {
    const auto p2p = train_pix2pix(paired_data(), std::nullopt, small_gan(2));
    ASSERT_EQ(p2p.log.size(), 3u);
    for (const auto& e : p2p.log) EXPECT_TRUE(std::isfinite(e.heldout_l1));
    const Image in = darker(images(1, 16, 16, 2.0f), 0.5f)[0];
    expect_repair_contract(in, pix2pix_repair(p2p, in), pix2pix_repair(p2p, in));

    fixtures::TempDir dir("p2p_ckpt");
    p2p.save(dir.path() / "p.pt");
    const auto back = Pix2Pix::load(dir.path() / "p.pt");
    expect_repair_contract(in, pix2pix_repair(back, in), pix2pix_repair(p2p, in));
}

// ---- VAE

TEST(Vae, KlOfStandardLatentIsZero) {
    const auto mu = torch::zeros({4, 8});
    const auto logvar = torch::zeros({4, 8});
    EXPECT_EQ(vae_kl(mu, logvar).item<double>(), 0.0);
    EXPECT_GT(vae_kl(mu + 0.5, logvar).item<double>(), 0.0);
    EXPECT_NEAR(vae_kl(torch::ones({1, 1}), torch::zeros({1, 1})).item<double>(), 0.5, 1e-7);
}

TEST(Vae, ElboComponentsNonNegativeAndReconstructionDecreases) {
    VaeConfig cfg;
    cfg.latent = 8;
    cfg.filters = 4;
    cfg.epochs = 12;
    cfg.batch_size = 4;
    cfg.seed = 3;
    const auto clean = images(12, 16, 16, 0.0f);
    const auto vae = train_vae(clean, cfg);
    ASSERT_EQ(vae.log.size(), 12u);
    for (const auto& e : vae.log) {
        EXPECT_GE(e.reconstruction, 0.0);
        EXPECT_GE(e.kl, 0.0);
    }
    EXPECT_LT(vae.log.back().reconstruction, vae.log.front().reconstruction);

    torch::NoGradGuard guard;
    const auto x = nn::images_to_tensor(clean);
    VaeNet net = vae.net;
    const auto out = net->forward(x, true);
    EXPECT_GE(vae_reconstruction(out.reconstruction, x).item<double>(), 0.0);
    EXPECT_GE(vae_kl(out.mu, out.logvar).item<double>(), 0.0);
}

TEST(Vae, RepairIsDeterministicAndRoundTrips) {
    VaeConfig cfg;
    cfg.latent = 8;
    cfg.filters = 4;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    const auto vae = train_vae(images(4, 16, 16, 0.0f), cfg);
    const Image in = darker(images(1, 16, 16, 2.0f), 0.5f)[0];
    expect_repair_contract(in, vae_repair(vae, in), vae_repair(vae, in));
    expect_repair_contract(in, vae_repair_fn(vae)(in), vae_repair(vae, in));

    fixtures::TempDir dir("vae_ckpt");
    vae.save(dir.path() / "v.pt");
    const auto back = Vae::load(dir.path() / "v.pt");
    expect_repair_contract(in, vae_repair(back, in), vae_repair(vae, in));
    EXPECT_THROW(train_vae({}, cfg), std::invalid_argument);
}
