#include <gtest/gtest.h>

#include <cmath>

#include "repairlab/control/controller.hpp"
#include "repairlab/corrupt/corruption.hpp"
#include "repairlab/io.hpp"
#include "repairlab/tensor.hpp"
#include "test_helpers.hpp"

using namespace repairlab;
using namespace repairlab::control;
using corrupt::Kind;

namespace {

ControllerArch small_arch() {
    ControllerArch a;
    a.height = 32;
    a.width = 48;
    return a;
}

/// Synthetic regression task: steering follows the horizontal position of a bright bar.
LabeledImages bar_dataset(int n) {
    LabeledImages d;
    for (int i = 0; i < n; ++i) {
        Image img(32, 48, 0.2f);
        const int col = 4 + (i * 7) % 40;
        for (int r = 0; r < 32; ++r)
            for (int c = col; c < col + 4; ++c)
                for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = 0.9f;
        d.images.push_back(img);
        d.actions.push_back({(col + 2 - 24) / 24.0, 0.5});
    }
    return d;
}

}  // namespace

TEST(Controller, ClampsOutputsRegardlessOfWeights) {
    const auto raw = torch::tensor({{5.0f, -3.0f}, {-7.0f, 4.0f}, {0.3f, 0.4f}});
    const auto a = clamp_actions(raw);
    EXPECT_FLOAT_EQ(a[0][0].item<float>(), 1.0f);
    EXPECT_FLOAT_EQ(a[0][1].item<float>(), 0.0f);
    EXPECT_FLOAT_EQ(a[1][0].item<float>(), -1.0f);
    EXPECT_FLOAT_EQ(a[1][1].item<float>(), 1.0f);
    EXPECT_FLOAT_EQ(a[2][0].item<float>(), 0.3f);

    Controller h(small_arch(), 3);
    {
        torch::NoGradGuard guard;
        for (auto& p : h.net()->parameters()) p.mul_(50.0);
    }
    for (const Image& y : {Image(32, 48, 0.0f), Image(32, 48, 1.0f), fixtures::gradient_image(32, 48)}) {
        const ControlAction u = h.predict(y);
        EXPECT_TRUE(u.finite());
        EXPECT_EQ(u, u.clamped());
    }
}

TEST(Controller, PredictDeterministicTotalAndChecksDims) {
    const Controller h(small_arch(), 1);
    const Image y = fixtures::gradient_image(32, 48);
    EXPECT_EQ(h.predict(y), h.predict(y));
    const ControlAction zero = h.predict(Image(32, 48, 0.0f));
    EXPECT_TRUE(zero.finite());
    EXPECT_EQ(zero, zero.clamped());
    EXPECT_THROW(h.predict(Image(30, 48)), std::invalid_argument);
    const auto batch = h.predict_batch({y, Image(32, 48, 0.0f)});
    EXPECT_NEAR(batch[0].steering, h.predict(y).steering, 1e-6);
    EXPECT_NEAR(batch[1].throttle, zero.throttle, 1e-6);
}

TEST(Consistency, HandComputedSquaredDistance) {
    const auto a = torch::tensor({{0.2f, 0.5f}, {0.0f, 1.0f}});
    const auto b = torch::tensor({{-0.1f, 0.7f}, {0.5f, 1.0f}});
    // ((0.3^2 + 0.2^2) + (0.5^2 + 0)) / 2
    EXPECT_NEAR(consistency_penalty(a, b).item<double>(), (0.09 + 0.04 + 0.25) / 2.0, 1e-7);
    EXPECT_EQ(consistency_penalty(a, a).item<double>(), 0.0);
    EXPECT_GT(consistency_penalty(a, b).item<double>(), 0.0);
    EXPECT_THROW(consistency_penalty(a, b.narrow(0, 0, 1)), std::invalid_argument);
}

TEST(Consistency, NonNegativeOnRandomPredictions) {
    torch::manual_seed(0);
    for (int i = 0; i < 20; ++i) {
        const auto a = torch::randn({8, 2});
        const auto b = torch::randn({8, 2});
        EXPECT_GE(consistency_penalty(a, b).item<double>(), 0.0);
    }
}

TEST(AdversarialObjective, ZeroWeightIsMixedCloning) {
    Controller h(small_arch(), 2);
    const auto clean = torch::rand({4, 3, 32, 48});
    const std::vector<torch::Tensor> corrupted = {torch::rand({4, 3, 32, 48}), torch::rand({4, 3, 32, 48})};
    const auto labels = torch::rand({4, 2});
    const auto loss = adversarial_objective(h.net(), clean, corrupted, labels, 0.0);
    const auto mixed = torch::cat({clean, corrupted[0], corrupted[1]});
    const auto expected =
        torch::nn::functional::mse_loss(h.net()->forward(mixed), labels.repeat({3, 1})).item<double>();
    EXPECT_NEAR(loss.total.item<double>(), expected, 1e-6);
    EXPECT_GT(loss.consistency.item<double>(), 0.0);

    const auto weighted = adversarial_objective(h.net(), clean, corrupted, labels, 2.5);
    EXPECT_NEAR(weighted.total.item<double>(),
                weighted.cloning.item<double>() + 2.5 * weighted.consistency.item<double>(), 1e-6);
}

TEST(AdversarialObjective, IdenticalInputsHaveZeroConsistency) {
    Controller h(small_arch(), 2);
    const auto clean = torch::rand({3, 3, 32, 48});
    const auto loss = adversarial_objective(h.net(), clean, {clean.clone()}, torch::rand({3, 2}), 1.0);
    EXPECT_NEAR(loss.consistency.item<double>(), 0.0, 1e-12);
}

TEST(AdversarialObjective, MatchesHandComputedMean) {
    Controller h(small_arch(), 5);
    const auto clean = torch::rand({3, 3, 32, 48});
    const std::vector<torch::Tensor> corrupted = {torch::rand({3, 3, 32, 48}), torch::rand({3, 3, 32, 48})};
    const auto loss = adversarial_objective(h.net(), clean, corrupted, torch::zeros({3, 2}), 1.0);
    torch::NoGradGuard guard;
    const auto p0 = h.net()->forward(clean);
    double sum = 0.0;
    for (const auto& c : corrupted) {
        const auto pk = h.net()->forward(c);
        for (int i = 0; i < 3; ++i)
            for (int d = 0; d < 2; ++d) sum += std::pow((p0[i][d] - pk[i][d]).item<double>(), 2);
    }
    EXPECT_NEAR(loss.consistency.item<double>(), sum / 6.0, 1e-6);
}

TEST(TrainController, LossDecreasesAndFitsSyntheticTask) {
    const LabeledImages d = bar_dataset(200);
    ControllerTrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-3;
    TrainLog log;
    const Controller h = train_controller(d, small_arch(), cfg, &log);
    ASSERT_EQ(log.train_loss.size(), 16u);
    EXPECT_LT(log.train_loss.back(), log.train_loss.front());
    EXPECT_LT(log.best_val_loss, 0.05);
    EXPECT_EQ(log.best_val_loss, *std::min_element(log.val_loss.begin(), log.val_loss.end()));
    const ControlAction u = h.predict(d.images[3]);
    EXPECT_TRUE(u.finite());
    EXPECT_EQ(u, u.clamped());
}

TEST(TrainController, SeededDeterminism) {
    const LabeledImages d = bar_dataset(64);
    ControllerTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.seed = 11;
    TrainLog a, b;
    const Controller ha = train_controller(d, small_arch(), cfg, &a);
    const Controller hb = train_controller(d, small_arch(), cfg, &b);
    EXPECT_EQ(a.val_loss, b.val_loss);
    EXPECT_EQ(ha.weights_hash(), hb.weights_hash());
    cfg.seed = 12;
    EXPECT_NE(train_controller(d, small_arch(), cfg).weights_hash(), ha.weights_hash());
}

TEST(TrainController, RejectsEmptyAndCorruptedManifests) {
    EXPECT_THROW(train_controller(LabeledImages{}, small_arch(), {}), std::invalid_argument);
    datagen::Manifest m;
    EXPECT_THROW(train_controller(m, small_arch(), {}), std::invalid_argument);
    m.rows.push_back({"x.png", {}, Kind::Darken, 0, "p", datagen::Split::Train, 0});
    EXPECT_THROW(train_controller(m, small_arch(), {}), std::invalid_argument);
}

TEST(TrainAdversarial, GuardsSplitProtocol) {
    const LabeledImages d = bar_dataset(8);
    const auto split = datagen::configuration_split("A");
    PairedImages p{d.images, d.actions, {}};
    for (Kind k : split.train_corrupted_kinds())
        p.corrupted.emplace_back(k, corrupt::corrupt_dataset(d.images, corrupt::default_spec(k, 0, 32, 48), 1));
    ControllerTrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    EXPECT_NO_THROW(train_adversarial_controller(p, split, small_arch(), cfg));

    PairedImages with_test = p;
    with_test.corrupted.emplace_back(Kind::Snow, d.images);
    EXPECT_THROW(train_adversarial_controller(with_test, split, small_arch(), cfg), std::invalid_argument);
    PairedImages missing = p;
    missing.corrupted.pop_back();
    EXPECT_THROW(train_adversarial_controller(missing, split, small_arch(), cfg), std::invalid_argument);
}

TEST(Checkpoint, RoundTripAndStableBytes) {
    fixtures::TempDir dir("controller_ckpt");
    const Controller h(small_arch(), 9);
    h.save(dir.path() / "h.pt", {{"note", "test"}});
    // The archive records the file stem, so compare identical names in separate directories.
    h.save(dir.path() / "again" / "h.pt", {{"note", "test"}});
    EXPECT_EQ(io::sha256_file(dir.path() / "h.pt"), io::sha256_file(dir.path() / "again" / "h.pt"));
    const Controller loaded = Controller::load(dir.path() / "h.pt");
    EXPECT_EQ(loaded.weights_hash(), h.weights_hash());
    EXPECT_EQ(loaded.arch(), h.arch());
    const Image y = fixtures::gradient_image(32, 48);
    EXPECT_EQ(loaded.predict(y), h.predict(y));
    const auto meta = nlohmann::json::parse(io::read_text(dir.path() / "h.pt.json"));
    EXPECT_EQ(meta.at("note"), "test");
    EXPECT_EQ(meta.at("input").at("height"), 32);
    EXPECT_THROW(Controller::load(dir.path() / "missing.pt"), std::exception);
}

TEST(Controller, FreezeDisablesGradients) {
    Controller h(small_arch(), 4);
    const std::string before = h.weights_hash();
    h.freeze();
    for (const auto& p : h.net()->parameters()) EXPECT_FALSE(p.requires_grad());
    EXPECT_EQ(h.weights_hash(), before);
}
