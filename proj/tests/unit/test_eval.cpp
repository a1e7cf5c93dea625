#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "repairlab/eval/harness.hpp"
#include "repairlab/io.hpp"
#include "test_helpers.hpp"

using namespace repairlab;
using corrupt::Kind;

namespace {

eval::EvalConfig short_eval(int episodes = 2, int steps = 120) {
    eval::EvalConfig c;
    c.episodes = episodes;
    c.steps = steps;
    return c;
}

sim::Track test_track() { return sim::build_track(fixtures::rectangle_track(60.0, 30.0, 5.0, 4.0)); }

eval::CellResult synthetic_cell(Kind kind, std::vector<double> cte) {
    eval::CellResult c;
    c.kind = kind;
    eval::EpisodeResult e;
    e.cte = std::move(cte);
    e.recorded = static_cast<int>(e.cte.size());
    c.episodes.push_back(e);
    c.rmse = eval::rmse_cte(c.samples());
    return c;
}

}  // namespace

TEST(RmseCte, KnownValues) {
    const std::vector<double> zeros(7, 0.0);
    EXPECT_EQ(eval::rmse_cte(zeros), 0.0);
    const std::vector<double> v = {0.3, -0.4, 0.5};
    EXPECT_NEAR(eval::rmse_cte(v), std::sqrt(0.5 / 3.0), 1e-15);
    EXPECT_NEAR(eval::rmse_cte(v), 0.40825, 1e-5);
    const std::vector<double> c(5, -1.25);
    EXPECT_NEAR(eval::rmse_cte(c), 1.25, 1e-15);
    EXPECT_THROW(eval::rmse_cte(std::vector<double>{}), std::invalid_argument);
}

TEST(TrajectoryDeviation, TranslationAndTruncation) {
    const std::vector<sim::Vec2> a = {{0, 0}, {1, 0}, {2, 1}, {3, 3}};
    std::vector<sim::Vec2> b;
    for (const auto& p : a) b.push_back({p.x + 0.1, p.y});
    EXPECT_EQ(eval::trajectory_deviation(a, a), 0.0);
    EXPECT_NEAR(eval::trajectory_deviation(a, b), 0.2, 1e-12);
    b.push_back({100, 100});
    EXPECT_NEAR(eval::trajectory_deviation(a, b), 0.2, 1e-12);
    EXPECT_THROW(eval::trajectory_deviation(a, std::vector<sim::Vec2>{}), std::invalid_argument);
}

TEST(EvalConfig, JsonRoundTripAndValidation) {
    auto c = short_eval(3, 50);
    c.seeds = {7, 8, 9};
    c.corruptions[Kind::Darken] = corrupt::default_spec(Kind::Darken);
    const auto back = eval::eval_config_from_json(eval::to_json(c));
    EXPECT_EQ(eval::to_json(back), eval::to_json(c));
    auto j = eval::to_json(c);
    j["episodes"] = 0;
    EXPECT_THROW(eval::eval_config_from_json(j), std::invalid_argument);
    j = eval::to_json(c);
    j["seeds"] = {1};
    EXPECT_THROW(eval::eval_config_from_json(j), std::invalid_argument);
}

TEST(FrameCorruptor, SeededPerEpisodeAndStep) {
    EXPECT_FALSE(eval::frame_corruptor(corrupt::default_spec(Kind::None), 1));
    const auto spec = corrupt::default_spec(Kind::SaltPepper, 0, 32, 48);
    const auto f = eval::frame_corruptor(spec, 11);
    const auto g = eval::frame_corruptor(spec, 12);
    const Image y = fixtures::gradient_image(32, 48);
    const auto same = [](const Image& a, const Image& b) {
        return std::equal(a.data().begin(), a.data().end(), b.data().begin());
    };
    EXPECT_TRUE(same(f(y, 3), f(y, 3)));
    EXPECT_FALSE(same(f(y, 3), f(y, 4)));
    EXPECT_FALSE(same(f(y, 3), g(y, 3)));
}

TEST(EvaluateCell, ExpertIsAccurate) {
    const auto track = test_track();
    const auto cam = fixtures::small_camera();
    const auto cell = eval::evaluate_policy_cell(track, cam, sim::expert_policy(track, cam), {}, Kind::None,
                                                 short_eval(3, 300));
    EXPECT_EQ(cell.samples().size(), 900u);
    EXPECT_LT(cell.rmse, 0.1 * track.half_width());
}

TEST(EvaluateCell, IdentityRepairAndDeterminism) {
    const auto track = test_track();
    const auto cam = fixtures::small_camera();
    const control::Controller h(control::ControllerArch::tiny(cam.image_height, cam.image_width), 3);
    const auto cfg = short_eval(2, 60);
    const auto a = eval::evaluate_cell(track, cam, h, {}, Kind::Rain, cfg);
    const auto b = eval::evaluate_cell(track, cam, h, [](const Image& y) { return y; }, Kind::Rain, cfg);
    const auto c = eval::evaluate_cell(track, cam, h, {}, Kind::Rain, cfg);
    EXPECT_EQ(a.samples(), b.samples());
    EXPECT_EQ(a.samples(), c.samples());
    EXPECT_EQ(a.rmse, b.rmse);
}

TEST(EvaluateCell, OffTrackEpisodesArePadded) {
    const auto track = test_track();
    const auto cam = fixtures::small_camera();
    const auto hard_left = sim::image_policy([](const Image&) { return ControlAction{1.0, 1.0}; });
    const auto cfg = short_eval(1, 200);
    const auto cell = eval::evaluate_policy_cell(track, cam, hard_left, {}, Kind::None, cfg);
    ASSERT_EQ(cell.episodes.size(), 1u);
    const auto& e = cell.episodes[0];
    EXPECT_EQ(e.termination, sim::Termination::OffTrack);
    EXPECT_EQ(e.cte.size(), 200u);
    EXPECT_LT(e.recorded, 200);
    EXPECT_EQ(e.cte.back(), track.half_width() + cfg.off_track_margin);
}

TEST(EvaluateCell, DimensionMismatchIsAnError) {
    const auto track = test_track();
    const auto cam = fixtures::small_camera();
    const control::Controller wrong(control::ControllerArch::tiny(16, 16), 1);
    EXPECT_THROW(eval::evaluate_cell(track, cam, wrong, {}, Kind::None, short_eval(1, 5)), std::invalid_argument);
    const control::Controller h(control::ControllerArch::tiny(cam.image_height, cam.image_width), 1);
    const auto shrink = [](const Image&) { return Image(8, 8); };
    EXPECT_THROW(eval::evaluate_cell(track, cam, h, shrink, Kind::None, short_eval(1, 5)), std::invalid_argument);
}

TEST(ResultsTable, UnseenAndAllPoolSamples) {
    eval::ResultsRow row;
    std::vector<double> snow = {1.0, 2.0, 3.0}, fog = {0.5}, all;
    for (const auto k : eval::kColumnKinds) {
        std::vector<double> s = {0.1, 0.2};
        if (k == Kind::Snow) s = snow;
        if (k == Kind::Fog) s = fog;
        all.insert(all.end(), s.begin(), s.end());
        row.cells.emplace(k, synthetic_cell(k, s));
    }
    eval::aggregate_row(row, datagen::configuration_split("A"));
    std::vector<double> unseen = snow;
    unseen.insert(unseen.end(), fog.begin(), fog.end());
    EXPECT_NEAR(row.values[6], eval::rmse_cte(unseen), 1e-15);
    EXPECT_NEAR(row.values[7], eval::rmse_cte(all), 1e-15);
    // Pooling by sample count differs from averaging the per-kind values.
    EXPECT_NE(row.values[6], std::sqrt(0.5 * (row.values[4] * row.values[4] + row.values[5] * row.values[5])));

    eval::aggregate_row(row, datagen::configuration_split("B"));
    std::vector<double> unseen_b = {0.1, 0.2};
    unseen_b.insert(unseen_b.end(), snow.begin(), snow.end());
    EXPECT_NEAR(row.values[6], eval::rmse_cte(unseen_b), 1e-15);

    row.cells.erase(Kind::Rain);
    EXPECT_THROW(eval::aggregate_row(row, datagen::configuration_split("A")), std::invalid_argument);
}

TEST(ResultsTable, MatrixShapeCsvAndLogReaggregation) {
    const auto track = test_track();
    const auto cam = fixtures::small_camera();
    const control::Controller h(control::ControllerArch::tiny(cam.image_height, cam.image_width), 5);
    fixtures::TempDir dir("eval_matrix");
    const auto split = datagen::configuration_split("A");
    const auto table = eval::run_experiment_matrix(split, {{eval::RowKey{}, h, {}}}, track, cam, short_eval(2, 40),
                                                   dir.path());
    ASSERT_EQ(table.rows.size(), 1u);
    const auto csv = io::parse_csv(table.to_csv());
    ASSERT_EQ(csv.size(), 2u);
    EXPECT_EQ(csv[0].size(), 13u);
    EXPECT_EQ(csv[0][5], "Normal");
    EXPECT_EQ(csv[0][12], "All");

    const auto& row = table.rows[0];
    std::vector<double> all, unseen;
    for (std::size_t i = 0; i < eval::kColumnKinds.size(); ++i) {
        const auto k = eval::kColumnKinds[i];
        const auto logged = eval::read_step_log(dir.path() / row.key.id() / (std::string(corrupt::kind_name(k)) + ".csv.gz"));
        EXPECT_EQ(logged, row.cells.at(k).samples());
        EXPECT_NEAR(eval::rmse_cte(logged), row.values[i], 1e-12);
        all.insert(all.end(), logged.begin(), logged.end());
        if (split.is_test_kind(k)) unseen.insert(unseen.end(), logged.begin(), logged.end());
    }
    EXPECT_NEAR(eval::rmse_cte(all), row.values[7], 1e-9);
    EXPECT_NEAR(eval::rmse_cte(unseen), row.values[6], 1e-9);

    EXPECT_THROW(eval::run_experiment_matrix(split, {}, track, cam, short_eval(), std::nullopt), std::invalid_argument);
}

TEST(Latency, ShapeAndOrdering) {
    std::vector<Image> images(10, fixtures::gradient_image(32, 48));
    const auto noop = eval::benchmark_inference([](const Image&) {}, images, 200, 10);
    const auto slow = eval::benchmark_inference(
        [](const Image&) { std::this_thread::sleep_for(std::chrono::microseconds(200)); }, images, 200, 10);
    EXPECT_EQ(noop.images, 200);
    EXPECT_GE(noop.std_ms, 0.0);
    EXPECT_LT(noop.mean_ms, slow.mean_ms);
    const auto csv = io::parse_csv(eval::latency_csv({{"noop", noop}, {"slow", slow}}));
    ASSERT_EQ(csv.size(), 3u);
    EXPECT_EQ(csv[0], (std::vector<std::string>{"model", "mean_ms", "std_ms"}));
    EXPECT_THROW(eval::benchmark_inference([](const Image&) {}, {}, 10, 1), std::invalid_argument);
}
