#include <benchmark/benchmark.h>

#include "repairlab/classical/restore.hpp"
#include "repairlab/control/controller.hpp"
#include "repairlab/corrupt/corruption.hpp"
#include "repairlab/genrepair/networks.hpp"
#include "repairlab/sim/render.hpp"
#include "repairlab/tensor.hpp"

using namespace repairlab;

namespace {

constexpr int kH = 32;
constexpr int kW = 48;

const sim::Track& track() {
    static const sim::Track t = sim::build_track(sim::default_track_spec());
    return t;
}

sim::SimConfig camera() {
    sim::SimConfig c;
    c.image_height = kH;
    c.image_width = kW;
    return c;
}

Image frame() { return sim::render_observation(track(), {}, camera()); }

}  // namespace

static void BM_Render(benchmark::State& state) {
    const auto cam = camera();
    for (auto _ : state) benchmark::DoNotOptimize(sim::render_observation(track(), {}, cam));
}
BENCHMARK(BM_Render);

static void BM_Corruption(benchmark::State& state) {
    const auto kind = corrupt::kAllCorruptions[static_cast<std::size_t>(state.range(0))];
    const auto spec = corrupt::default_spec(kind, 7, kH, kW);
    const Image y = frame();
    for (auto _ : state) benchmark::DoNotOptimize(corrupt::apply_corruption(y, spec));
    state.SetLabel(std::string(corrupt::kind_name(kind)));
}
BENCHMARK(BM_Corruption)->DenseRange(0, 4);

static void BM_LucyRichardson(benchmark::State& state) {
    const auto psf = classical::Psf::gaussian(5, 1.0);
    const Image y = classical::convolve(frame(), psf);
    for (auto _ : state) benchmark::DoNotOptimize(classical::lucy_richardson(y, psf, 10));
}
BENCHMARK(BM_LucyRichardson);

static void BM_VariationalBayes(benchmark::State& state) {
    const Image y = frame();
    for (auto _ : state) benchmark::DoNotOptimize(classical::variational_bayes_restore(y, 10, 20.0));
}
BENCHMARK(BM_VariationalBayes);

static void BM_ControllerPredict(benchmark::State& state) {
    nn::init_runtime();
    control::ControllerArch arch;
    arch.height = kH;
    arch.width = kW;
    const control::Controller h(arch, 1);
    const Image y = frame();
    for (auto _ : state) benchmark::DoNotOptimize(h.predict(y));
}
BENCHMARK(BM_ControllerPredict);

static void BM_ResnetGenerator(benchmark::State& state) {
    nn::init_runtime();
    torch::NoGradGuard ng;
    genrepair::ResnetGenerator g(16, 6);
    g->eval();
    const auto x = torch::rand({1, 3, kH, kW});
    for (auto _ : state) benchmark::DoNotOptimize(g->forward(x));
}
BENCHMARK(BM_ResnetGenerator);

static void BM_UnetGenerator(benchmark::State& state) {
    nn::init_runtime();
    torch::NoGradGuard ng;
    genrepair::UnetGenerator g(16, 4);
    g->eval();
    const auto x = torch::rand({1, 3, kH, kW});
    for (auto _ : state) benchmark::DoNotOptimize(g->forward(x));
}
BENCHMARK(BM_UnetGenerator);
BENCHMARK_MAIN();
