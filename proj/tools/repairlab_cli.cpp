// repairlab command-line entry point.
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "repairlab/io.hpp"
#include "repairlab/pipeline/pipeline.hpp"
#include "repairlab/sim/track.hpp"

using namespace repairlab;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "Experiment config (JSON); defaults apply when omitted");
    cmd->add_option("--seed", o.seed, "Global seed override");
    cmd->add_option("--out", o.out, "Output directory override");
}

pipeline::ExperimentConfig resolve(const CommonOptions& o) {
    pipeline::ExperimentConfig cfg = o.config.empty() ? pipeline::ExperimentConfig{} : pipeline::load_experiment_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.output_dir = o.out;
    cfg.validate();
    return cfg;
}

void log_line(const std::string& msg) { std::cerr << "[repairlab] " << msg << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"repairlab: closed-loop image repair experiments"};
    app.require_subcommand(1);

    CommonOptions gen_o, train_o, eval_o, bench_o, samples_o;
    std::string target;

    auto* gen = app.add_subcommand("gen-data", "Record expert data and build paired/unpaired/probe manifests");
    add_common(gen, gen_o);
    auto* train = app.add_subcommand("train", "Train a controller or repair model");
    add_common(train, train_o);
    train->add_option("--target", target, "controller | adv_controller | vae | cyclegan | pix2pix")->required();
    auto* evaluate = app.add_subcommand("evaluate", "Closed-loop RMSE CTE table over the registry");
    add_common(evaluate, eval_o);
    auto* bench = app.add_subcommand("bench", "Per-image repair latency");
    add_common(bench, bench_o);
    auto* samples = app.add_subcommand("samples", "PNG grid of clean / corrupted / repaired frames");
    add_common(samples, samples_o);

    std::string defaults_dir;
    auto* defaults = app.add_subcommand("defaults", "Write the default config and track spec");
    defaults->add_option("--out", defaults_dir, "Directory to write config.json and track.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (*gen) {
            const auto cfg = resolve(gen_o);
            const auto summary = pipeline::gen_data(cfg, log_line);
            std::cout << summary.dump(2) << "\n";
        } else if (*train) {
            const auto t = pipeline::parse_target(target);
            const auto cfg = resolve(train_o);
            for (const auto& p : pipeline::train(cfg, t, log_line)) std::cout << p.string() << "\n";
        } else if (*evaluate) {
            const auto cfg = resolve(eval_o);
            std::cout << pipeline::evaluate(cfg, log_line).to_csv();
        } else if (*bench) {
            const auto cfg = resolve(bench_o);
            std::cout << eval::latency_csv(pipeline::bench(cfg, log_line));
        } else if (*samples) {
            const auto cfg = resolve(samples_o);
            const auto rows = pipeline::samples(cfg, log_line);
            std::cout << rows.size() << " rows written to " << pipeline::Paths{cfg.output_dir}.samples().string() << "\n";
        } else if (*defaults) {
            const std::filesystem::path dir(defaults_dir);
            io::write_text(dir / "config.json", pipeline::to_json(pipeline::ExperimentConfig{}).dump(2) + "\n");
            io::write_text(dir / "track.json", sim::track_spec_to_json(sim::default_track_spec()) + "\n");
            std::cout << (dir / "config.json").string() << "\n" << (dir / "track.json").string() << "\n";
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (auto& c : msg)
            if (c == '\n') c = ' ';
        std::fprintf(stderr, "repairlab-error[%s]: %s\n", name.c_str(), msg.c_str());
        return 1;
    }
    return 0;
}
