#include "repairlab/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "repairlab/classical/restore.hpp"
#include "repairlab/io.hpp"
#include "repairlab/rng.hpp"
#include "repairlab/tensor.hpp"

namespace repairlab::pipeline {

namespace fs = std::filesystem;
using corrupt::Kind;
using genrepair::ControllerLossMode;

fs::path Paths::controller(bool adversarial) const { return models() / (adversarial ? "h_adv.pt" : "h.pt"); }

fs::path Paths::repair_model(const RegistrySpec& spec) const {
    if (spec.approach == "VAE") return models() / "vae.pt";
    std::string name = spec.approach == "CycleGAN" ? "cyclegan" : "pix2pix";
    name += "_" + spec.pairedness + "_" + std::string(genrepair::loss_mode_name(spec.loss_mode)) + ".pt";
    return models() / name;
}

Target parse_target(std::string_view name) {
    if (name == "controller") return Target::Controller;
    if (name == "adv_controller") return Target::AdvController;
    if (name == "vae") return Target::Vae;
    if (name == "cyclegan") return Target::CycleGan;
    if (name == "pix2pix") return Target::Pix2Pix;
    throw std::invalid_argument("unknown train target '" + std::string(name) +
                                "' (expected controller, adv_controller, vae, cyclegan or pix2pix)");
}

std::string_view target_name(Target t) {
    switch (t) {
        case Target::Controller: return "controller";
        case Target::AdvController: return "adv_controller";
        case Target::Vae: return "vae";
        case Target::CycleGan: return "cyclegan";
        case Target::Pix2Pix: return "pix2pix";
    }
    return "controller";
}

sim::Track load_track(const ExperimentConfig& cfg) {
    if (cfg.track == "default") return sim::build_track(sim::default_track_spec());
    if (!fs::exists(cfg.track)) throw std::runtime_error("track spec not found: " + cfg.track);
    return sim::build_track(sim::parse_track_spec(io::read_text(cfg.track)));
}

namespace {

void say(const Logger& log, const std::string& msg) {
    if (log) log(msg);
}

Paths paths(const ExperimentConfig& cfg) { return {cfg.output_dir}; }

datagen::Manifest require_manifest(const fs::path& path) {
    if (!fs::exists(path)) throw std::runtime_error("manifest not found: " + path.string() + " (run gen-data first)");
    return datagen::load_manifest(path);
}

std::vector<corrupt::CorruptionSpec> specs_for(const ExperimentConfig& cfg, const std::vector<Kind>& kinds) {
    std::vector<corrupt::CorruptionSpec> out;
    for (const auto k : kinds) out.push_back(cfg.corruption_spec(k));
    return out;
}

/// Up to `n` indices of [0, size), drawn by a seeded permutation and then sorted.
std::vector<std::size_t> pick(std::size_t size, std::size_t n, std::uint64_t seed) {
    const auto perm = permutation(size, seed, 0);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(size, n); ++i) out.push_back(static_cast<std::size_t>(perm[i]));
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Image> load_rows(const datagen::Manifest& m, const std::vector<std::size_t>& idx) {
    std::vector<Image> out;
    out.reserve(idx.size());
    for (const auto i : idx) out.push_back(m.load_image(m.rows[i]));
    return out;
}

std::vector<std::size_t> all_rows(const datagen::Manifest& m) {
    std::vector<std::size_t> idx(m.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

nlohmann::json provenance(const ExperimentConfig& cfg) {
    const Paths p = paths(cfg);
    nlohmann::json j = {{"split", cfg.split}, {"global_seed", cfg.seed}};
    for (const auto& [key, path] : {std::pair{"clean_manifest_sha256", p.clean_manifest()},
                                    std::pair{"paired_manifest_sha256", p.paired_manifest()},
                                    std::pair{"unpaired_manifest_sha256", p.unpaired_manifest()}})
        if (fs::exists(path)) j[key] = io::sha256_file(path);
    return j;
}

std::optional<control::Controller> loss_controller(const ExperimentConfig& cfg, ControllerLossMode mode) {
    if (mode == ControllerLossMode::None) return std::nullopt;
    return load_controller(cfg, mode == ControllerLossMode::OnHAdv);
}

std::vector<RegistrySpec> variants(const ExperimentConfig& cfg, const std::string& approach) {
    std::vector<RegistrySpec> out;
    for (const auto& r : cfg.registry) {
        if (r.approach != approach) continue;
        RegistrySpec v = r;
        v.eval_controller = "h";
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    return out;
}

std::string repair_label(const RegistrySpec& r) {
    if (!r.trained_generator()) return r.approach;
    return r.approach + "(" + r.pairedness + "," + std::string(genrepair::loss_mode_name(r.loss_mode)) + ")";
}

}  // namespace

nlohmann::json gen_data(const ExperimentConfig& cfg, const Logger& log) {
    cfg.validate();
    const Paths p = paths(cfg);
    const auto track = load_track(cfg);
    const auto split = datagen::configuration_split(cfg.split);

    datagen::RecordOptions opts;
    opts.episodes = cfg.data.episodes;
    opts.steps = cfg.data.steps;
    opts.test_episodes = cfg.data.test_episodes;
    opts.lateral_jitter = cfg.data.lateral_jitter;
    opts.heading_jitter_deg = cfg.data.heading_jitter_deg;
    opts.off_track_margin = cfg.data.off_track_margin;
    say(log, "recording " + std::to_string(opts.episodes) + " expert episodes");
    const auto clean = datagen::record_expert_dataset(track, cfg.sim, opts, cfg.stage_seed("datagen"), p.data());
    datagen::save_manifest(clean, p.clean_manifest());
    const auto train_clean = clean.select(datagen::Split::Train);
    const auto test_clean = clean.select(datagen::Split::Test);

    say(log, "building paired set for split " + split.name);
    const auto paired =
        datagen::make_paired_dataset(train_clean, specs_for(cfg, split.train_corrupted_kinds()), cfg.stage_seed("paired"));
    datagen::save_manifest(paired, p.paired_manifest());

    nlohmann::json summary = {{"split", split.name},
                              {"clean_rows", clean.size()},
                              {"paired_rows", paired.size()},
                              {"clean_sha256", clean.hash()},
                              {"paired_sha256", paired.hash()}};

    if (cfg.data.unpaired_episodes > 0) {
        say(log, "recording " + std::to_string(cfg.data.unpaired_episodes) + " episodes for the unpaired domain");
        datagen::RecordOptions u = opts;
        u.episodes = cfg.data.unpaired_episodes;
        u.test_episodes = 0;
        u.first_episode = cfg.data.episodes;
        const auto source = datagen::record_expert_dataset(track, cfg.sim, u, cfg.stage_seed("unpaired_record"), p.data());
        datagen::save_manifest(source, p.unpaired_source_manifest());
        const auto [a, corrupted] = datagen::make_unpaired_dataset(
            train_clean, source, specs_for(cfg, split.train_corrupted_kinds()), cfg.stage_seed("unpaired"));
        datagen::save_manifest(corrupted, p.unpaired_manifest());
        summary["unpaired_rows"] = corrupted.size();
        summary["unpaired_sha256"] = corrupted.hash();
    }

    if (!test_clean.empty()) {
        std::vector<Kind> all(corrupt::kAllCorruptions.begin(), corrupt::kAllCorruptions.end());
        const auto probe = datagen::make_paired_dataset(test_clean, specs_for(cfg, all), cfg.stage_seed("probe"));
        datagen::save_manifest(probe, p.probe_manifest());
        summary["probe_rows"] = probe.size();
        summary["probe_sha256"] = probe.hash();
    }
    io::write_text(p.data_summary(), summary.dump(2) + "\n");
    return summary;
}

control::Controller load_controller(const ExperimentConfig& cfg, bool adversarial) {
    const auto path = paths(cfg).controller(adversarial);
    if (!fs::exists(path))
        throw std::runtime_error("controller checkpoint not found: " + path.string() + " (run train --target " +
                                 (adversarial ? "adv_controller" : "controller") + ")");
    auto h = control::Controller::load(path);
    if (h.arch().height != cfg.sim.image_height || h.arch().width != cfg.sim.image_width)
        throw std::runtime_error("controller " + path.string() + " does not match the configured camera size");
    return h;
}

genrepair::GanData gan_data(const ExperimentConfig& cfg, bool paired) {
    const Paths p = paths(cfg);
    const auto split = datagen::configuration_split(cfg.split);
    const auto clean = require_manifest(p.clean_manifest());
    const auto train_clean = clean.select(datagen::Split::Train);
    const auto cap = static_cast<std::size_t>(cfg.data.gan_images);
    genrepair::GanData d;
    d.paired = paired;
    if (paired) {
        const auto corrupted = require_manifest(p.paired_manifest());
        const auto pairs = datagen::join_pairs(train_clean, corrupted);
        for (const auto i : pick(pairs.size(), cap, cfg.stage_seed("gan_pairs"))) {
            d.clean.push_back(train_clean.load_image(train_clean.rows[pairs[i].first]));
            d.corrupted.push_back(corrupted.load_image(corrupted.rows[pairs[i].second]));
        }
    } else {
        const auto corrupted = require_manifest(p.unpaired_manifest());
        d.clean = load_rows(train_clean, pick(train_clean.size(), cap, cfg.stage_seed("gan_clean")));
        d.corrupted = load_rows(corrupted, pick(corrupted.size(), cap, cfg.stage_seed("gan_corrupted")));
    }
    if (cfg.data.heldout_images > 0 && fs::exists(p.probe_manifest())) {
        const auto probe = load_probe(cfg, split.train_corrupted_kinds(), std::numeric_limits<std::size_t>::max());
        for (const auto i : pick(probe.clean.size(), static_cast<std::size_t>(cfg.data.heldout_images),
                                 cfg.stage_seed("gan_heldout"))) {
            d.heldout_clean.push_back(probe.clean[i]);
            d.heldout_corrupted.push_back(probe.corrupted[i]);
        }
    }
    return d;
}

ProbeSet load_probe(const ExperimentConfig& cfg, const std::vector<Kind>& kinds, std::size_t limit) {
    const Paths p = paths(cfg);
    const auto clean = require_manifest(p.clean_manifest()).select(datagen::Split::Test);
    const auto probe = require_manifest(p.probe_manifest());
    ProbeSet out;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& pr : datagen::join_pairs(clean, probe))
        if (std::find(kinds.begin(), kinds.end(), probe.rows[pr.second].kind) != kinds.end()) pairs.push_back(pr);
    // Spread the cap evenly over the listed kinds when limited.
    std::vector<std::size_t> idx(pairs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (pairs.size() > limit) idx = pick(pairs.size(), limit, cfg.stage_seed("probe_pick"));
    for (const auto i : idx) {
        out.clean.push_back(clean.load_image(clean.rows[pairs[i].first]));
        out.corrupted.push_back(probe.load_image(probe.rows[pairs[i].second]));
    }
    return out;
}

std::vector<fs::path> train(const ExperimentConfig& cfg, Target target, const Logger& log) {
    cfg.validate();
    nn::init_runtime();
    const Paths p = paths(cfg);
    const auto split = datagen::configuration_split(cfg.split);
    std::vector<fs::path> written;
    auto extra = provenance(cfg);

    switch (target) {
        case Target::Controller: {
            const auto clean = require_manifest(p.clean_manifest()).select(datagen::Split::Train);
            auto tc = cfg.controller_train;
            tc.seed = cfg.stage_seed("controller");
            control::TrainLog tl;
            say(log, "training h on " + std::to_string(clean.size()) + " clean images");
            const auto h = control::train_controller(clean, cfg.controller_arch, tc, &tl);
            extra["train_loss"] = tl.train_loss;
            extra["val_loss"] = tl.val_loss;
            extra["train_config"] = control::to_json(tc);
            h.save(p.controller(false), extra);
            written.push_back(p.controller(false));
            break;
        }
        case Target::AdvController: {
            const auto clean = require_manifest(p.clean_manifest()).select(datagen::Split::Train);
            const auto paired = require_manifest(p.paired_manifest());
            auto tc = cfg.adv_train;
            tc.seed = cfg.stage_seed("adv_controller");
            control::TrainLog tl;
            say(log, "training h_adv on clean + " + std::to_string(paired.size()) + " corrupted images");
            const auto h = control::train_adversarial_controller(control::load_paired(clean, paired), split,
                                                                 cfg.controller_arch, tc, &tl);
            extra["train_loss"] = tl.train_loss;
            extra["val_loss"] = tl.val_loss;
            extra["train_config"] = control::to_json(tc);
            h.save(p.controller(true), extra);
            written.push_back(p.controller(true));
            break;
        }
        case Target::Vae: {
            const auto clean = require_manifest(p.clean_manifest()).select(datagen::Split::Train);
            auto vc = cfg.vae;
            vc.seed = cfg.stage_seed("vae");
            const auto images =
                load_rows(clean, pick(clean.size(), static_cast<std::size_t>(cfg.data.gan_images), cfg.stage_seed("vae_rows")));
            say(log, "training VAE on " + std::to_string(images.size()) + " clean images");
            const auto vae = genrepair::train_vae(images, vc);
            const RegistrySpec spec{"VAE", "-", ControllerLossMode::None, "h"};
            vae.save(p.repair_model(spec), extra);
            written.push_back(p.repair_model(spec));
            break;
        }
        case Target::CycleGan:
        case Target::Pix2Pix: {
            const bool cycle = target == Target::CycleGan;
            const auto vs = variants(cfg, cycle ? "CycleGAN" : "pix2pix");
            if (vs.empty()) throw std::invalid_argument("registry has no " + std::string(target_name(target)) + " entries");
            // Check every variant's preconditions before spending time on any of them.
            for (const auto& v : vs) {
                if (v.loss_mode != ControllerLossMode::None && v.pairedness != "paired")
                    throw std::invalid_argument("controller loss requires paired data");
                if (v.pairedness == "unpaired") require_manifest(p.unpaired_manifest());
                if (v.loss_mode != ControllerLossMode::None) loss_controller(cfg, v.loss_mode);
            }
            for (const auto& v : vs) {
                auto gc = cycle ? cfg.cyclegan : cfg.pix2pix;
                gc.controller_loss_mode = v.loss_mode;
                gc.seed = cfg.stage_seed(cycle ? "cyclegan" : "pix2pix");
                const auto data = gan_data(cfg, v.pairedness == "paired");
                const auto h = loss_controller(cfg, v.loss_mode);
                const std::string label = repair_label(v);
                say(log, "training " + label + " on " + std::to_string(data.clean.size()) + "/" +
                             std::to_string(data.corrupted.size()) + " images");
                const auto progress = [&](int epoch) { say(log, label + " epoch " + std::to_string(epoch) + "/" + std::to_string(gc.epochs)); };
                auto meta = extra;
                meta["registry"] = to_json(v);
                if (cycle)
                    genrepair::train_cyclegan(data, h, gc, progress).save(p.repair_model(v), meta);
                else
                    genrepair::train_pix2pix(data, h, gc, progress).save(p.repair_model(v), meta);
                written.push_back(p.repair_model(v));
            }
            break;
        }
    }
    return written;
}

sim::RepairFn load_repair(const ExperimentConfig& cfg, const RegistrySpec& spec) {
    const Paths p = paths(cfg);
    if (spec.approach == "none") return {};
    if (spec.approach == "LR") return classical::classical_repair_pipeline(classical::Method::LR, cfg.classical);
    if (spec.approach == "VB") return classical::classical_repair_pipeline(classical::Method::VB, cfg.classical);
    RegistrySpec key = spec;
    key.eval_controller = "h";
    const auto path = p.repair_model(key);
    if (!fs::exists(path)) throw std::runtime_error("repair checkpoint not found: " + path.string());
    nn::init_runtime();
    if (spec.approach == "VAE") return genrepair::vae_repair_fn(genrepair::Vae::load(path));
    if (spec.approach == "CycleGAN") return genrepair::cyclegan_repair_fn(genrepair::CycleGan::load(path));
    return genrepair::pix2pix_repair_fn(genrepair::Pix2Pix::load(path));
}

eval::ResultsTable evaluate(const ExperimentConfig& cfg, const Logger& log) {
    cfg.validate();
    nn::init_runtime();
    if (cfg.registry.empty()) throw std::invalid_argument("model registry is empty");
    const Paths p = paths(cfg);
    const auto split = datagen::configuration_split(cfg.split);
    const auto track = load_track(cfg);
    std::vector<eval::RegistryEntry> entries;
    for (const auto& r : cfg.registry)
        entries.push_back({r.row_key(cfg.split), load_controller(cfg, r.eval_controller == "h_adv"), load_repair(cfg, r)});
    const auto table =
        eval::run_experiment_matrix(split, entries, track, cfg.sim, cfg.resolved_eval(), p.step_logs(),
                                    [&](const std::string& m) { say(log, "evaluating " + m); });
    io::write_text(p.table(), table.to_csv());
    return table;
}

std::vector<std::pair<std::string, eval::LatencyStats>> bench(const ExperimentConfig& cfg, const Logger& log) {
    cfg.validate();
    nn::init_runtime();
    const Paths p = paths(cfg);
    std::vector<Kind> all(corrupt::kAllCorruptions.begin(), corrupt::kAllCorruptions.end());
    const auto probe = load_probe(cfg, all, static_cast<std::size_t>(cfg.bench.count));
    if (probe.corrupted.empty()) throw std::runtime_error("bench: probe set is empty");
    std::vector<std::pair<std::string, eval::LatencyStats>> rows;
    for (const auto& name : cfg.bench.models) {
        const auto it = std::find_if(cfg.registry.begin(), cfg.registry.end(),
                                     [&](const RegistrySpec& r) { return r.approach == name; });
        if (it == cfg.registry.end()) throw std::invalid_argument("bench: no registry entry for model " + name);
        const auto repair = load_repair(cfg, *it);
        if (!repair) throw std::invalid_argument("bench: model " + name + " has no repair step");
        say(log, "timing " + name);
        rows.emplace_back(name, eval::benchmark_inference([&](const Image& y) { (void)repair(y); }, probe.corrupted,
                                                          cfg.bench.count, cfg.bench.warmup));
    }
    io::write_text(p.latency(), eval::latency_csv(rows));
    return rows;
}

std::vector<std::vector<Image>> samples(const ExperimentConfig& cfg, const Logger& log) {
    cfg.validate();
    nn::init_runtime();
    const Paths p = paths(cfg);
    const auto split = datagen::configuration_split(cfg.split);
    std::vector<RegistrySpec> models;
    for (const auto& r : cfg.registry) {
        if (r.approach == "none") continue;
        RegistrySpec k = r;
        k.eval_controller = "h";
        if (std::find(models.begin(), models.end(), k) == models.end()) models.push_back(k);
    }
    if (models.empty()) throw std::invalid_argument("samples: registry has no repair models");
    std::vector<sim::RepairFn> repairs;
    for (const auto& m : models) repairs.push_back(load_repair(cfg, m));

    std::vector<Kind> kinds = split.train_corrupted_kinds();
    kinds.insert(kinds.end(), split.test_corruptions.begin(), split.test_corruptions.end());
    std::vector<std::vector<Image>> rows;
    for (const auto kind : kinds) {
        const auto probe = load_probe(cfg, {kind}, std::numeric_limits<std::size_t>::max());
        if (probe.clean.empty()) throw std::runtime_error("samples: no probe image for " + std::string(corrupt::kind_name(kind)));
        std::vector<Image> row = {probe.clean.front(), probe.corrupted.front()};
        for (const auto& r : repairs) row.push_back(r(probe.corrupted.front()));
        rows.push_back(std::move(row));
    }
    say(log, "writing " + p.samples().string());
    io::write_png(p.samples(), io::tile_grid(rows));
    return rows;
}

double action_gap(const control::Controller& h, const sim::RepairFn& repair, const ProbeSet& probe) {
    if (probe.clean.empty() || probe.clean.size() != probe.corrupted.size())
        throw std::invalid_argument("action_gap: probe set is empty or unpaired");
    double sum = 0.0;
    for (std::size_t i = 0; i < probe.clean.size(); ++i) {
        const auto a = h.predict(probe.clean[i]);
        const auto b = h.predict(repair ? repair(probe.corrupted[i]) : probe.corrupted[i]);
        sum += std::abs(a.steering - b.steering) + std::abs(a.throttle - b.throttle);
    }
    return sum / static_cast<double>(probe.clean.size());
}

}  // namespace repairlab::pipeline
