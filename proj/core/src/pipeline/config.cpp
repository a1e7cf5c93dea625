#include "repairlab/pipeline/config.hpp"

#include <set>
#include <stdexcept>

#include "repairlab/datagen/datagen.hpp"
#include "repairlab/io.hpp"
#include "repairlab/rng.hpp"

namespace repairlab::pipeline {

using genrepair::ControllerLossMode;

void RegistrySpec::validate() const {
    static const std::set<std::string> approaches = {"none", "LR", "VB", "VAE", "CycleGAN", "pix2pix"};
    if (!approaches.contains(approach)) throw std::invalid_argument("registry: unknown approach '" + approach + "'");
    if (eval_controller != "h" && eval_controller != "h_adv")
        throw std::invalid_argument("registry: eval_controller must be h or h_adv");
    if (approach == "CycleGAN") {
        if (pairedness != "paired" && pairedness != "unpaired")
            throw std::invalid_argument("registry: CycleGAN needs pairedness paired or unpaired");
        if (pairedness == "unpaired" && loss_mode != ControllerLossMode::None)
            throw std::invalid_argument("registry: controller loss requires paired data");
    } else if (approach == "pix2pix") {
        if (pairedness != "paired") throw std::invalid_argument("registry: pix2pix requires paired data");
    } else if (loss_mode != ControllerLossMode::None) {
        throw std::invalid_argument("registry: controller_loss_mode only applies to CycleGAN and pix2pix");
    }
}

eval::RowKey RegistrySpec::row_key(const std::string& split) const {
    eval::RowKey k;
    k.config = trained_generator() || approach == "VAE" ? split : std::string("-");
    if (approach == "none" && eval_controller == "h_adv") k.config = split;
    k.approach = approach;
    k.pairedness = pairedness;
    k.loss_mode = std::string(genrepair::loss_mode_name(loss_mode));
    k.eval_controller = eval_controller;
    return k;
}

nlohmann::json to_json(const RegistrySpec& r) {
    return {{"approach", r.approach},
            {"pairedness", r.pairedness},
            {"controller_loss_mode", std::string(genrepair::loss_mode_name(r.loss_mode))},
            {"eval_controller", r.eval_controller}};
}

RegistrySpec registry_spec_from_json(const nlohmann::json& j) {
    RegistrySpec r;
    r.approach = j.value("approach", r.approach);
    r.pairedness = j.value("pairedness", r.approach == "pix2pix" ? std::string("paired") : r.pairedness);
    r.loss_mode = genrepair::parse_loss_mode(j.value("controller_loss_mode", std::string("none")));
    r.eval_controller = j.value("eval_controller", r.eval_controller);
    r.validate();
    return r;
}

namespace {

RegistrySpec reg(std::string approach, std::string pairedness = "-", ControllerLossMode mode = ControllerLossMode::None,
                 std::string controller = "h") {
    return {std::move(approach), std::move(pairedness), mode, std::move(controller)};
}

void sync_arch(ExperimentConfig& c) {
    c.controller_arch.height = c.sim.image_height;
    c.controller_arch.width = c.sim.image_width;
}

nlohmann::json sim_json(const sim::SimConfig& s) {
    return {{"dt", s.dt},
            {"wheelbase", s.wheelbase},
            {"max_steer_angle", s.max_steer_angle},
            {"v_max", s.v_max},
            {"max_accel", s.max_accel},
            {"drag", s.drag},
            {"target_speed", s.target_speed},
            {"image_height", s.image_height},
            {"image_width", s.image_width},
            {"camera_height", s.camera_height},
            {"camera_pitch", s.camera_pitch},
            {"camera_forward", s.camera_forward},
            {"horizon_fraction", s.horizon_fraction},
            {"supersample", s.supersample}};
}

sim::SimConfig sim_from_json(const nlohmann::json& j, sim::SimConfig s) {
    s.dt = j.value("dt", s.dt);
    s.wheelbase = j.value("wheelbase", s.wheelbase);
    s.max_steer_angle = j.value("max_steer_angle", s.max_steer_angle);
    s.v_max = j.value("v_max", s.v_max);
    s.max_accel = j.value("max_accel", s.max_accel);
    s.drag = j.value("drag", s.drag);
    s.target_speed = j.value("target_speed", s.target_speed);
    s.image_height = j.value("image_height", s.image_height);
    s.image_width = j.value("image_width", s.image_width);
    s.camera_height = j.value("camera_height", s.camera_height);
    s.camera_pitch = j.value("camera_pitch", s.camera_pitch);
    s.camera_forward = j.value("camera_forward", s.camera_forward);
    s.horizon_fraction = j.value("horizon_fraction", s.horizon_fraction);
    s.supersample = j.value("supersample", s.supersample);
    s.validate();
    return s;
}

nlohmann::json data_json(const DataConfig& d) {
    return {{"episodes", d.episodes},
            {"steps", d.steps},
            {"test_episodes", d.test_episodes},
            {"unpaired_episodes", d.unpaired_episodes},
            {"lateral_jitter", d.lateral_jitter},
            {"heading_jitter_deg", d.heading_jitter_deg},
            {"off_track_margin", d.off_track_margin},
            {"gan_images", d.gan_images},
            {"heldout_images", d.heldout_images}};
}

DataConfig data_from_json(const nlohmann::json& j) {
    DataConfig d;
    d.episodes = j.value("episodes", d.episodes);
    d.steps = j.value("steps", d.steps);
    d.test_episodes = j.value("test_episodes", d.test_episodes);
    d.unpaired_episodes = j.value("unpaired_episodes", d.unpaired_episodes);
    d.lateral_jitter = j.value("lateral_jitter", d.lateral_jitter);
    d.heading_jitter_deg = j.value("heading_jitter_deg", d.heading_jitter_deg);
    d.off_track_margin = j.value("off_track_margin", d.off_track_margin);
    d.gan_images = j.value("gan_images", d.gan_images);
    d.heldout_images = j.value("heldout_images", d.heldout_images);
    return d;
}

/// Section values layered over the current defaults.
nlohmann::json over(nlohmann::json base, const nlohmann::json& section) {
    base.update(section);
    return base;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
    sim.image_height = 32;
    sim.image_width = 48;
    sync_arch(*this);

    controller_train.epochs = 15;
    controller_train.learning_rate = 1e-3;
    adv_train = controller_train;

    vae.filters = 16;
    vae.epochs = 15;

    cyclegan.generator_filters = 16;
    cyclegan.discriminator_filters = 32;
    cyclegan.epochs = 10;
    cyclegan.batch_size = 4;

    pix2pix = genrepair::pix2pix_default_config();
    pix2pix.generator_filters = 16;
    pix2pix.discriminator_filters = 32;
    pix2pix.epochs = 10;
    pix2pix.batch_size = 4;

    registry = {reg("none"),
                reg("LR"),
                reg("VB"),
                reg("VAE"),
                reg("none", "-", ControllerLossMode::None, "h_adv"),
                reg("CycleGAN", "unpaired"),
                reg("CycleGAN", "paired"),
                reg("CycleGAN", "paired", ControllerLossMode::OnH),
                reg("pix2pix", "paired"),
                reg("pix2pix", "paired", ControllerLossMode::OnH)};
}

void ExperimentConfig::validate() const {
    datagen::configuration_split(split);
    sim.validate();
    if (data.episodes < 1 || data.steps < 1 || data.test_episodes < 0 || data.test_episodes >= data.episodes ||
        data.unpaired_episodes < 0 || data.gan_images < 1 || data.heldout_images < 0)
        throw std::invalid_argument("config: data section out of range");
    if (controller_arch.height != sim.image_height || controller_arch.width != sim.image_width)
        throw std::invalid_argument("config: controller input size must match the camera");
    controller_arch.validate();
    controller_train.validate();
    adv_train.validate();
    cyclegan.validate();
    pix2pix.validate();
    eval.validate();
    for (const auto& [kind, spec] : corruptions) {
        if (spec.kind() != kind) throw std::invalid_argument("config: corruption entry has the wrong kind");
        spec.validate();
    }
    for (const auto& r : registry) r.validate();
    if (bench.count < 1 || bench.warmup < 0) throw std::invalid_argument("config: bench section out of range");
}

corrupt::CorruptionSpec ExperimentConfig::corruption_spec(corrupt::Kind kind) const {
    const auto it = corruptions.find(kind);
    if (it != corruptions.end()) return it->second;
    return corrupt::default_spec(kind, 0, sim.image_height, sim.image_width);
}

eval::EvalConfig ExperimentConfig::resolved_eval() const {
    eval::EvalConfig e = eval;
    for (const auto kind : eval::kColumnKinds) e.corruptions[kind] = corruption_spec(kind);
    return e;
}

std::uint64_t ExperimentConfig::stage_seed(std::string_view stage) const { return derive_seed(seed, stage); }

nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json corr = nlohmann::json::object();
    for (const auto& [kind, spec] : c.corruptions) corr[std::string(corrupt::kind_name(kind))] = corrupt::to_json(spec);
    nlohmann::json reg = nlohmann::json::array();
    for (const auto& r : c.registry) reg.push_back(to_json(r));
    auto arch = control::to_json(c.controller_arch);
    arch.erase("height");
    arch.erase("width");
    return {{"split", c.split},
            {"seed", c.seed},
            {"output_dir", c.output_dir.string()},
            {"track", c.track},
            {"sim", sim_json(c.sim)},
            {"corruptions", corr},
            {"data", data_json(c.data)},
            {"controller", {{"arch", arch}, {"train", control::to_json(c.controller_train)}}},
            {"adv_controller", control::to_json(c.adv_train)},
            {"classical", classical::to_json(c.classical)},
            {"vae", genrepair::to_json(c.vae)},
            {"cyclegan", genrepair::to_json(c.cyclegan)},
            {"pix2pix", genrepair::to_json(c.pix2pix)},
            {"eval", eval::to_json(c.eval)},
            {"registry", reg},
            {"bench", {{"count", c.bench.count}, {"warmup", c.bench.warmup}, {"models", c.bench.models}}}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {"split", "seed", "output_dir", "track", "sim", "corruptions",
                                                "data", "controller", "adv_controller", "classical", "vae",
                                                "cyclegan", "pix2pix", "eval", "registry", "bench"};
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.contains(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");

    ExperimentConfig c;
    c.split = j.value("split", c.split);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.track = j.value("track", c.track);
    if (j.contains("sim")) c.sim = sim_from_json(j.at("sim"), c.sim);
    if (j.contains("corruptions"))
        for (auto it = j.at("corruptions").begin(); it != j.at("corruptions").end(); ++it)
            c.corruptions[corrupt::parse_kind(it.key())] = corrupt::corruption_from_json(it.value());
    if (j.contains("data")) c.data = data_from_json(j.at("data"));
    if (j.contains("controller")) {
        const auto& s = j.at("controller");
        if (s.contains("arch")) c.controller_arch = control::arch_from_json(over(control::to_json(c.controller_arch), s.at("arch")));
        if (s.contains("train"))
            c.controller_train = control::controller_train_config_from_json(over(control::to_json(c.controller_train), s.at("train")));
    }
    sync_arch(c);
    if (j.contains("adv_controller"))
        c.adv_train = control::controller_train_config_from_json(over(control::to_json(c.adv_train), j.at("adv_controller")));
    if (j.contains("classical"))
        c.classical = classical::classical_params_from_json(over(classical::to_json(c.classical), j.at("classical")));
    if (j.contains("vae")) c.vae = genrepair::vae_config_from_json(over(genrepair::to_json(c.vae), j.at("vae")));
    if (j.contains("cyclegan"))
        c.cyclegan = genrepair::gan_train_config_from_json(over(genrepair::to_json(c.cyclegan), j.at("cyclegan")));
    if (j.contains("pix2pix"))
        c.pix2pix = genrepair::gan_train_config_from_json(over(genrepair::to_json(c.pix2pix), j.at("pix2pix")));
    if (j.contains("eval")) c.eval = eval::eval_config_from_json(over(eval::to_json(c.eval), j.at("eval")));
    if (j.contains("registry")) {
        c.registry.clear();
        for (const auto& r : j.at("registry")) c.registry.push_back(registry_spec_from_json(r));
    }
    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        c.bench.count = b.value("count", c.bench.count);
        c.bench.warmup = b.value("warmup", c.bench.warmup);
        c.bench.models = b.value("models", c.bench.models);
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return experiment_config_from_json(j);
}

}  // namespace repairlab::pipeline
