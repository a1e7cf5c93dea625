#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "repairlab/classical/restore.hpp"
#include "repairlab/control/controller.hpp"
#include "repairlab/corrupt/corruption.hpp"
#include "repairlab/eval/harness.hpp"
#include "repairlab/genrepair/repair.hpp"
#include "repairlab/sim/vehicle.hpp"

namespace repairlab::pipeline {

struct DataConfig {
    int episodes = 12;          ///< clean expert episodes; the last `test_episodes` are held out
    int steps = 250;
    int test_episodes = 2;
    int unpaired_episodes = 6;  ///< separate recording that feeds the unpaired corrupted domain
    double lateral_jitter = 1.0;
    double heading_jitter_deg = 15.0;
    double off_track_margin = 1.0;
    int gan_images = 600;       ///< per-domain cap on GAN/VAE training images
    int heldout_images = 64;    ///< held-out pairs for GAN curve checks
};

/// One row of the results table: which repair model, how it was trained, which controller drives.
struct RegistrySpec {
    std::string approach = "none";  ///< none, LR, VB, VAE, CycleGAN, pix2pix
    std::string pairedness = "-";   ///< paired / unpaired for CycleGAN, paired for pix2pix
    genrepair::ControllerLossMode loss_mode = genrepair::ControllerLossMode::None;
    std::string eval_controller = "h";  ///< h or h_adv

    void validate() const;
    bool trained_generator() const { return approach == "CycleGAN" || approach == "pix2pix"; }
    eval::RowKey row_key(const std::string& split) const;
    friend bool operator==(const RegistrySpec&, const RegistrySpec&) = default;
};

struct BenchConfig {
    int count = 1000;
    int warmup = 50;
    std::vector<std::string> models = {"LR", "VB", "VAE", "CycleGAN", "pix2pix"};
};

struct ExperimentConfig {
    std::string split = "A";
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";
    /// "default" or a path to a track JSON file.
    std::string track = "default";
    sim::SimConfig sim;
    /// Overrides of the default corruption parameters (at the sim resolution). Shared by data
    /// generation and evaluation.
    std::map<corrupt::Kind, corrupt::CorruptionSpec> corruptions;
    DataConfig data;
    control::ControllerArch controller_arch;
    control::ControllerTrainConfig controller_train;
    control::ControllerTrainConfig adv_train;
    classical::ClassicalParams classical;
    genrepair::VaeConfig vae;
    genrepair::GanTrainConfig cyclegan;
    genrepair::GanTrainConfig pix2pix;
    eval::EvalConfig eval;
    std::vector<RegistrySpec> registry;
    BenchConfig bench;

    /// Desk-scale defaults: 32x48 camera, small models.
    ExperimentConfig();

    void validate() const;
    corrupt::CorruptionSpec corruption_spec(corrupt::Kind kind) const;
    /// eval settings with every kind's corruption resolved.
    eval::EvalConfig resolved_eval() const;
    std::uint64_t stage_seed(std::string_view stage) const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys take the defaults; unknown top-level keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

nlohmann::json to_json(const RegistrySpec& r);
RegistrySpec registry_spec_from_json(const nlohmann::json& j);

}  // namespace repairlab::pipeline
