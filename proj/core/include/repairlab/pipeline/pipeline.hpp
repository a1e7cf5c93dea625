#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "repairlab/control/controller.hpp"
#include "repairlab/datagen/datagen.hpp"
#include "repairlab/eval/harness.hpp"
#include "repairlab/genrepair/repair.hpp"
#include "repairlab/pipeline/config.hpp"
#include "repairlab/sim/track.hpp"

namespace repairlab::pipeline {

using Logger = std::function<void(const std::string&)>;

/// Output layout under ExperimentConfig::output_dir.
struct Paths {
    std::filesystem::path root;

    std::filesystem::path data() const { return root / "data"; }
    std::filesystem::path models() const { return root / "models"; }
    std::filesystem::path results() const { return root / "results"; }

    std::filesystem::path clean_manifest() const { return data() / "clean.csv"; }
    /// Training-split clean rows corrupted with the split's training kinds.
    std::filesystem::path paired_manifest() const { return data() / "paired.csv"; }
    /// Corrupted domain built from a separate recording.
    std::filesystem::path unpaired_manifest() const { return data() / "unpaired.csv"; }
    std::filesystem::path unpaired_source_manifest() const { return data() / "unpaired_source.csv"; }
    /// Held-out clean rows corrupted with every kind.
    std::filesystem::path probe_manifest() const { return data() / "probe.csv"; }
    std::filesystem::path data_summary() const { return data() / "summary.json"; }

    std::filesystem::path controller(bool adversarial) const;
    std::filesystem::path repair_model(const RegistrySpec& spec) const;

    std::filesystem::path table() const { return results() / "table.csv"; }
    std::filesystem::path step_logs() const { return results() / "logs"; }
    std::filesystem::path latency() const { return results() / "latency.csv"; }
    std::filesystem::path samples() const { return results() / "samples.png"; }
};

enum class Target { Controller, AdvController, Vae, CycleGan, Pix2Pix };
Target parse_target(std::string_view name);
std::string_view target_name(Target t);

/// "default" gives the built-in track; anything else is read as a track JSON file.
sim::Track load_track(const ExperimentConfig& cfg);

/// Records clean data, builds the paired, unpaired and probe sets, and returns manifest hashes.
nlohmann::json gen_data(const ExperimentConfig& cfg, const Logger& log = {});

/// Trains one target; GAN targets train every registry variant that needs that model.
/// Returns the checkpoint paths written.
std::vector<std::filesystem::path> train(const ExperimentConfig& cfg, Target target, const Logger& log = {});

/// GAN training data for one registry variant (pairing, caps and held-out set from the config).
genrepair::GanData gan_data(const ExperimentConfig& cfg, bool paired);

/// Repair closure for a registry entry; empty for approach none. Loads checkpoints when needed.
sim::RepairFn load_repair(const ExperimentConfig& cfg, const RegistrySpec& spec);
control::Controller load_controller(const ExperimentConfig& cfg, bool adversarial);

/// Runs the registry over the six corruption columns, writes the table CSV and step logs.
eval::ResultsTable evaluate(const ExperimentConfig& cfg, const Logger& log = {});

/// Latency of each bench model over probe images; writes the latency CSV.
std::vector<std::pair<std::string, eval::LatencyStats>> bench(const ExperimentConfig& cfg, const Logger& log = {});

/// Grid with one row per corruption kind of the split: clean, corrupted, then each repair
/// model in registry order. Returns the rows (before tiling) and writes the PNG.
std::vector<std::vector<Image>> samples(const ExperimentConfig& cfg, const Logger& log = {});

/// Paired probe images for one kind, capped at `limit`.
struct ProbeSet {
    std::vector<Image> clean;
    std::vector<Image> corrupted;
};
ProbeSet load_probe(const ExperimentConfig& cfg, const std::vector<corrupt::Kind>& kinds, std::size_t limit);

/// Mean |h(y) - h(r(y_hat))|_1 over a probe set (identity repair when `repair` is empty).
double action_gap(const control::Controller& h, const sim::RepairFn& repair, const ProbeSet& probe);

}  // namespace repairlab::pipeline
