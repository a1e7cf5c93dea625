#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "repairlab/corrupt/corruption.hpp"
#include "repairlab/image.hpp"
#include "repairlab/sim/rollout.hpp"

namespace repairlab::datagen {

enum class Split { Train, Test };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct ManifestRow {
    std::string image_path;  ///< relative to Manifest::root
    ControlAction action;
    corrupt::Kind kind = corrupt::Kind::None;
    std::uint64_t corruption_seed = 0;
    std::string pair_id;
    Split split = Split::Train;
    int episode = 0;

    friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

struct Manifest {
    std::filesystem::path root;
    std::vector<ManifestRow> rows;

    std::size_t size() const noexcept { return rows.size(); }
    bool empty() const noexcept { return rows.empty(); }

    /// Header: image_path,steering,throttle,corruption_kind,corruption_seed,pair_id,split,episode
    std::string to_csv() const;
    /// SHA-256 of to_csv(); paths are relative so the hash ignores the root.
    std::string hash() const;

    Image load_image(const ManifestRow& row) const;
    std::vector<Image> load_images() const;
    std::vector<ControlAction> actions() const;

    Manifest select(corrupt::Kind kind) const;
    Manifest select(Split split) const;
    /// Sorted, de-duplicated episode ids.
    std::vector<int> episodes() const;
};

Manifest parse_manifest(const std::filesystem::path& root, std::string_view csv);
/// Writes CSV to `path`; rows resolve relative to `manifest.root`.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
/// The manifest root is the CSV file's directory.
Manifest load_manifest(const std::filesystem::path& path);

/// Throws std::runtime_error naming the first missing image.
void check_images_exist(const Manifest& manifest);

struct RecordOptions {
    int episodes = 20;
    int steps = 400;
    int test_episodes = 0;  ///< the last N episodes are tagged test
    double lateral_jitter = 0.3;
    double heading_jitter_deg = 5.0;
    double off_track_margin = 1.0;
    int first_episode = 0;  ///< episode ids start here, so separate recordings stay disjoint
};

/// Expert rollouts from seeded initial states along the centerline. Writes clean PNGs under
/// <root>/images/<split>/none/ and returns their manifest.
Manifest record_expert_dataset(const sim::Track& track, const sim::SimConfig& config,
                               const RecordOptions& options, std::uint64_t seed,
                               const std::filesystem::path& root);

/// Initial state for an episode, shared with the evaluation harness.
sim::VehicleState jittered_start(const sim::Track& track, const sim::SimConfig& config,
                                 std::uint64_t episode_seed, double lateral_jitter,
                                 double heading_jitter_deg);

/// Seed for row `index` of `kind` under a dataset-level seed.
std::uint64_t row_corruption_seed(std::uint64_t seed, corrupt::Kind kind, std::uint64_t index);

/// For every clean row and every spec (seed field ignored), one corrupted image with the clean
/// row's pair_id and label. Returns only the corrupted rows, ordered kind-major.
Manifest make_paired_dataset(const Manifest& clean, const std::vector<corrupt::CorruptionSpec>& specs,
                             std::uint64_t seed);

/// Clean set from `clean_a`; corrupted set from `clean_b`, whose rows cycle through the specs.
/// The two inputs must come from disjoint episodes.
std::pair<Manifest, Manifest> make_unpaired_dataset(const Manifest& clean_a, const Manifest& clean_b,
                                                    const std::vector<corrupt::CorruptionSpec>& specs,
                                                    std::uint64_t seed);

/// (clean row index, corrupted row index) for every pair_id match.
std::vector<std::pair<std::size_t, std::size_t>> join_pairs(const Manifest& clean, const Manifest& corrupted);

struct ExperimentConfigSplit {
    std::string name;
    std::vector<corrupt::Kind> train_corruptions;  ///< includes none
    std::vector<corrupt::Kind> test_corruptions;

    /// train_corruptions without none.
    std::vector<corrupt::Kind> train_corrupted_kinds() const;
    bool is_test_kind(corrupt::Kind kind) const;
};

/// "A": train on darken/salt_pepper/rain, test on snow/fog.
/// "B": train on darken/salt_pepper/fog, test on rain/snow.
ExperimentConfigSplit configuration_split(std::string_view name);

}  // namespace repairlab::datagen
