#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "repairlab/control/controller.hpp"
#include "repairlab/corrupt/corruption.hpp"
#include "repairlab/datagen/datagen.hpp"
#include "repairlab/image.hpp"
#include "repairlab/sim/rollout.hpp"
#include "repairlab/sim/track.hpp"

namespace repairlab::eval {

struct EvalConfig {
    int episodes = 5;
    int steps = 600;
    /// Episode i uses seeds[i]; filled with 0..episodes-1 when empty.
    std::vector<std::uint64_t> seeds;
    double off_track_margin = 1.0;
    double lateral_jitter = 0.3;
    double heading_jitter_deg = 5.0;
    /// Per-kind corruption parameters; kinds not listed use default_spec at the sim resolution.
    std::map<corrupt::Kind, corrupt::CorruptionSpec> corruptions;

    void validate() const;
    std::uint64_t episode_seed(int episode) const;
    corrupt::CorruptionSpec spec_for(corrupt::Kind kind, const sim::SimConfig& sim) const;
};

nlohmann::json to_json(const EvalConfig& cfg);
EvalConfig eval_config_from_json(const nlohmann::json& j);

/// sqrt(mean(cte^2)). Throws on an empty sequence.
double rmse_cte(std::span<const double> cte);

/// L2 norm of position differences over the common prefix. Throws when either is empty.
double trajectory_deviation(std::span<const sim::Vec2> a, std::span<const sim::Vec2> b);
std::vector<sim::Vec2> positions(const sim::Trajectory& traj);

/// Per-frame corruption hook. Frame t of an episode gets noise seed
/// stream_seed(mix64(episode_seed ^ fnv1a(kind)), t). Empty for kind none.
sim::ObservationFn frame_corruptor(const corrupt::CorruptionSpec& spec, std::uint64_t episode_seed);

struct EpisodeResult {
    std::uint64_t seed = 0;
    sim::Termination termination = sim::Termination::Completed;
    std::vector<double> cte;  ///< padded to the scheduled length when the car leaves the track
    int recorded = 0;         ///< steps actually simulated; the rest of `cte` is padding
    std::vector<sim::Vec2> positions;
};

struct CellResult {
    corrupt::Kind kind = corrupt::Kind::None;
    std::vector<EpisodeResult> episodes;
    double rmse = 0.0;

    std::vector<double> samples() const;
};

/// Closed-loop evaluation of any policy under one corruption kind.
CellResult evaluate_policy_cell(const sim::Track& track, const sim::SimConfig& sim, const sim::Policy& policy,
                                const sim::RepairFn& repair, corrupt::Kind kind, const EvalConfig& cfg);

/// Controller + optional repair. Throws when the controller or repair output does not match the
/// rendered image size.
CellResult evaluate_cell(const sim::Track& track, const sim::SimConfig& sim, const control::Controller& h,
                         const sim::RepairFn& repair, corrupt::Kind kind, const EvalConfig& cfg);

/// Table columns in display order; the first six map to corruption kinds.
inline constexpr std::array<const char*, 8> kColumns = {"Normal", "Brightness", "Salt/Pepper", "Rain",
                                                         "Fog",    "Snow",       "Unseen",      "All"};
inline constexpr std::array<corrupt::Kind, 6> kColumnKinds = {corrupt::Kind::None,     corrupt::Kind::Darken,
                                                              corrupt::Kind::SaltPepper, corrupt::Kind::Rain,
                                                              corrupt::Kind::Fog,      corrupt::Kind::Snow};

struct RowKey {
    std::string config = "-";          ///< A, B or -
    std::string approach = "none";     ///< none, LR, VB, VAE, CycleGAN, pix2pix, adv
    std::string pairedness = "-";      ///< paired, unpaired or -
    std::string loss_mode = "none";    ///< controller-loss mode during repair training
    std::string eval_controller = "h"; ///< h or h_adv

    std::string id() const;
    friend bool operator==(const RowKey&, const RowKey&) = default;
};

struct ResultsRow {
    RowKey key;
    std::map<corrupt::Kind, CellResult> cells;
    std::array<double, 8> values{};
};

/// Fills Unseen (test corruptions of the split) and All (every sample of the six kind columns),
/// both as RMSE over pooled samples.
void aggregate_row(ResultsRow& row, const datagen::ExperimentConfigSplit& split);

struct ResultsTable {
    std::string split;
    std::vector<ResultsRow> rows;

    /// Header plus one line per row; values with %.6f.
    std::string to_csv() const;
};

struct RegistryEntry {
    RowKey key;
    control::Controller controller;
    sim::RepairFn repair;  ///< empty means no repair
};

/// Evaluates every entry over the six kinds. When `log_dir` is set, writes per-step CTE logs as
/// `<log_dir>/<row id>/<kind>.csv.gz`.
ResultsTable run_experiment_matrix(const datagen::ExperimentConfigSplit& split, const std::vector<RegistryEntry>& registry,
                                   const sim::Track& track, const sim::SimConfig& sim, const EvalConfig& cfg,
                                   const std::optional<std::filesystem::path>& log_dir = std::nullopt,
                                   const std::function<void(const std::string&)>& progress = {});

/// Per-step log: episode,seed,step,cte,padded.
std::string step_log_csv(const CellResult& cell);
void write_step_log(const std::filesystem::path& path, const CellResult& cell);
/// CTE samples read back from a step log, in file order.
std::vector<double> read_step_log(const std::filesystem::path& path);

struct LatencyStats {
    double mean_ms = 0.0;
    double std_ms = 0.0;
    int images = 0;
};

/// Wall-clock latency per image at batch size 1, after `warmup` untimed calls. Images are cycled
/// when fewer than `count` are supplied.
LatencyStats benchmark_inference(const std::function<void(const Image&)>& model, const std::vector<Image>& images,
                                 int count = 1000, int warmup = 50);

/// "model,mean_ms,std_ms" rows.
std::string latency_csv(const std::vector<std::pair<std::string, LatencyStats>>& rows);

}  // namespace repairlab::eval
