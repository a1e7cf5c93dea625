#include "repairlab/eval/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "repairlab/io.hpp"
#include "repairlab/rng.hpp"

namespace repairlab::eval {

void EvalConfig::validate() const {
    if (episodes < 1) throw std::invalid_argument("eval config: episodes must be >= 1");
    if (steps < 1) throw std::invalid_argument("eval config: steps must be >= 1");
    if (!seeds.empty() && static_cast<int>(seeds.size()) != episodes)
        throw std::invalid_argument("eval config: seeds must list one seed per episode");
    if (!(off_track_margin >= 0.0) || !(lateral_jitter >= 0.0) || !(heading_jitter_deg >= 0.0))
        throw std::invalid_argument("eval config: margins and jitter must be >= 0");
    for (const auto& [kind, spec] : corruptions) {
        if (spec.kind() != kind) throw std::invalid_argument("eval config: corruption entry has the wrong kind");
        spec.validate();
    }
}

std::uint64_t EvalConfig::episode_seed(int episode) const {
    const std::uint64_t s = seeds.empty() ? static_cast<std::uint64_t>(episode) : seeds.at(static_cast<std::size_t>(episode));
    return derive_seed(s, "eval_episode");
}

corrupt::CorruptionSpec EvalConfig::spec_for(corrupt::Kind kind, const sim::SimConfig& sim) const {
    const auto it = corruptions.find(kind);
    if (it != corruptions.end()) return it->second;
    return corrupt::default_spec(kind, 0, sim.image_height, sim.image_width);
}

nlohmann::json to_json(const EvalConfig& c) {
    nlohmann::json corr = nlohmann::json::object();
    for (const auto& [kind, spec] : c.corruptions) corr[std::string(corrupt::kind_name(kind))] = corrupt::to_json(spec);
    return {{"episodes", c.episodes},
            {"steps", c.steps},
            {"seeds", c.seeds},
            {"off_track_margin", c.off_track_margin},
            {"lateral_jitter", c.lateral_jitter},
            {"heading_jitter_deg", c.heading_jitter_deg},
            {"corruptions", corr}};
}

EvalConfig eval_config_from_json(const nlohmann::json& j) {
    EvalConfig c;
    c.episodes = j.value("episodes", c.episodes);
    c.steps = j.value("steps", c.steps);
    c.seeds = j.value("seeds", c.seeds);
    c.off_track_margin = j.value("off_track_margin", c.off_track_margin);
    c.lateral_jitter = j.value("lateral_jitter", c.lateral_jitter);
    c.heading_jitter_deg = j.value("heading_jitter_deg", c.heading_jitter_deg);
    if (j.contains("corruptions"))
        for (auto it = j.at("corruptions").begin(); it != j.at("corruptions").end(); ++it) {
            auto spec = corrupt::corruption_from_json(it.value());
            c.corruptions[corrupt::parse_kind(it.key())] = spec;
        }
    c.validate();
    return c;
}

double rmse_cte(std::span<const double> cte) {
    if (cte.empty()) throw std::invalid_argument("rmse_cte: empty sequence");
    double sum = 0.0;
    for (double v : cte) sum += v * v;
    return std::sqrt(sum / static_cast<double>(cte.size()));
}

double trajectory_deviation(std::span<const sim::Vec2> a, std::span<const sim::Vec2> b) {
    const std::size_t n = std::min(a.size(), b.size());
    if (n == 0) throw std::invalid_argument("trajectory_deviation: no overlapping samples");
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const sim::Vec2 d = a[i] - b[i];
        sum += d.dot(d);
    }
    return std::sqrt(sum);
}

std::vector<sim::Vec2> positions(const sim::Trajectory& traj) {
    std::vector<sim::Vec2> out;
    out.reserve(traj.records.size());
    for (const auto& r : traj.records) out.push_back(r.state.position);
    return out;
}

sim::ObservationFn frame_corruptor(const corrupt::CorruptionSpec& spec, std::uint64_t episode_seed) {
    if (spec.kind() == corrupt::Kind::None) return {};
    const std::uint64_t stream = mix64(episode_seed ^ fnv1a(corrupt::kind_name(spec.kind())));
    return [spec, stream](const Image& y, int step) {
        corrupt::CorruptionSpec s = spec;
        s.seed = corrupt::stream_seed(stream, static_cast<std::uint64_t>(step));
        return corrupt::apply_corruption(y, s);
    };
}

std::vector<double> CellResult::samples() const {
    std::vector<double> out;
    for (const auto& e : episodes) out.insert(out.end(), e.cte.begin(), e.cte.end());
    return out;
}

CellResult evaluate_policy_cell(const sim::Track& track, const sim::SimConfig& sim, const sim::Policy& policy,
                                const sim::RepairFn& repair, corrupt::Kind kind, const EvalConfig& cfg) {
    cfg.validate();
    const auto spec = cfg.spec_for(kind, sim);
    CellResult cell;
    cell.kind = kind;
    const double boundary = track.half_width() + cfg.off_track_margin;
    for (int e = 0; e < cfg.episodes; ++e) {
        const std::uint64_t seed = cfg.episode_seed(e);
        sim::RolloutOptions opts;
        opts.max_steps = cfg.steps;
        opts.off_track_margin = cfg.off_track_margin;
        opts.observe = frame_corruptor(spec, seed);
        opts.repair = repair;
        const auto x0 = datagen::jittered_start(track, sim, seed, cfg.lateral_jitter, cfg.heading_jitter_deg);
        const auto traj = sim::rollout(policy, track, x0, sim, opts);
        EpisodeResult ep;
        ep.seed = seed;
        ep.termination = traj.termination;
        ep.recorded = static_cast<int>(traj.records.size());
        ep.cte = traj.padded_cte(boundary);
        ep.positions = positions(traj);
        cell.episodes.push_back(std::move(ep));
    }
    cell.rmse = rmse_cte(cell.samples());
    return cell;
}

CellResult evaluate_cell(const sim::Track& track, const sim::SimConfig& sim, const control::Controller& h,
                         const sim::RepairFn& repair, corrupt::Kind kind, const EvalConfig& cfg) {
    if (h.arch().height != sim.image_height || h.arch().width != sim.image_width)
        throw std::invalid_argument("evaluate_cell: controller expects " + std::to_string(h.arch().height) + "x" +
                                    std::to_string(h.arch().width) + " but the camera renders " +
                                    std::to_string(sim.image_height) + "x" + std::to_string(sim.image_width));
    if (repair) {
        const Image probe = repair(Image(sim.image_height, sim.image_width));
        if (probe.height() != sim.image_height || probe.width() != sim.image_width)
            throw std::invalid_argument("evaluate_cell: repair output size differs from the camera size");
    }
    const auto policy = sim::image_policy([&h](const Image& y) { return h.predict(y); });
    return evaluate_policy_cell(track, sim, policy, repair, kind, cfg);
}

std::string RowKey::id() const {
    std::string s = config + "_" + approach + "_" + pairedness + "_" + loss_mode + "_" + eval_controller;
    for (auto& ch : s)
        if (ch == '-' || ch == '/' || ch == ' ') ch = 'x';
    return s;
}

void aggregate_row(ResultsRow& row, const datagen::ExperimentConfigSplit& split) {
    std::vector<double> unseen, all;
    for (std::size_t i = 0; i < kColumnKinds.size(); ++i) {
        const auto it = row.cells.find(kColumnKinds[i]);
        if (it == row.cells.end()) throw std::invalid_argument("aggregate_row: missing column " + std::string(kColumns[i]));
        const auto s = it->second.samples();
        row.values[i] = rmse_cte(s);
        all.insert(all.end(), s.begin(), s.end());
        if (split.is_test_kind(kColumnKinds[i])) unseen.insert(unseen.end(), s.begin(), s.end());
    }
    row.values[6] = unseen.empty() ? std::nan("") : rmse_cte(unseen);
    row.values[7] = rmse_cte(all);
}

std::string ResultsTable::to_csv() const {
    std::string out = "config,approach,pairedness,controller_loss,eval_controller";
    for (const char* c : kColumns) out += std::string(",") + c;
    out += "\n";
    char buf[64];
    for (const auto& r : rows) {
        out += r.key.config + "," + r.key.approach + "," + r.key.pairedness + "," + r.key.loss_mode + "," +
               r.key.eval_controller;
        for (double v : r.values) {
            std::snprintf(buf, sizeof buf, ",%.6f", v);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

std::string step_log_csv(const CellResult& cell) {
    std::string out = "episode,seed,step,cte,padded\n";
    char buf[128];
    for (std::size_t e = 0; e < cell.episodes.size(); ++e) {
        const auto& ep = cell.episodes[e];
        for (std::size_t t = 0; t < ep.cte.size(); ++t) {
            std::snprintf(buf, sizeof buf, "%zu,%llu,%zu,%.17g,%d\n", e, static_cast<unsigned long long>(ep.seed), t,
                          ep.cte[t], static_cast<int>(t) >= ep.recorded ? 1 : 0);
            out += buf;
        }
    }
    return out;
}

void write_step_log(const std::filesystem::path& path, const CellResult& cell) {
    io::write_gzip_text(path, step_log_csv(cell));
}

std::vector<double> read_step_log(const std::filesystem::path& path) {
    const auto rows = io::parse_csv(io::read_gzip_text(path));
    std::vector<double> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 5) throw std::runtime_error("step log: malformed row in " + path.string());
        out.push_back(std::stod(rows[i][3]));
    }
    return out;
}

ResultsTable run_experiment_matrix(const datagen::ExperimentConfigSplit& split, const std::vector<RegistryEntry>& registry,
                                   const sim::Track& track, const sim::SimConfig& sim, const EvalConfig& cfg,
                                   const std::optional<std::filesystem::path>& log_dir,
                                   const std::function<void(const std::string&)>& progress) {
    if (registry.empty()) throw std::invalid_argument("run_experiment_matrix: empty model registry");
    ResultsTable table;
    table.split = split.name;
    for (const auto& entry : registry) {
        ResultsRow row;
        row.key = entry.key;
        for (const auto kind : kColumnKinds) {
            if (progress) progress(entry.key.id() + " " + std::string(corrupt::kind_name(kind)));
            auto cell = evaluate_cell(track, sim, entry.controller, entry.repair, kind, cfg);
            if (log_dir)
                write_step_log(*log_dir / entry.key.id() / (std::string(corrupt::kind_name(kind)) + ".csv.gz"), cell);
            row.cells.emplace(kind, std::move(cell));
        }
        aggregate_row(row, split);
        table.rows.push_back(std::move(row));
    }
    return table;
}

LatencyStats benchmark_inference(const std::function<void(const Image&)>& model, const std::vector<Image>& images,
                                 int count, int warmup) {
    if (images.empty() || count < 1 || warmup < 0) throw std::invalid_argument("benchmark_inference: bad arguments");
    using clock = std::chrono::steady_clock;
    for (int i = 0; i < warmup; ++i) model(images[static_cast<std::size_t>(i) % images.size()]);
    std::vector<double> ms(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const Image& y = images[static_cast<std::size_t>(i) % images.size()];
        const auto t0 = clock::now();
        model(y);
        ms[static_cast<std::size_t>(i)] = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    }
    double mean = 0.0;
    for (double v : ms) mean += v;
    mean /= count;
    double var = 0.0;
    for (double v : ms) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / count), count};
}

std::string latency_csv(const std::vector<std::pair<std::string, LatencyStats>>& rows) {
    std::string out = "model,mean_ms,std_ms\n";
    char buf[160];
    for (const auto& [name, s] : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f\n", name.c_str(), s.mean_ms, s.std_ms);
        out += buf;
    }
    return out;
}

}  // namespace repairlab::eval
