#include "repairlab/datagen/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "repairlab/io.hpp"
#include "repairlab/rng.hpp"
#include "repairlab/sim/render.hpp"

namespace repairlab::datagen {

namespace fs = std::filesystem;
using corrupt::Kind;

std::string_view split_name(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "test") return Split::Test;
    throw std::invalid_argument("unknown split: " + std::string(name));
}

namespace {

constexpr std::string_view kHeader =
    "image_path,steering,throttle,corruption_kind,corruption_seed,pair_id,split,episode";

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T>
T parse_number(const std::string& field, const char* what) {
    T value{};
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw std::runtime_error(std::string("manifest: bad ") + what + " '" + field + "'");
    return value;
}

std::string image_name(int episode, int step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "e%03d_%04d.png", episode, step);
    return buf;
}

std::string pair_name(int episode, int step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "e%03d-%04d", episode, step);
    return buf;
}

fs::path relative_image_path(Split split, Kind kind, const std::string& file) {
    return fs::path("images") / split_name(split) / corrupt::kind_name(kind) / file;
}

}  // namespace

std::string Manifest::to_csv() const {
    std::ostringstream out;
    out << kHeader << '\n';
    for (const auto& r : rows) {
        out << r.image_path << ',' << format_double(r.action.steering) << ','
            << format_double(r.action.throttle) << ',' << corrupt::kind_name(r.kind) << ','
            << r.corruption_seed << ',' << r.pair_id << ',' << split_name(r.split) << ',' << r.episode
            << '\n';
    }
    return out.str();
}

std::string Manifest::hash() const { return io::sha256_hex(to_csv()); }

Image Manifest::load_image(const ManifestRow& row) const { return io::read_png(root / row.image_path); }

std::vector<Image> Manifest::load_images() const {
    std::vector<Image> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(load_image(r));
    return out;
}

std::vector<ControlAction> Manifest::actions() const {
    std::vector<ControlAction> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.action);
    return out;
}

Manifest Manifest::select(Kind kind) const {
    Manifest out{root, {}};
    for (const auto& r : rows)
        if (r.kind == kind) out.rows.push_back(r);
    return out;
}

Manifest Manifest::select(Split split) const {
    Manifest out{root, {}};
    for (const auto& r : rows)
        if (r.split == split) out.rows.push_back(r);
    return out;
}

std::vector<int> Manifest::episodes() const {
    std::set<int> ids;
    for (const auto& r : rows) ids.insert(r.episode);
    return {ids.begin(), ids.end()};
}

Manifest parse_manifest(const fs::path& root, std::string_view csv) {
    const auto table = io::parse_csv(csv);
    if (table.empty()) throw std::runtime_error("manifest: empty file");
    if (io::split_csv_line(kHeader) != table.front())
        throw std::runtime_error("manifest: unexpected header");
    Manifest m{root, {}};
    for (std::size_t i = 1; i < table.size(); ++i) {
        const auto& f = table[i];
        if (f.size() != 8) throw std::runtime_error("manifest: row " + std::to_string(i) + " has wrong arity");
        ManifestRow r;
        r.image_path = f[0];
        r.action.steering = std::stod(f[1]);
        r.action.throttle = std::stod(f[2]);
        r.kind = corrupt::parse_kind(f[3]);
        r.corruption_seed = parse_number<std::uint64_t>(f[4], "corruption_seed");
        r.pair_id = f[5];
        r.split = parse_split(f[6]);
        r.episode = parse_number<int>(f[7], "episode");
        m.rows.push_back(std::move(r));
    }
    return m;
}

void save_manifest(const Manifest& manifest, const fs::path& path) { io::write_text(path, manifest.to_csv()); }

Manifest load_manifest(const fs::path& path) {
    return parse_manifest(path.parent_path(), io::read_text(path));
}

void check_images_exist(const Manifest& manifest) {
    for (const auto& r : manifest.rows)
        if (!fs::exists(manifest.root / r.image_path))
            throw std::runtime_error("manifest: missing image " + r.image_path);
}

sim::VehicleState jittered_start(const sim::Track& track, const sim::SimConfig& config,
                                 std::uint64_t episode_seed, double lateral_jitter,
                                 double heading_jitter_deg) {
    const CounterRng rng(episode_seed);
    const double s = rng.uniform(0, 0) * track.length();
    const double lateral = (2.0 * rng.uniform(0, 1) - 1.0) * lateral_jitter;
    const double heading = (2.0 * rng.uniform(0, 2) - 1.0) * heading_jitter_deg * std::numbers::pi / 180.0;
    return sim::pose_on_track(track, s, lateral, heading, config.target_speed);
}

Manifest record_expert_dataset(const sim::Track& track, const sim::SimConfig& config,
                               const RecordOptions& options, std::uint64_t seed, const fs::path& root) {
    if (options.episodes < 1) throw std::invalid_argument("record_expert_dataset: episodes must be >= 1");
    if (options.steps < 1) throw std::invalid_argument("record_expert_dataset: steps must be >= 1");
    if (options.test_episodes < 0 || options.test_episodes > options.episodes)
        throw std::invalid_argument("record_expert_dataset: bad test_episodes");

    Manifest m{root, {}};
    const sim::Policy expert = sim::expert_policy(track, config);
    for (int e = 0; e < options.episodes; ++e) {
        const int episode = options.first_episode + e;
        const Split split = e >= options.episodes - options.test_episodes ? Split::Test : Split::Train;
        const sim::VehicleState x0 = jittered_start(track, config, mix64(seed ^ mix64(episode)),
                                                    options.lateral_jitter, options.heading_jitter_deg);
        sim::RolloutOptions ro;
        ro.max_steps = options.steps;
        ro.off_track_margin = options.off_track_margin;
        ro.keep_observations = true;
        const sim::Trajectory traj = sim::rollout(expert, track, x0, config, ro);
        if (traj.termination == sim::Termination::OffTrack)
            throw std::runtime_error("record_expert_dataset: expert left the track in episode " +
                                     std::to_string(episode));
        for (const auto& rec : traj.records) {
            ManifestRow row;
            row.image_path = relative_image_path(split, Kind::None, image_name(episode, rec.t)).generic_string();
            row.action = rec.action;
            row.pair_id = pair_name(episode, rec.t);
            row.split = split;
            row.episode = episode;
            io::write_png(root / row.image_path, rec.observation);
            m.rows.push_back(std::move(row));
        }
    }
    return m;
}

std::uint64_t row_corruption_seed(std::uint64_t seed, Kind kind, std::uint64_t index) {
    return corrupt::stream_seed(mix64(seed ^ fnv1a(corrupt::kind_name(kind))), index);
}

namespace {

ManifestRow corrupt_row(const Manifest& src, const ManifestRow& clean, const corrupt::CorruptionSpec& base,
                        std::uint64_t seed, std::uint64_t index) {
    if (clean.kind != Kind::None) throw std::invalid_argument("corruption source rows must be clean");
    corrupt::CorruptionSpec spec = base;
    spec.seed = row_corruption_seed(seed, spec.kind(), index);
    const Image y = src.load_image(clean);
    const Image y_hat = corrupt::apply_corruption(y, spec);

    ManifestRow row = clean;
    row.kind = spec.kind();
    row.corruption_seed = spec.seed;
    row.image_path = relative_image_path(clean.split, row.kind, fs::path(clean.image_path).filename().string())
                         .generic_string();
    io::write_png(src.root / row.image_path, y_hat);
    return row;
}

void check_specs(const std::vector<corrupt::CorruptionSpec>& specs) {
    if (specs.empty()) throw std::invalid_argument("at least one corruption spec is required");
    std::set<Kind> seen;
    for (const auto& s : specs) {
        s.validate();
        if (s.kind() == Kind::None) throw std::invalid_argument("corruption spec of kind none");
        if (!seen.insert(s.kind()).second) throw std::invalid_argument("duplicate corruption kind");
    }
}

}  // namespace

Manifest make_paired_dataset(const Manifest& clean, const std::vector<corrupt::CorruptionSpec>& specs,
                             std::uint64_t seed) {
    check_specs(specs);
    Manifest out{clean.root, {}};
    out.rows.reserve(clean.rows.size() * specs.size());
    for (const auto& spec : specs)
        for (std::size_t i = 0; i < clean.rows.size(); ++i)
            out.rows.push_back(corrupt_row(clean, clean.rows[i], spec, seed, i));
    return out;
}

std::pair<Manifest, Manifest> make_unpaired_dataset(const Manifest& clean_a, const Manifest& clean_b,
                                                    const std::vector<corrupt::CorruptionSpec>& specs,
                                                    std::uint64_t seed) {
    check_specs(specs);
    const auto ea = clean_a.episodes();
    const auto eb = clean_b.episodes();
    std::vector<int> shared;
    std::set_intersection(ea.begin(), ea.end(), eb.begin(), eb.end(), std::back_inserter(shared));
    if (!shared.empty())
        throw std::invalid_argument("make_unpaired_dataset: source episodes overlap (episode " +
                                    std::to_string(shared.front()) + ")");
    Manifest corrupted{clean_b.root, {}};
    for (std::size_t i = 0; i < clean_b.rows.size(); ++i)
        corrupted.rows.push_back(corrupt_row(clean_b, clean_b.rows[i], specs[i % specs.size()], seed, i));
    return {clean_a, corrupted};
}

std::vector<std::pair<std::size_t, std::size_t>> join_pairs(const Manifest& clean, const Manifest& corrupted) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < clean.rows.size(); ++i) index.emplace(clean.rows[i].pair_id, i);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t j = 0; j < corrupted.rows.size(); ++j) {
        const auto it = index.find(corrupted.rows[j].pair_id);
        if (it != index.end()) out.emplace_back(it->second, j);
    }
    return out;
}

std::vector<Kind> ExperimentConfigSplit::train_corrupted_kinds() const {
    std::vector<Kind> out;
    for (Kind k : train_corruptions)
        if (k != Kind::None) out.push_back(k);
    return out;
}

bool ExperimentConfigSplit::is_test_kind(Kind kind) const {
    return std::find(test_corruptions.begin(), test_corruptions.end(), kind) != test_corruptions.end();
}

ExperimentConfigSplit configuration_split(std::string_view name) {
    if (name == "A")
        return {"A", {Kind::None, Kind::Darken, Kind::SaltPepper, Kind::Rain}, {Kind::Snow, Kind::Fog}};
    if (name == "B")
        return {"B", {Kind::None, Kind::Darken, Kind::SaltPepper, Kind::Fog}, {Kind::Rain, Kind::Snow}};
    throw std::invalid_argument("unknown configuration split: " + std::string(name));
}

}  // namespace repairlab::datagen
