#include <gtest/gtest.h>

#include <map>
#include <set>

#include "repairlab/datagen/datagen.hpp"
#include "repairlab/io.hpp"
#include "test_helpers.hpp"

using namespace repairlab;
using namespace repairlab::datagen;
using corrupt::Kind;

namespace {

struct Recording {
    sim::Track track = sim::build_track(sim::default_track_spec());
    sim::SimConfig config = fixtures::small_camera();
};

std::vector<corrupt::CorruptionSpec> train_specs(const ExperimentConfigSplit& split, int h, int w) {
    std::vector<corrupt::CorruptionSpec> out;
    for (Kind k : split.train_corrupted_kinds()) out.push_back(corrupt::default_spec(k, 0, h, w));
    return out;
}

}  // namespace

TEST(RecordExpert, RowCountBoundsAndIntegrity) {
    Recording rec;
    fixtures::TempDir dir("datagen_count");
    RecordOptions opt;
    opt.episodes = 1;
    opt.steps = 100;
    const Manifest m = record_expert_dataset(rec.track, rec.config, opt, 5, dir.path());
    ASSERT_EQ(m.size(), 100u);
    for (const auto& r : m.rows) {
        EXPECT_EQ(r.kind, Kind::None);
        EXPECT_GE(r.action.steering, -1.0);
        EXPECT_LE(r.action.steering, 1.0);
        EXPECT_GE(r.action.throttle, 0.0);
        EXPECT_LE(r.action.throttle, 1.0);
        EXPECT_EQ(r.image_path.rfind("images/train/none/", 0), 0u) << r.image_path;
    }
    EXPECT_NO_THROW(check_images_exist(m));
    const Image first = m.load_image(m.rows.front());
    EXPECT_EQ(first.height(), 32);
    EXPECT_EQ(first.width(), 48);
}

TEST(RecordExpert, SameSeedSameHashAndRoundTrip) {
    Recording rec;
    fixtures::TempDir a("datagen_det_a");
    fixtures::TempDir b("datagen_det_b");
    RecordOptions opt;
    opt.episodes = 2;
    opt.steps = 30;
    opt.test_episodes = 1;
    const Manifest ma = record_expert_dataset(rec.track, rec.config, opt, 77, a.path());
    const Manifest mb = record_expert_dataset(rec.track, rec.config, opt, 77, b.path());
    EXPECT_EQ(ma.hash(), mb.hash());
    for (const auto& r : ma.rows)
        EXPECT_EQ(io::sha256_file(a.path() / r.image_path), io::sha256_file(b.path() / r.image_path));
    EXPECT_EQ(ma.select(Split::Test).size(), 30u);

    const Manifest mc = record_expert_dataset(rec.track, rec.config, opt, 78, b.path());
    EXPECT_NE(ma.hash(), mc.hash());

    save_manifest(ma, a.path() / "clean.csv");
    const Manifest loaded = load_manifest(a.path() / "clean.csv");
    EXPECT_EQ(loaded.rows, ma.rows);
    EXPECT_EQ(loaded.root, a.path());
}

TEST(RecordExpert, RejectsZeroEpisodes) {
    Recording rec;
    RecordOptions opt;
    opt.episodes = 0;
    EXPECT_THROW(record_expert_dataset(rec.track, rec.config, opt, 0, "/tmp/unused"), std::invalid_argument);
}

TEST(PairedDataset, CountsLabelsAndRecomputation) {
    Recording rec;
    fixtures::TempDir dir("datagen_paired");
    RecordOptions opt;
    opt.episodes = 1;
    opt.steps = 12;
    const Manifest clean = record_expert_dataset(rec.track, rec.config, opt, 3, dir.path());
    const auto split = configuration_split("A");
    const auto specs = train_specs(split, 32, 48);
    const Manifest corrupted = make_paired_dataset(clean, specs, 9);
    ASSERT_EQ(corrupted.size(), 3 * clean.size());
    EXPECT_NO_THROW(check_images_exist(corrupted));

    const auto pairs = join_pairs(clean, corrupted);
    ASSERT_EQ(pairs.size(), corrupted.size());
    std::map<std::string, std::set<Kind>> kinds_per_pair;
    for (const auto& [ci, cj] : pairs) {
        const ManifestRow& y = clean.rows[ci];
        const ManifestRow& y_hat = corrupted.rows[cj];
        EXPECT_EQ(y.action, y_hat.action);
        EXPECT_TRUE(kinds_per_pair[y.pair_id].insert(y_hat.kind).second) << "duplicate pair";
    }
    for (const auto& [id, kinds] : kinds_per_pair) EXPECT_EQ(kinds.size(), 3u) << id;

    // Recomputation oracle: corrupt the stored clean PNG again and compare 8-bit outputs.
    for (std::size_t k = 0; k < pairs.size(); k += 5) {
        const auto [ci, cj] = pairs[k];
        const ManifestRow& row = corrupted.rows[cj];
        corrupt::CorruptionSpec spec = *std::find_if(specs.begin(), specs.end(),
                                                     [&](const auto& s) { return s.kind() == row.kind; });
        spec.seed = row.corruption_seed;
        Image expected = corrupt::apply_corruption(clean.load_image(clean.rows[ci]), spec);
        quantize_8bit(expected);
        EXPECT_EQ(corrupted.load_image(row), expected) << row.image_path;
    }
}

TEST(UnpairedDataset, DisjointEpisodesAndCounts) {
    Recording rec;
    fixtures::TempDir dir("datagen_unpaired");
    RecordOptions opt;
    opt.episodes = 1;
    opt.steps = 10;
    const Manifest a = record_expert_dataset(rec.track, rec.config, opt, 1, dir.path());
    opt.first_episode = 1;
    opt.steps = 12;
    const Manifest b = record_expert_dataset(rec.track, rec.config, opt, 1, dir.path());
    const auto specs = train_specs(configuration_split("B"), 32, 48);

    const auto [clean_set, corrupted_set] = make_unpaired_dataset(a, b, specs, 4);
    EXPECT_EQ(clean_set.size(), 10u);
    EXPECT_EQ(corrupted_set.size(), 12u);
    EXPECT_TRUE(join_pairs(clean_set, corrupted_set).empty());
    std::map<Kind, int> counts;
    for (const auto& r : corrupted_set.rows) ++counts[r.kind];
    for (const auto& s : specs) EXPECT_EQ(counts[s.kind()], 4);

    EXPECT_THROW(make_unpaired_dataset(a, a, specs, 4), std::invalid_argument);
}

TEST(ConfigurationSplit, PaperPartitions) {
    const auto a = configuration_split("A");
    EXPECT_EQ(a.train_corruptions, (std::vector<Kind>{Kind::None, Kind::Darken, Kind::SaltPepper, Kind::Rain}));
    EXPECT_EQ(a.test_corruptions, (std::vector<Kind>{Kind::Snow, Kind::Fog}));
    const auto b = configuration_split("B");
    EXPECT_EQ(b.train_corruptions, (std::vector<Kind>{Kind::None, Kind::Darken, Kind::SaltPepper, Kind::Fog}));
    EXPECT_EQ(b.test_corruptions, (std::vector<Kind>{Kind::Rain, Kind::Snow}));
    EXPECT_THROW(configuration_split("C"), std::invalid_argument);
}

TEST(ConfigurationSplit, DisjointAndCovering) {
    for (const char* name : {"A", "B"}) {
        const auto s = configuration_split(name);
        std::set<Kind> train(s.train_corruptions.begin(), s.train_corruptions.end());
        std::set<Kind> all = train;
        for (Kind k : s.test_corruptions) {
            EXPECT_FALSE(train.count(k)) << name;
            all.insert(k);
        }
        EXPECT_TRUE(train.count(Kind::None));
        EXPECT_EQ(all.size(), 6u);
    }
}
