#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "dept/data.hpp"

using namespace dept;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "dept_data_test";
    fs::create_directories(dir);
    return dir;
}

bool splits_equal(const Split& a, const Split& b) {
    return a.xs == b.xs && a.labels == b.labels;
}

} // namespace

TEST_CASE("synthetic generation is deterministic and prototype-structured") {
    SyntheticDatasetSpec spec;
    spec.seed = 123;
    auto a = generate_synthetic(spec);
    auto b = generate_synthetic(spec);
    REQUIRE(splits_equal(a.base_train, b.base_train));
    REQUIRE(splits_equal(a.base_test, b.base_test));
    REQUIRE(splits_equal(a.new_test, b.new_test));
    for (std::size_t c = 0; c < a.base_classes.size(); ++c)
        REQUIRE(a.base_classes[c].values == b.base_classes[c].values);

    REQUIRE(a.base_classes.size() == 5);
    REQUIRE(a.new_classes.size() == 5);
    REQUIRE(a.base_train.size() == 5 * 40);
    REQUIRE(a.base_test.size() == 5 * 40);
    REQUIRE(a.new_test.size() == 5 * 40);

    // base and new classes are disjoint by name
    for (const auto& bc : a.base_classes)
        for (const auto& nc : a.new_classes) REQUIRE(bc.name != nc.name);
}

TEST_CASE("zero noise collapses every example onto its class prototype") {
    SyntheticDatasetSpec spec;
    spec.noise_sigma = 0.0;
    spec.n_per_class = 3;
    auto ds = generate_synthetic(spec);
    for (std::size_t i = 0; i < ds.base_train.size(); ++i) {
        const auto& proto = ds.base_classes[std::size_t(ds.base_train.labels[i])].values;
        REQUIRE(ds.base_train.xs[i] == proto);
    }
    for (std::size_t i = 0; i < ds.new_test.size(); ++i) {
        const auto& proto = ds.new_classes[std::size_t(ds.new_test.labels[i])].values;
        REQUIRE(ds.new_test.xs[i] == proto);
    }
}

TEST_CASE("new-class prototypes differ only on shared channels") {
    SyntheticDatasetSpec spec;
    spec.seed = 5;
    auto ds = generate_synthetic(spec);
    std::set<int> shared(spec.shared_channels.begin(), spec.shared_channels.end());
    for (std::size_t a = 0; a < ds.new_classes.size(); ++a) {
        for (std::size_t b = a + 1; b < ds.new_classes.size(); ++b) {
            for (int r = 0; r < spec.d; ++r) {
                if (!shared.count(r)) {
                    REQUIRE(ds.new_classes[a].values[std::size_t(r)] ==
                            ds.new_classes[b].values[std::size_t(r)]);
                }
            }
        }
    }
    // base prototypes agree outside shared+base channels
    std::set<int> active = shared;
    active.insert(spec.base_channels.begin(), spec.base_channels.end());
    for (int r = 0; r < spec.d; ++r) {
        if (active.count(r)) continue;
        for (const auto& c : ds.base_classes)
            REQUIRE(c.values[std::size_t(r)] == ds.base_classes[0].values[std::size_t(r)]);
    }
}

TEST_CASE("invalid dataset specs are rejected") {
    SyntheticDatasetSpec spec;
    spec.base_channels = {0, 9}; // overlaps shared_channels
    REQUIRE_THROWS_AS(generate_synthetic(spec), InvalidSpecError);
    spec = {};
    spec.m_new = 1;
    REQUIRE_THROWS_AS(generate_synthetic(spec), InvalidSpecError);
    spec = {};
    spec.shared_channels = {40};
    REQUIRE_THROWS_AS(generate_synthetic(spec), InvalidSpecError);
}

TEST_CASE("few-shot sampling is seeded and exact") {
    SyntheticDatasetSpec spec;
    spec.n_per_class = 20;
    auto ds = generate_synthetic(spec);

    auto s16 = few_shot_sample(ds, 16, 7);
    REQUIRE(s16.size() == 5 * 16);
    for (std::size_t c = 0; c < 5; ++c) {
        int count = 0;
        for (int y : s16.labels) count += (y == int(c));
        REQUIRE(count == 16);
    }
    auto again = few_shot_sample(ds, 16, 7);
    REQUIRE(splits_equal(s16, again));

    // shots = full class size returns every example of the class
    auto all = few_shot_sample(ds, 20, 3);
    REQUIRE(all.size() == ds.base_train.size());
    auto sorted_xs = [](Split s) {
        std::sort(s.xs.begin(), s.xs.end());
        return s.xs;
    };
    REQUIRE(sorted_xs(all) == sorted_xs(ds.base_train));

    REQUIRE_THROWS_AS(few_shot_sample(ds, 21, 3), InsufficientDataError);
}

TEST_CASE("base/new class splitting") {
    std::vector<ClassToken> classes;
    for (int i = 0; i < 10; ++i) classes.push_back({"c" + std::to_string(i), {double(i)}});

    auto [base, neu] = split_base_new(classes, 11);
    REQUIRE(base.size() == 5);
    REQUIRE(neu.size() == 5);
    std::set<std::string> seen;
    for (const auto& c : base) seen.insert(c.name);
    for (const auto& c : neu) REQUIRE_FALSE(seen.count(c.name));

    auto [base2, neu2] = split_base_new(classes, 11);
    for (std::size_t i = 0; i < base.size(); ++i) REQUIRE(base[i].name == base2[i].name);

    classes.push_back({"c10", {10.0}});
    auto [b11, n11] = split_base_new(classes, 2);
    REQUIRE(b11.size() == 6); // odd count: extra class goes to base
    REQUIRE(n11.size() == 5);

    std::vector<ClassToken> three(classes.begin(), classes.begin() + 3);
    REQUIRE_THROWS_AS(split_base_new(three, 1), InvalidInputError);
}

TEST_CASE("feature cache round-trips bit-exactly") {
    Rng rng = make_rng(17, "cache");
    const auto path = temp_dir() / "cache.bin";
    std::uniform_int_distribution<int> n_dist(0, 12), d_dist(1, 9), m_dist(1, 6);
    for (int it = 0; it < 100; ++it) {
        FeatureCache cache;
        const int n = n_dist(rng), d = d_dist(rng), m = m_dist(rng);
        cache.image_feats = gaussian_matrix(rng, std::size_t(n), std::size_t(d), 3.0);
        cache.text_feats = gaussian_matrix(rng, std::size_t(m), std::size_t(d), 3.0);
        std::uniform_int_distribution<std::uint32_t> label(0, std::uint32_t(m - 1));
        for (int j = 0; j < n; ++j) cache.labels.push_back(label(rng));

        write_cache(cache, path);
        auto loaded = read_cache(path);
        REQUIRE(loaded.labels == cache.labels);
        REQUIRE(loaded.image_feats.a == cache.image_feats.a);
        REQUIRE(loaded.text_feats.a == cache.text_feats.a);
        REQUIRE(loaded.d() == cache.d());
    }
}

TEST_CASE("empty cache is valid") {
    const auto path = temp_dir() / "empty.bin";
    FeatureCache cache;
    cache.image_feats = Mat(0, 4);
    cache.text_feats = Mat(2, 4);
    Rng rng = make_rng(1, "e");
    cache.text_feats = gaussian_matrix(rng, 2, 4, 1.0);
    write_cache(cache, path);
    auto loaded = read_cache(path);
    REQUIRE(loaded.n() == 0);
    REQUIRE(loaded.m() == 2);
}

TEST_CASE("corrupt caches raise named errors without partial results") {
    Rng rng = make_rng(19, "corrupt");
    const auto dir = temp_dir();
    FeatureCache cache;
    cache.image_feats = gaussian_matrix(rng, 4, 3, 1.0);
    cache.text_feats = gaussian_matrix(rng, 2, 3, 1.0);
    cache.labels = {0, 1, 0, 1};
    const auto good = dir / "good.bin";
    write_cache(cache, good);

    auto mutate = [&](const char* name, auto&& fn) {
        std::ifstream in(good, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        fn(bytes);
        const auto path = dir / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), std::streamsize(bytes.size()));
        return path;
    };

    auto truncated = mutate("trunc.bin", [](std::string& b) { b.resize(b.size() - 9); });
    REQUIRE_THROWS_AS(read_cache(truncated), CorruptCacheError);
    REQUIRE_THROWS_WITH(read_cache(truncated), Catch::Matchers::ContainsSubstring("text_features"));

    auto bad_magic = mutate("magic.bin", [](std::string& b) { b[2] = 'X'; });
    REQUIRE_THROWS_WITH(read_cache(bad_magic), Catch::Matchers::ContainsSubstring("magic"));

    auto short_header = mutate("hdr.bin", [](std::string& b) { b.resize(10); });
    REQUIRE_THROWS_WITH(read_cache(short_header), Catch::Matchers::ContainsSubstring("header"));

    auto trailing = mutate("trail.bin", [](std::string& b) { b.push_back('z'); });
    REQUIRE_THROWS_WITH(read_cache(trailing), Catch::Matchers::ContainsSubstring("trailing"));

    auto bad_label = mutate("label.bin", [](std::string& b) {
        b[20] = 9; // first label, well past class count
    });
    REQUIRE_THROWS_WITH(read_cache(bad_label), Catch::Matchers::ContainsSubstring("labels"));

    REQUIRE_THROWS_AS(read_cache(dir / "does_not_exist.bin"), CorruptCacheError);
}

TEST_CASE("write_cache validates consistency") {
    FeatureCache cache;
    Rng rng = make_rng(23, "w");
    cache.image_feats = gaussian_matrix(rng, 2, 3, 1.0);
    cache.text_feats = gaussian_matrix(rng, 2, 4, 1.0); // width mismatch
    cache.labels = {0, 1};
    REQUIRE_THROWS_AS(write_cache(cache, temp_dir() / "x.bin"), InvalidInputError);
    cache.text_feats = gaussian_matrix(rng, 2, 3, 1.0);
    cache.labels = {0, 7};
    REQUIRE_THROWS_AS(write_cache(cache, temp_dir() / "x.bin"), InvalidInputError);
}

TEST_CASE("split files round-trip") {
    SyntheticDatasetSpec spec;
    spec.n_per_class = 4;
    auto ds = generate_synthetic(spec);
    const auto path = temp_dir() / "split.bin";
    write_split(ds.base_train, std::size_t(spec.d), path);
    auto loaded = read_split(path, std::size_t(spec.d));
    REQUIRE(splits_equal(loaded, ds.base_train));
    REQUIRE_THROWS_AS(read_split(path, 16), CorruptCacheError);
}
