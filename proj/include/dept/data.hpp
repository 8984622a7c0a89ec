#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "dept/error.hpp"
#include "dept/linalg.hpp"
#include "dept/rng.hpp"
#include "dept/types.hpp"

namespace dept {

static_assert(std::endian::native == std::endian::little,
              "binary file formats are little-endian");

struct SyntheticDatasetSpec {
    int d = 32;
    int m_base = 5;
    int m_new = 5;
    int n_per_class = 40;
    std::vector<int> shared_channels = {0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<int> base_channels = {8, 9, 10, 11, 12, 13, 14, 15};
    double noise_sigma = 0.3;
    std::uint64_t seed = 1;

    void validate() const {
        if (d <= 0 || n_per_class <= 0) throw InvalidSpecError("dataset spec: dimensions must be positive");
        if (m_base < 2 || m_new < 2) throw InvalidSpecError("dataset spec: need at least 2 base and 2 new classes");
        if (noise_sigma < 0.0) throw InvalidSpecError("dataset spec: noise_sigma must be >= 0");
        std::set<int> shared(shared_channels.begin(), shared_channels.end());
        for (int c : base_channels)
            if (shared.count(c)) throw InvalidSpecError("dataset spec: shared and base channel sets overlap");
        for (int c : shared_channels)
            if (c < 0 || c >= d) throw InvalidSpecError("dataset spec: shared channel out of range");
        for (int c : base_channels)
            if (c < 0 || c >= d) throw InvalidSpecError("dataset spec: base channel out of range");
    }
};

// Struct-of-arrays example collection; labels index into the owning task's
// class list.
struct Split {
    std::vector<Vec> xs;
    std::vector<int> labels;

    std::size_t size() const { return xs.size(); }
    bool empty() const { return xs.empty(); }
};

struct TaskDataset {
    Split base_train;
    Split base_test;
    Split new_test;
    std::vector<ClassToken> base_classes;
    std::vector<ClassToken> new_classes;
};

// Class prototypes share one background vector and differ on their task's
// discriminative channels: base classes on shared+base channels, new classes
// on shared channels only. Class tokens reuse the prototype as the class's
// semantic vector, the stand-in for a class name whose meaning correlates
// with what images of that class look like; that correlation is what makes
// zero-shot transfer from base to new classes possible at all here.
inline TaskDataset generate_synthetic(const SyntheticDatasetSpec& spec) {
    spec.validate();
    const auto d = static_cast<std::size_t>(spec.d);

    Rng proto_rng = make_rng(spec.seed, "prototypes");
    const Vec background = gaussian_vector(proto_rng, d, 1.0);

    auto make_classes = [&](int count, const std::vector<int>& channels, const char* prefix) {
        std::vector<ClassToken> classes;
        std::normal_distribution<double> offset(0.0, 1.0);
        for (int c = 0; c < count; ++c) {
            Vec proto = background;
            for (int r : channels) proto[static_cast<std::size_t>(r)] += offset(proto_rng);
            classes.push_back({std::string(prefix) + std::to_string(c), std::move(proto)});
        }
        return classes;
    };

    std::vector<int> base_active = spec.shared_channels;
    base_active.insert(base_active.end(), spec.base_channels.begin(), spec.base_channels.end());

    TaskDataset ds;
    ds.base_classes = make_classes(spec.m_base, base_active, "base");
    ds.new_classes = make_classes(spec.m_new, spec.shared_channels, "new");

    auto sample_split = [&](const std::vector<ClassToken>& classes, const char* tag) {
        Rng rng = make_rng(spec.seed, tag);
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        Split split;
        for (std::size_t c = 0; c < classes.size(); ++c) {
            for (int n = 0; n < spec.n_per_class; ++n) {
                Vec x = classes[c].values;
                if (spec.noise_sigma > 0.0)
                    for (auto& v : x) v += noise(rng);
                split.xs.push_back(std::move(x));
                split.labels.push_back(static_cast<int>(c));
            }
        }
        return split;
    };

    ds.base_train = sample_split(ds.base_classes, "base-train");
    ds.base_test = sample_split(ds.base_classes, "base-test");
    ds.new_test = sample_split(ds.new_classes, "new-test");
    return ds;
}

// Seeded sampling without replacement of `shots` examples per class.
inline Split few_shot_from_split(const Split& split, std::size_t n_classes, int shots,
                                 std::uint64_t seed) {
    if (shots < 1) throw InvalidInputError("few_shot_sample: shots must be >= 1");
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < split.size(); ++i)
        by_class[static_cast<std::size_t>(split.labels[i])].push_back(i);

    Rng rng = make_rng(seed, "few-shot");
    Split out;
    for (std::size_t c = 0; c < n_classes; ++c) {
        auto& idx = by_class[c];
        if (idx.size() < static_cast<std::size_t>(shots))
            throw InsufficientDataError("few_shot_sample: class " + std::to_string(c) + " has " +
                                        std::to_string(idx.size()) + " examples, need " +
                                        std::to_string(shots));
        std::shuffle(idx.begin(), idx.end(), rng);
        for (int k = 0; k < shots; ++k) {
            out.xs.push_back(split.xs[idx[static_cast<std::size_t>(k)]]);
            out.labels.push_back(static_cast<int>(c));
        }
    }
    return out;
}

inline Split few_shot_sample(const TaskDataset& dataset, int shots, std::uint64_t seed) {
    return few_shot_from_split(dataset.base_train, dataset.base_classes.size(), shots, seed);
}

// Seeded shuffle, first half base (extra class goes to base when odd).
inline std::pair<std::vector<ClassToken>, std::vector<ClassToken>>
split_base_new(const std::vector<ClassToken>& classes, std::uint64_t seed) {
    if (classes.size() < 4) throw InvalidInputError("split_base_new: need at least 4 classes");
    std::vector<std::size_t> order(classes.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, "base-new-split");
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_base = (classes.size() + 1) / 2;
    std::vector<ClassToken> base, neu;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_base ? base : neu).push_back(classes[order[i]]);
    return {std::move(base), std::move(neu)};
}

// ---------------------------------------------------------------------------
// Binary feature cache: lets channel-importance tooling run on externally
// produced features. Layout (all little-endian):
//   magic "DEPTFC1\0" | u32 N, d, M | u32 labels[N] | f64 image[N*d] | f64 text[M*d]
// ---------------------------------------------------------------------------

inline constexpr char kCacheMagic[8] = {'D', 'E', 'P', 'T', 'F', 'C', '1', '\0'};

struct FeatureCache {
    std::vector<std::uint32_t> labels;
    Mat image_feats; // N x d
    Mat text_feats;  // M x d

    std::uint32_t n() const { return static_cast<std::uint32_t>(image_feats.rows); }
    std::uint32_t d() const { return static_cast<std::uint32_t>(image_feats.cols); }
    std::uint32_t m() const { return static_cast<std::uint32_t>(text_feats.rows); }
};

namespace detail {

inline void write_bytes(std::ofstream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::ifstream& is, void* p, std::size_t n, const char* field) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw CorruptCacheError(std::string("feature cache truncated while reading ") + field);
}

} // namespace detail

inline void write_cache(const FeatureCache& cache, const std::filesystem::path& path) {
    if (cache.labels.size() != cache.image_feats.rows)
        throw InvalidInputError("write_cache: label count does not match image feature rows");
    if (cache.image_feats.cols != cache.text_feats.cols)
        throw InvalidInputError("write_cache: image/text feature width mismatch");
    for (std::uint32_t y : cache.labels)
        if (y >= cache.m()) throw InvalidInputError("write_cache: label exceeds class count");

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("write_cache: cannot open " + tmp.string());
        detail::write_bytes(os, kCacheMagic, sizeof(kCacheMagic));
        const std::uint32_t header[3] = {cache.n(), cache.d(), cache.m()};
        detail::write_bytes(os, header, sizeof(header));
        detail::write_bytes(os, cache.labels.data(), cache.labels.size() * sizeof(std::uint32_t));
        detail::write_bytes(os, cache.image_feats.a.data(), cache.image_feats.a.size() * sizeof(double));
        detail::write_bytes(os, cache.text_feats.a.data(), cache.text_feats.a.size() * sizeof(double));
        if (!os) throw IoError("write_cache: failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline FeatureCache read_cache(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CorruptCacheError("read_cache: cannot open " + path.string());
    char magic[8];
    detail::read_bytes(is, magic, sizeof(magic), "magic");
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCacheMagic)))
        throw CorruptCacheError("feature cache has bad magic");
    std::uint32_t header[3];
    detail::read_bytes(is, header, sizeof(header), "header");
    const std::uint32_t n = header[0], d = header[1], m = header[2];

    FeatureCache cache;
    cache.labels.resize(n);
    detail::read_bytes(is, cache.labels.data(), std::size_t(n) * sizeof(std::uint32_t), "labels");
    cache.image_feats = Mat(n, d);
    detail::read_bytes(is, cache.image_feats.a.data(), std::size_t(n) * d * sizeof(double),
                       "image_features");
    cache.text_feats = Mat(m, d);
    detail::read_bytes(is, cache.text_feats.a.data(), std::size_t(m) * d * sizeof(double),
                       "text_features");
    char extra;
    is.read(&extra, 1);
    if (is.gcount() != 0) throw CorruptCacheError("feature cache has trailing data");
    for (std::uint32_t y : cache.labels)
        if (y >= m) throw CorruptCacheError("feature cache labels exceed class count");
    return cache;
}

// ---------------------------------------------------------------------------
// Split files written by the generate command:
//   magic "DEPTSP1\0" | u32 n, d | u32 labels[n] | f64 xs[n*d]
// ---------------------------------------------------------------------------

inline constexpr char kSplitMagic[8] = {'D', 'E', 'P', 'T', 'S', 'P', '1', '\0'};

inline void write_split(const Split& split, std::size_t d, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("write_split: cannot open " + tmp.string());
        detail::write_bytes(os, kSplitMagic, sizeof(kSplitMagic));
        const std::uint32_t header[2] = {static_cast<std::uint32_t>(split.size()),
                                         static_cast<std::uint32_t>(d)};
        detail::write_bytes(os, header, sizeof(header));
        for (int y : split.labels) {
            const auto u = static_cast<std::uint32_t>(y);
            detail::write_bytes(os, &u, sizeof(u));
        }
        for (const auto& x : split.xs) {
            if (x.size() != d) throw InvalidInputError("write_split: inconsistent example width");
            detail::write_bytes(os, x.data(), d * sizeof(double));
        }
        if (!os) throw IoError("write_split: failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Split read_split(const std::filesystem::path& path, std::size_t expected_d) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_split: cannot open " + path.string());
    char magic[8];
    detail::read_bytes(is, magic, sizeof(magic), "magic");
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kSplitMagic)))
        throw CorruptCacheError("split file has bad magic: " + path.string());
    std::uint32_t header[2];
    detail::read_bytes(is, header, sizeof(header), "header");
    const std::uint32_t n = header[0], d = header[1];
    if (d != expected_d)
        throw CorruptCacheError("split file dimension mismatch in " + path.string());
    Split split;
    split.labels.resize(n);
    for (auto& y : split.labels) {
        std::uint32_t u;
        detail::read_bytes(is, &u, sizeof(u), "labels");
        y = static_cast<int>(u);
    }
    split.xs.assign(n, Vec(d));
    for (auto& x : split.xs) detail::read_bytes(is, x.data(), d * sizeof(double), "examples");
    return split;
}

} // namespace dept
