#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "dept/error.hpp"
#include "dept/linalg.hpp"
#include "dept/types.hpp"

namespace dept {

// Guard added to the class-mean denominator; all-negative channel products
// still make the ReLU mean exactly zero.
inline constexpr double kCiEpsilon = 1e-12;

// Per-channel discriminability of one task under one model. skipped[r]
// counts examples excluded at channel r because their class-mean ReLU
// denominator was exactly zero; those examples do not enter the average.
struct ChannelImportanceProfile {
    Vec ci;
    std::vector<int> skipped;
    std::string task_id;
    std::string model_id;
    int n_examples = 0;
    int n_classes = 0;

    std::size_t dim() const { return ci.size(); }
};

namespace detail {

inline Vec l2_normalized(const Vec& v, const char* what) {
    const double n = nrm2(v);
    if (n == 0.0) throw DegenerateFeatureError(std::string(what) + ": zero-norm feature");
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

} // namespace detail

inline ChannelImportanceProfile channel_importance(const std::vector<FeatureVector>& image_feats,
                                                   const std::vector<int>& labels,
                                                   const std::vector<FeatureVector>& class_text_feats,
                                                   std::string task_id = {},
                                                   std::string model_id = {}) {
    const std::size_t N = image_feats.size();
    const std::size_t M = class_text_feats.size();
    if (N < 1) throw InvalidInputError("channel_importance: need at least one example");
    if (M < 2) throw InvalidInputError("channel_importance: need at least two classes");
    if (labels.size() != N) throw InvalidInputError("channel_importance: label count mismatch");
    const std::size_t d = class_text_feats[0].size();

    std::vector<Vec> e_bar;
    e_bar.reserve(M);
    for (const auto& e : class_text_feats) {
        if (e.size() != d) throw InvalidInputError("channel_importance: class feature dim mismatch");
        e_bar.push_back(detail::l2_normalized(e, "channel_importance"));
    }

    ChannelImportanceProfile prof;
    prof.ci.assign(d, 0.0);
    prof.skipped.assign(d, 0);
    prof.task_id = std::move(task_id);
    prof.model_id = std::move(model_id);
    prof.n_examples = static_cast<int>(N);
    prof.n_classes = static_cast<int>(M);

    std::vector<int> contributing(d, 0);
    for (std::size_t j = 0; j < N; ++j) {
        if (image_feats[j].size() != d)
            throw InvalidInputError("channel_importance: image feature dim mismatch");
        const int y = labels[j];
        if (y < 0 || static_cast<std::size_t>(y) >= M)
            throw InvalidInputError("channel_importance: label out of range");
        const Vec f_bar = detail::l2_normalized(image_feats[j], "channel_importance");
        for (std::size_t r = 0; r < d; ++r) {
            double mean_relu = 0.0;
            for (std::size_t i = 0; i < M; ++i)
                mean_relu += std::max(0.0, e_bar[i][r] * f_bar[r]);
            mean_relu /= double(M);
            if (mean_relu == 0.0) {
                prof.skipped[r] += 1;
                continue;
            }
            const double num = std::max(0.0, e_bar[static_cast<std::size_t>(y)][r] * f_bar[r]);
            prof.ci[r] += num / (mean_relu + kCiEpsilon);
            contributing[r] += 1;
        }
    }
    for (std::size_t r = 0; r < d; ++r)
        if (contributing[r] > 0) prof.ci[r] /= double(contributing[r]);
    return prof;
}

struct Histogram {
    Vec edges;               // bins+1 edges; the final count bucket is overflow
    std::vector<int> counts; // bins + 1 entries, last one for values > edges.back()
};

// CI-Base : CI-New comparison. Channels where both profiles fall below the
// epsilon guard are undefined and excluded from the histogram, the
// frac_above statistic and the median.
struct CiComparison {
    Vec ratio;                 // length d; undefined channels hold NaN
    std::vector<char> defined; // length d
    Histogram histogram;
    double frac_above = 0.0;
    double threshold = 1.0;

    std::size_t defined_count() const {
        std::size_t n = 0;
        for (char c : defined) n += c != 0;
        return n;
    }

    std::vector<double> defined_ratios() const {
        std::vector<double> out;
        for (std::size_t r = 0; r < ratio.size(); ++r)
            if (defined[r]) out.push_back(ratio[r]);
        return out;
    }

    double median_ratio() const {
        auto v = defined_ratios();
        if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
};

inline CiComparison ci_ratio_analysis(const ChannelImportanceProfile& base,
                                      const ChannelImportanceProfile& neu, int bins,
                                      double threshold) {
    if (base.dim() != neu.dim())
        throw InvalidInputError("ci_ratio_analysis: dimension mismatch");
    if (bins <= 0) throw InvalidInputError("ci_ratio_analysis: bins must be positive");
    if (!(threshold > 0.0)) throw InvalidInputError("ci_ratio_analysis: threshold must be > 0");

    const std::size_t d = base.dim();
    CiComparison cmp;
    cmp.threshold = threshold;
    cmp.ratio.assign(d, std::numeric_limits<double>::quiet_NaN());
    cmp.defined.assign(d, 0);

    // Histogram covers [0, 5] with an overflow bucket above, matching the
    // visual range the ratio distributions are plotted over.
    const double hi = 5.0;
    cmp.histogram.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b)
        cmp.histogram.edges[static_cast<std::size_t>(b)] = hi * double(b) / double(bins);
    cmp.histogram.counts.assign(static_cast<std::size_t>(bins) + 1, 0);

    std::size_t n_defined = 0, n_above = 0;
    for (std::size_t r = 0; r < d; ++r) {
        if (base.ci[r] < kCiEpsilon && neu.ci[r] < kCiEpsilon) continue;
        const double ratio = base.ci[r] / (neu.ci[r] + kCiEpsilon);
        cmp.ratio[r] = ratio;
        cmp.defined[r] = 1;
        ++n_defined;
        if (ratio > threshold) ++n_above;
        if (ratio > hi) {
            cmp.histogram.counts.back() += 1;
        } else {
            auto b = static_cast<std::size_t>(std::min<double>(
                double(bins) - 1.0, std::floor(ratio / hi * double(bins))));
            cmp.histogram.counts[b] += 1;
        }
    }
    cmp.frac_above = n_defined == 0 ? 0.0 : double(n_above) / double(n_defined);
    return cmp;
}

struct CiScatterRow {
    int rank = 0;    // 0-based position after reordering
    int channel = 0; // original channel index
    double ci_base = 0.0;
    double ci_new = 0.0;
};

// Channels sorted by descending base-task CI; ties keep the lower original
// channel index first.
inline std::vector<CiScatterRow> ci_reordered_scatter(const ChannelImportanceProfile& base,
                                                      const ChannelImportanceProfile& neu) {
    if (base.dim() != neu.dim())
        throw InvalidInputError("ci_reordered_scatter: dimension mismatch");
    std::vector<int> order(base.dim());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return base.ci[static_cast<std::size_t>(a)] > base.ci[static_cast<std::size_t>(b)];
    });
    std::vector<CiScatterRow> rows(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto c = static_cast<std::size_t>(order[k]);
        rows[k] = {static_cast<int>(k), order[k], base.ci[c], neu.ci[c]};
    }
    return rows;
}

} // namespace dept
