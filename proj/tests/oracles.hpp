// Scalar reference implementations used as independent oracles. Everything
// here is written with explicit loops over channels, classes and examples,
// and deliberately shares no code with the library implementations it
// checks.
#pragma once

#include <cmath>
#include <vector>

namespace oracle {

using dvec = std::vector<double>;
using dmat = std::vector<std::vector<double>>;

inline double cosine(const dvec& a, const dvec& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

inline dvec softmax(const dvec& logits) {
    dvec p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i]);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

inline dvec itm_probabilities(const dvec& image, const dmat& class_feats, double temperature) {
    dvec logits(class_feats.size());
    for (std::size_t i = 0; i < class_feats.size(); ++i)
        logits[i] = cosine(class_feats[i], image) / temperature;
    return softmax(logits);
}

inline double cross_entropy(const dvec& probs, std::size_t label) {
    double p = probs[label];
    if (p < 1e-12) p = 1e-12;
    return -std::log(p);
}

inline dvec cwt(const dvec& f, const dvec& gamma, const dvec& beta) {
    dvec out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = gamma[i] * f[i] + beta[i];
    return out;
}

inline dvec cat_probabilities(const dvec& s, const dmat& W) {
    dvec logits(W.size(), 0.0);
    for (std::size_t i = 0; i < W.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) logits[i] += W[i][j] * s[j];
    return softmax(logits);
}

inline double cat_loss(const dmat& features, const std::vector<int>& labels, const dmat& W) {
    double loss = 0.0;
    for (std::size_t j = 0; j < features.size(); ++j)
        loss += cross_entropy(cat_probabilities(features[j], W),
                              static_cast<std::size_t>(labels[j]));
    return loss / double(features.size());
}

inline dvec fused(const dvec& p_cat, const dvec& p_itm, double lambda) {
    dvec out(p_cat.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = lambda * p_cat[i] + (1.0 - lambda) * p_itm[i];
    return out;
}

// Triple loop over channels x examples x classes, with full-vector L2
// normalization and per-channel skipping of zero-denominator examples.
struct CiResult {
    dvec ci;
    std::vector<int> skipped;
};

inline CiResult channel_importance(const dmat& image_feats, const std::vector<int>& labels,
                                   const dmat& class_feats, double eps = 1e-12) {
    const std::size_t n = image_feats.size();
    const std::size_t m = class_feats.size();
    const std::size_t d = class_feats[0].size();

    auto normalized = [](const dvec& v) {
        double nn = 0.0;
        for (double x : v) nn += x * x;
        nn = std::sqrt(nn);
        dvec out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / nn;
        return out;
    };

    dmat e_bar(m), f_bar(n);
    for (std::size_t i = 0; i < m; ++i) e_bar[i] = normalized(class_feats[i]);
    for (std::size_t j = 0; j < n; ++j) f_bar[j] = normalized(image_feats[j]);

    CiResult res;
    res.ci.assign(d, 0.0);
    res.skipped.assign(d, 0);
    for (std::size_t r = 0; r < d; ++r) {
        double sum = 0.0;
        int used = 0;
        for (std::size_t j = 0; j < n; ++j) {
            double denom = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double prod = e_bar[i][r] * f_bar[j][r];
                if (prod > 0.0) denom += prod;
            }
            denom /= double(m);
            if (denom == 0.0) {
                res.skipped[r] += 1;
                continue;
            }
            const double prod = e_bar[static_cast<std::size_t>(labels[j])][r] * f_bar[j][r];
            const double num = prod > 0.0 ? prod : 0.0;
            sum += num / (denom + eps);
            ++used;
        }
        res.ci[r] = used > 0 ? sum / double(used) : 0.0;
    }
    return res;
}

inline double harmonic(double b, double n) {
    if (b <= 0.0 || n <= 0.0) return 0.0;
    return 2.0 * b * n / (b + n);
}

} // namespace oracle
