#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dept/error.hpp"
#include "dept/linalg.hpp"
#include "dept/types.hpp"

namespace dept {

// Probabilities below this are clamped before log in every cross-entropy.
inline constexpr double kLogClamp = 1e-12;

enum class HeadVariant {
    full,           // two independent cwT layers + linear classifier
    shared_cwt,     // one cwT layer shared by both modalities
    itm_classifier, // cwT layers + cosine/temperature classifier instead of W
    image_only,     // image branch only; no gradient reaches the prompt
};

inline std::string to_string(HeadVariant v) {
    switch (v) {
        case HeadVariant::full: return "full";
        case HeadVariant::shared_cwt: return "shared_cwt";
        case HeadVariant::itm_classifier: return "itm_classifier";
        case HeadVariant::image_only: return "image_only";
    }
    throw InvalidInputError("unknown head variant");
}

inline HeadVariant parse_head_variant(const std::string& s) {
    if (s == "full") return HeadVariant::full;
    if (s == "shared_cwt") return HeadVariant::shared_cwt;
    if (s == "itm_classifier") return HeadVariant::itm_classifier;
    if (s == "image_only") return HeadVariant::image_only;
    throw InvalidConfigError("unknown head variant: " + s);
}

// Per-modality channel-wise affine parameters plus the linear classifier.
struct CatHeadParams {
    Vec gamma_img, beta_img;
    Vec gamma_txt, beta_txt;
    Mat W; // M x d

    std::size_t dim() const { return gamma_img.size(); }
    std::size_t classes() const { return W.rows; }
};

// gamma starts at ones and beta at zeros so the cwT layer is the identity at
// construction; W is Gaussian with fan-in scaling.
inline CatHeadParams init_cat_head_params(std::size_t classes, std::size_t d,
                                          std::uint64_t seed) {
    CatHeadParams p;
    p.gamma_img.assign(d, 1.0);
    p.beta_img.assign(d, 0.0);
    p.gamma_txt.assign(d, 1.0);
    p.beta_txt.assign(d, 0.0);
    Rng rng = make_rng(seed, "cat-W");
    p.W = gaussian_matrix(rng, classes, d, 1.0 / std::sqrt(double(d)));
    return p;
}

inline double cosine_similarity(const Vec& x, const Vec& y) {
    if (x.size() != y.size()) throw InvalidInputError("cosine: dimension mismatch");
    const double nx = nrm2(x);
    const double ny = nrm2(y);
    if (nx == 0.0 || ny == 0.0)
        throw DegenerateFeatureError("cosine undefined for zero-norm feature vector");
    return dot(x, y) / (nx * ny);
}

// Numerically stable softmax over arbitrary logits.
inline Vec softmax(const Vec& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    Vec p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        s += p[i];
    }
    for (auto& v : p) v /= s;
    return p;
}

inline ProbabilityVector itm_probabilities(const FeatureVector& image_feat,
                                           const std::vector<FeatureVector>& class_feats,
                                           double temperature) {
    if (class_feats.empty()) throw InvalidInputError("itm_probabilities: no class features");
    if (temperature <= 0.0) throw InvalidInputError("itm_probabilities: temperature must be > 0");
    Vec logits(class_feats.size());
    for (std::size_t i = 0; i < class_feats.size(); ++i)
        logits[i] = cosine_similarity(class_feats[i], image_feat) / temperature;
    return softmax(logits);
}

inline std::size_t one_hot_index(const Vec& label) {
    std::size_t idx = label.size();
    for (std::size_t i = 0; i < label.size(); ++i) {
        if (label[i] == 1.0) {
            if (idx != label.size()) throw InvalidInputError("label is not one-hot");
            idx = i;
        } else if (label[i] != 0.0) {
            throw InvalidInputError("label is not one-hot");
        }
    }
    if (idx == label.size()) throw InvalidInputError("label is not one-hot");
    return idx;
}

inline double cross_entropy(const ProbabilityVector& probs, std::size_t label) {
    if (label >= probs.size()) throw InvalidInputError("cross_entropy: label out of range");
    return -std::log(std::max(probs[label], kLogClamp));
}

inline double itm_loss(const ProbabilityVector& probs, const Vec& one_hot) {
    if (one_hot.size() != probs.size())
        throw InvalidInputError("itm_loss: label/probability size mismatch");
    return cross_entropy(probs, one_hot_index(one_hot));
}

inline FeatureVector cwt_transform(const FeatureVector& feat, const Vec& gamma, const Vec& beta) {
    if (feat.size() != gamma.size() || feat.size() != beta.size())
        throw InvalidInputError("cwt_transform: dimension mismatch");
    Vec out(feat.size());
    for (std::size_t i = 0; i < feat.size(); ++i) out[i] = gamma[i] * feat[i] + beta[i];
    return out;
}

// The transformed batch S_u with its duplicated labels. For the image_only
// variant the text branch is dropped entirely, so the CAT loss cannot reach
// the prompt.
struct CatBatch {
    std::vector<FeatureVector> features;
    std::vector<int> labels;
    HeadVariant variant = HeadVariant::full;
};

inline CatBatch cat_batch_features(const std::vector<FeatureVector>& image_feats,
                                   const std::vector<FeatureVector>& paired_text_feats,
                                   const std::vector<int>& labels,
                                   const CatHeadParams& params, HeadVariant variant) {
    if (image_feats.size() != paired_text_feats.size() || image_feats.size() != labels.size())
        throw InvalidInputError("cat_batch_features: image/text/label lengths differ");
    CatBatch batch;
    batch.variant = variant;
    const bool shared = variant == HeadVariant::shared_cwt;
    const Vec& g_txt = shared ? params.gamma_img : params.gamma_txt;
    const Vec& b_txt = shared ? params.beta_img : params.beta_txt;
    for (std::size_t j = 0; j < image_feats.size(); ++j) {
        batch.features.push_back(cwt_transform(image_feats[j], params.gamma_img, params.beta_img));
        batch.labels.push_back(labels[j]);
        if (variant != HeadVariant::image_only) {
            batch.features.push_back(cwt_transform(paired_text_feats[j], g_txt, b_txt));
            batch.labels.push_back(labels[j]);
        }
    }
    return batch;
}

// softmax(W s): plain logits, no cosine normalization and no temperature.
inline ProbabilityVector cat_probabilities(const FeatureVector& feat, const Mat& W) {
    return softmax(matvec(W, feat));
}

// Mean cross-entropy over the transformed batch (linear-classifier variants).
inline double cat_loss(const CatBatch& batch, const Mat& W) {
    if (batch.features.empty()) throw InvalidInputError("cat_loss: empty batch");
    double loss = 0.0;
    for (std::size_t j = 0; j < batch.features.size(); ++j) {
        const auto p = cat_probabilities(batch.features[j], W);
        loss += cross_entropy(p, static_cast<std::size_t>(batch.labels[j]));
    }
    return loss / double(batch.features.size());
}

// Mean cross-entropy for the itm_classifier variant: cosine/temperature
// softmax against cwT-transformed class anchors instead of W.
inline double cat_loss_itm_classifier(const CatBatch& batch,
                                      const std::vector<FeatureVector>& anchors,
                                      double temperature) {
    if (batch.features.empty()) throw InvalidInputError("cat_loss: empty batch");
    double loss = 0.0;
    for (std::size_t j = 0; j < batch.features.size(); ++j) {
        const auto p = itm_probabilities(batch.features[j], anchors, temperature);
        loss += cross_entropy(p, static_cast<std::size_t>(batch.labels[j]));
    }
    return loss / double(batch.features.size());
}

inline double combined_loss(double l_cat, double l_itm, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw InvalidConfigError("combined_loss: lambda must lie in [0,1]");
    return lambda * l_cat + (1.0 - lambda) * l_itm;
}

inline ProbabilityVector fused_prediction(const ProbabilityVector& p_cat,
                                          const ProbabilityVector& p_itm, double lambda) {
    if (p_cat.size() != p_itm.size())
        throw InvalidInputError("fused_prediction: class-count mismatch");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw InvalidConfigError("fused_prediction: lambda must lie in [0,1]");
    Vec out(p_cat.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = lambda * p_cat[i] + (1.0 - lambda) * p_itm[i];
    return out;
}

// Base-task inference: fused CAT + ITM probabilities. apply_cwt selects
// whether the test image feature passes through the image cwT before the
// classifier (the trained pipeline) or is fed raw.
inline ProbabilityVector predict_base(const FeatureVector& image_feat,
                                      const std::vector<FeatureVector>& class_feats,
                                      const CatHeadParams& params, double temperature,
                                      double lambda, HeadVariant variant = HeadVariant::full,
                                      bool apply_cwt = true) {
    const ProbabilityVector p_itm = itm_probabilities(image_feat, class_feats, temperature);
    FeatureVector s = apply_cwt ? cwt_transform(image_feat, params.gamma_img, params.beta_img)
                                : image_feat;
    ProbabilityVector p_cat;
    if (variant == HeadVariant::itm_classifier) {
        std::vector<FeatureVector> anchors;
        anchors.reserve(class_feats.size());
        for (const auto& e : class_feats)
            anchors.push_back(cwt_transform(e, params.gamma_txt, params.beta_txt));
        p_cat = itm_probabilities(s, anchors, temperature);
    } else {
        p_cat = cat_probabilities(s, params.W);
    }
    return fused_prediction(p_cat, p_itm, lambda);
}

// New-task inference stays in the original feature space; CAT parameters
// play no role here.
inline ProbabilityVector predict_new(const FeatureVector& image_feat,
                                     const std::vector<FeatureVector>& new_class_feats,
                                     double temperature) {
    return itm_probabilities(image_feat, new_class_feats, temperature);
}

} // namespace dept
