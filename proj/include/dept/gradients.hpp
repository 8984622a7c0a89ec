#pragma once

#include <vector>

#include "dept/encoders.hpp"
#include "dept/heads.hpp"

namespace dept {

// Raw per-head losses and gradients for one mini-batch. CAT gradients are
// unscaled (no lambda applied); callers weight them as needed: the training
// step updates CAT parameters on the plain CAT loss while the prompt sees
// the lambda-combined mix, and the gradient checker scales everything by
// lambda to differentiate the combined objective.
struct BatchEval {
    double loss_itm = 0.0;
    double loss_cat = 0.0;
    Mat d_prompt_itm; // dL_ITM/dV
    Mat d_prompt_cat; // dL_CAT/dV (exactly zero under image_only)
    Vec d_gamma_img, d_beta_img;
    Vec d_gamma_txt, d_beta_txt;
    Mat d_W;
};

namespace detail {

// d(cos(x, y))/dx given the cosine value. Norms must be nonzero.
inline Vec cosine_grad_wrt_first(const Vec& x, const Vec& y, double cos_val) {
    const double nx = nrm2(x);
    const double ny = nrm2(y);
    Vec g(x.size());
    const double a = 1.0 / (nx * ny);
    const double b = cos_val / (nx * nx);
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = a * y[i] - b * x[i];
    return g;
}

} // namespace detail

// Forward + reverse pass of both heads over one batch of precomputed image
// features. Classes are the task's class tokens in label order; cat may be
// null for ITM-only training. Cross-entropy terms whose clamped probability
// saturates contribute constant loss and zero gradient, matching the
// forward clamp.
inline BatchEval evaluate_batch(const FrozenEncoderBundle& bundle, const PromptContext& prompt,
                                const std::vector<ClassToken>& classes,
                                const std::vector<FeatureVector>& image_feats,
                                const std::vector<int>& labels, const CatHeadParams* cat,
                                HeadVariant variant) {
    if (image_feats.size() != labels.size())
        throw InvalidInputError("evaluate_batch: feature/label count mismatch");
    if (image_feats.empty()) throw InvalidInputError("evaluate_batch: empty batch");
    const std::size_t M = classes.size();
    const std::size_t J = image_feats.size();
    const std::size_t d = static_cast<std::size_t>(bundle.dim());
    const double tau = bundle.temperature();

    std::vector<FrozenEncoderBundle::TextCache> caches;
    caches.reserve(M);
    for (const auto& c : classes) caches.push_back(bundle.encode_text_cached(prompt, c));

    BatchEval ev;
    ev.d_prompt_itm = Mat(prompt.vectors.rows, prompt.vectors.cols);
    ev.d_prompt_cat = Mat(prompt.vectors.rows, prompt.vectors.cols);

    // dL/d(text feature), per class, for each head.
    std::vector<Vec> g_itm(M, Vec(d, 0.0));
    std::vector<Vec> g_cat(M, Vec(d, 0.0));

    // --- ITM head ---
    for (std::size_t j = 0; j < J; ++j) {
        const Vec& f = image_feats[j];
        const std::size_t y = static_cast<std::size_t>(labels[j]);
        if (y >= M) throw InvalidInputError("evaluate_batch: label out of range");
        Vec cosv(M), logits(M);
        for (std::size_t c = 0; c < M; ++c) {
            cosv[c] = cosine_similarity(caches[c].feature, f);
            logits[c] = cosv[c] / tau;
        }
        const Vec p = softmax(logits);
        ev.loss_itm += cross_entropy(p, y) / double(J);
        if (p[y] <= kLogClamp) continue;
        for (std::size_t c = 0; c < M; ++c) {
            const double w = (p[c] - (c == y ? 1.0 : 0.0)) / (tau * double(J));
            if (w == 0.0) continue;
            const Vec dc = detail::cosine_grad_wrt_first(caches[c].feature, f, cosv[c]);
            axpy(g_itm[c], dc, w);
        }
    }

    // --- CAT head ---
    if (cat != nullptr) {
        const bool shared = variant == HeadVariant::shared_cwt;
        const Vec& gam_t = shared ? cat->gamma_img : cat->gamma_txt;
        const Vec& bet_t = shared ? cat->beta_img : cat->beta_txt;
        ev.d_gamma_img.assign(d, 0.0);
        ev.d_beta_img.assign(d, 0.0);
        ev.d_gamma_txt.assign(d, 0.0);
        ev.d_beta_txt.assign(d, 0.0);
        ev.d_W = Mat(cat->W.rows, cat->W.cols);

        Vec& dgam_t = shared ? ev.d_gamma_img : ev.d_gamma_txt;
        Vec& dbet_t = shared ? ev.d_beta_img : ev.d_beta_txt;

        const std::size_t B = variant == HeadVariant::image_only ? J : 2 * J;

        if (variant == HeadVariant::itm_classifier) {
            // Anchors are the cwT-transformed class features; prompt
            // gradient flows through both the batch text features and the
            // anchors.
            std::vector<Vec> anchors(M);
            for (std::size_t c = 0; c < M; ++c)
                anchors[c] = cwt_transform(caches[c].feature, gam_t, bet_t);
            std::vector<Vec> d_anchors(M, Vec(d, 0.0));

            auto consume = [&](const Vec& source, const Vec& transformed, std::size_t y,
                               bool text_branch) {
                Vec cosv(M), logits(M);
                for (std::size_t c = 0; c < M; ++c) {
                    cosv[c] = cosine_similarity(anchors[c], transformed);
                    logits[c] = cosv[c] / tau;
                }
                const Vec p = softmax(logits);
                ev.loss_cat += cross_entropy(p, y) / double(B);
                if (p[y] <= kLogClamp) return;
                Vec ds(d, 0.0);
                for (std::size_t c = 0; c < M; ++c) {
                    const double w = (p[c] - (c == y ? 1.0 : 0.0)) / (tau * double(B));
                    if (w == 0.0) continue;
                    axpy(ds, detail::cosine_grad_wrt_first(transformed, anchors[c], cosv[c]), w);
                    axpy(d_anchors[c], detail::cosine_grad_wrt_first(anchors[c], transformed, cosv[c]),
                         w);
                }
                const Vec& gam = text_branch ? gam_t : cat->gamma_img;
                Vec& dgam = text_branch ? dgam_t : ev.d_gamma_img;
                Vec& dbet = text_branch ? dbet_t : ev.d_beta_img;
                for (std::size_t r = 0; r < d; ++r) {
                    dgam[r] += ds[r] * source[r];
                    dbet[r] += ds[r];
                }
                if (text_branch)
                    for (std::size_t r = 0; r < d; ++r) g_cat[y][r] += ds[r] * gam[r];
            };

            for (std::size_t j = 0; j < J; ++j) {
                const std::size_t y = static_cast<std::size_t>(labels[j]);
                consume(image_feats[j],
                        cwt_transform(image_feats[j], cat->gamma_img, cat->beta_img), y, false);
                consume(caches[y].feature, cwt_transform(caches[y].feature, gam_t, bet_t), y, true);
            }
            for (std::size_t c = 0; c < M; ++c) {
                for (std::size_t r = 0; r < d; ++r) {
                    dgam_t[r] += d_anchors[c][r] * caches[c].feature[r];
                    dbet_t[r] += d_anchors[c][r];
                    g_cat[c][r] += d_anchors[c][r] * gam_t[r];
                }
            }
        } else {
            auto consume = [&](const Vec& source, std::size_t y, bool text_branch) {
                const Vec& gam = text_branch ? gam_t : cat->gamma_img;
                const Vec& bet = text_branch ? bet_t : cat->beta_img;
                const Vec s = cwt_transform(source, gam, bet);
                const Vec p = cat_probabilities(s, cat->W);
                ev.loss_cat += cross_entropy(p, y) / double(B);
                if (p[y] <= kLogClamp) return;
                Vec dlogits(M);
                for (std::size_t c = 0; c < M; ++c)
                    dlogits[c] = (p[c] - (c == y ? 1.0 : 0.0)) / double(B);
                outer_add(ev.d_W, dlogits, s);
                const Vec ds = tmatvec(cat->W, dlogits);
                Vec& dgam = text_branch ? dgam_t : ev.d_gamma_img;
                Vec& dbet = text_branch ? dbet_t : ev.d_beta_img;
                for (std::size_t r = 0; r < d; ++r) {
                    dgam[r] += ds[r] * source[r];
                    dbet[r] += ds[r];
                }
                if (text_branch)
                    for (std::size_t r = 0; r < d; ++r) g_cat[y][r] += ds[r] * gam[r];
            };

            for (std::size_t j = 0; j < J; ++j) {
                const std::size_t y = static_cast<std::size_t>(labels[j]);
                if (y >= cat->W.rows) throw InvalidInputError("evaluate_batch: label out of range");
                consume(image_feats[j], y, false);
                if (variant != HeadVariant::image_only) consume(caches[y].feature, y, true);
            }
        }
    }

    for (std::size_t c = 0; c < M; ++c) {
        bundle.backprop_text(caches[c], g_itm[c], ev.d_prompt_itm);
        if (cat != nullptr && variant != HeadVariant::image_only)
            bundle.backprop_text(caches[c], g_cat[c], ev.d_prompt_cat);
    }
    return ev;
}

// Gradients of the lambda-combined objective, the quantity the
// finite-difference suite differentiates.
struct DualHeadGradients {
    double loss = 0.0;
    Mat d_prompt;
    Vec d_gamma_img, d_beta_img;
    Vec d_gamma_txt, d_beta_txt;
    Mat d_W;
};

inline DualHeadGradients combined_gradients(const BatchEval& ev, double lambda) {
    DualHeadGradients g;
    g.loss = combined_loss(ev.loss_cat, ev.loss_itm, lambda);
    g.d_prompt = Mat(ev.d_prompt_itm.rows, ev.d_prompt_itm.cols);
    axpy(g.d_prompt, ev.d_prompt_itm, 1.0 - lambda);
    axpy(g.d_prompt, ev.d_prompt_cat, lambda);
    auto scaled = [&](const Vec& v) {
        Vec out(v.size(), 0.0);
        axpy(out, v, lambda);
        return out;
    };
    g.d_gamma_img = scaled(ev.d_gamma_img);
    g.d_beta_img = scaled(ev.d_beta_img);
    g.d_gamma_txt = scaled(ev.d_gamma_txt);
    g.d_beta_txt = scaled(ev.d_beta_txt);
    g.d_W = Mat(ev.d_W.rows, ev.d_W.cols);
    axpy(g.d_W, ev.d_W, lambda);
    return g;
}

} // namespace dept
