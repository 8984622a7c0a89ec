#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dept/encoders.hpp"
#include "dept/gradients.hpp"

namespace dept {

struct GradcheckOptions {
    std::uint64_t seed = 1;
    int d = 8;
    int classes = 3;
    int batch = 4;
    int prompt_len = 8;
    int embed = 8;
    int hidden = 12;
    double lambda = 0.7;
    HeadVariant variant = HeadVariant::full;
    double step = 1e-3;
    double tolerance = 1e-4;
    std::string flip_group; // test hook: negates one analytic gradient group
};

struct GradcheckGroup {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t entries = 0;
    bool pass = true;
};

struct GradcheckReport {
    std::vector<GradcheckGroup> groups;
    bool pass = true;

    const GradcheckGroup* find(const std::string& name) const {
        for (const auto& g : groups)
            if (g.name == name) return &g;
        return nullptr;
    }
};

namespace detail {

struct GradcheckInstance {
    ToyEncoderSpec spec;
    std::vector<ClassToken> tokens;
    std::vector<FeatureVector> image_feats;
    std::vector<int> labels;
    PromptContext prompt;
    CatHeadParams cat;
};

// The combined objective is only piecewise-smooth at the log clamp, so
// instances whose clamped probabilities sit right at the boundary are
// rejected and rebuilt from the next derived seed.
inline bool clamp_safe(const FrozenEncoderBundle& bundle, const GradcheckInstance& inst,
                       HeadVariant variant) {
    const double tau = bundle.temperature();
    const auto class_feats = encode_class_set(bundle, inst.prompt, inst.tokens);
    auto risky = [](double p) { return p > kLogClamp / 100.0 && p < kLogClamp * 100.0; };
    for (std::size_t j = 0; j < inst.image_feats.size(); ++j) {
        const auto p = itm_probabilities(inst.image_feats[j], class_feats, tau);
        if (risky(p[static_cast<std::size_t>(inst.labels[j])])) return false;
    }
    const CatBatch batch = cat_batch_features(inst.image_feats, [&] {
        std::vector<FeatureVector> t;
        for (int y : inst.labels) t.push_back(class_feats[static_cast<std::size_t>(y)]);
        return t;
    }(), inst.labels, inst.cat, variant);
    if (variant == HeadVariant::itm_classifier) {
        std::vector<FeatureVector> anchors;
        for (const auto& e : class_feats)
            anchors.push_back(cwt_transform(e, inst.cat.gamma_txt, inst.cat.beta_txt));
        for (std::size_t j = 0; j < batch.features.size(); ++j) {
            const auto p = itm_probabilities(batch.features[j], anchors, tau);
            if (risky(p[static_cast<std::size_t>(batch.labels[j])])) return false;
        }
    } else {
        for (std::size_t j = 0; j < batch.features.size(); ++j) {
            const auto p = cat_probabilities(batch.features[j], inst.cat.W);
            if (risky(p[static_cast<std::size_t>(batch.labels[j])])) return false;
        }
    }
    return true;
}

inline GradcheckInstance build_instance(const GradcheckOptions& opt,
                                        const FrozenEncoderBundle& bundle, std::uint64_t seed) {
    GradcheckInstance inst;
    inst.spec = bundle.spec();
    Rng rng = make_rng(seed, "gradcheck-instance");
    const auto d = static_cast<std::size_t>(opt.d);
    for (int c = 0; c < opt.classes; ++c)
        inst.tokens.push_back({"c" + std::to_string(c), gaussian_vector(rng, d, 1.0)});
    std::uniform_int_distribution<int> label_dist(0, opt.classes - 1);
    for (int j = 0; j < opt.batch; ++j) {
        inst.image_feats.push_back(gaussian_vector(rng, d, 1.0));
        inst.labels.push_back(label_dist(rng));
    }
    inst.prompt = init_prompt(inst.spec, derive_seed(seed, "gc-prompt"));
    inst.cat = init_cat_head_params(static_cast<std::size_t>(opt.classes), d,
                                    derive_seed(seed, "gc-cat"));
    // Move gamma/beta off the identity so their gradients are generic.
    for (auto& g : inst.cat.gamma_img) g += gaussian_vector(rng, 1, 0.2)[0];
    for (auto& b : inst.cat.beta_img) b += gaussian_vector(rng, 1, 0.2)[0];
    for (auto& g : inst.cat.gamma_txt) g += gaussian_vector(rng, 1, 0.2)[0];
    for (auto& b : inst.cat.beta_txt) b += gaussian_vector(rng, 1, 0.2)[0];
    return inst;
}

// Relative error with a floored denominator: entries far below the group's
// gradient scale are judged in absolute terms, otherwise truncation noise on
// negligible entries would dominate the report.
inline double rel_err(double a, double b, double floor) {
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / denom;
}

} // namespace detail

inline GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
    ToyEncoderSpec spec;
    spec.seed = derive_seed(opt.seed, "gc-bundle");
    spec.d = opt.d;
    spec.e = opt.embed;
    spec.l = opt.prompt_len;
    spec.hidden_width = opt.hidden;
    const FrozenEncoderBundle bundle = build_toy_bundle(spec);

    detail::GradcheckInstance inst = detail::build_instance(opt, bundle, opt.seed);
    for (int attempt = 0; attempt < 64 && !detail::clamp_safe(bundle, inst, opt.variant);
         ++attempt)
        inst = detail::build_instance(opt, bundle, derive_seed(opt.seed, std::to_string(attempt)));

    auto loss_at = [&](const PromptContext& prompt, const CatHeadParams& cat) {
        const BatchEval ev = evaluate_batch(bundle, prompt, inst.tokens, inst.image_feats,
                                            inst.labels, &cat, opt.variant);
        return combined_loss(ev.loss_cat, ev.loss_itm, opt.lambda);
    };

    const BatchEval ev = evaluate_batch(bundle, inst.prompt, inst.tokens, inst.image_feats,
                                        inst.labels, &inst.cat, opt.variant);
    DualHeadGradients grads = combined_gradients(ev, opt.lambda);

    GradcheckReport report;
    const double h = opt.step;

    auto check_entries = [&](const std::string& name, double* values, const double* analytic,
                             std::size_t n) {
        const double sign = opt.flip_group == name ? -1.0 : 1.0;
        double scale = 0.0;
        for (std::size_t k = 0; k < n; ++k) scale = std::max(scale, std::abs(analytic[k]));
        const double floor = std::max(1e-4, 1e-3 * scale);
        GradcheckGroup group{name, 0.0, n, true};
        for (std::size_t k = 0; k < n; ++k) {
            const double saved = values[k];
            values[k] = saved + h;
            const double up = loss_at(inst.prompt, inst.cat);
            values[k] = saved - h;
            const double dn = loss_at(inst.prompt, inst.cat);
            values[k] = saved;
            const double fd = (up - dn) / (2.0 * h);
            group.max_rel_err =
                std::max(group.max_rel_err, detail::rel_err(sign * analytic[k], fd, floor));
        }
        group.pass = group.max_rel_err <= opt.tolerance;
        report.groups.push_back(group);
        report.pass = report.pass && group.pass;
    };

    check_entries("prompt", inst.prompt.vectors.a.data(), grads.d_prompt.a.data(),
                  inst.prompt.vectors.a.size());
    check_entries("gamma_img", inst.cat.gamma_img.data(), grads.d_gamma_img.data(),
                  inst.cat.gamma_img.size());
    check_entries("beta_img", inst.cat.beta_img.data(), grads.d_beta_img.data(),
                  inst.cat.beta_img.size());
    check_entries("gamma_txt", inst.cat.gamma_txt.data(), grads.d_gamma_txt.data(),
                  inst.cat.gamma_txt.size());
    check_entries("beta_txt", inst.cat.beta_txt.data(), grads.d_beta_txt.data(),
                  inst.cat.beta_txt.size());
    check_entries("W", inst.cat.W.a.data(), grads.d_W.a.data(), inst.cat.W.a.size());
    return report;
}

} // namespace dept
