#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dept/error.hpp"
#include "dept/linalg.hpp"
#include "dept/rng.hpp"
#include "dept/types.hpp"

namespace dept {

struct ToyEncoderSpec {
    std::uint64_t seed = 7;
    int d = 32;            // feature channels
    int e = 16;            // token embedding width (= prompt vector width)
    int l = 4;             // prompt length
    int hidden_width = 64; // text-side hidden layer

    void validate() const {
        if (d <= 0 || e <= 0 || l <= 0 || hidden_width <= 0)
            throw InvalidSpecError("ToyEncoderSpec: all dimensions must be positive");
    }
};

// Frozen dual encoder standing in for a pretrained contrastive model.
//
// Image side: a fixed near-identity affine map over raw example vectors, so
// feature channels keep the raw channel structure of the synthetic data.
// Text side: token semantic vector -> fixed projection to width e, concat
// with the flattened prompt, then a frozen linear/tanh/linear map down to d.
// The tanh keeps prompt gradients bounded and smooth for finite-difference
// validation. All weights are immutable after construction.
class FrozenEncoderBundle {
public:
    explicit FrozenEncoderBundle(const ToyEncoderSpec& spec) : spec_(spec) {
        spec.validate();
        const std::size_t d = static_cast<std::size_t>(spec.d);
        const std::size_t e = static_cast<std::size_t>(spec.e);
        const std::size_t h = static_cast<std::size_t>(spec.hidden_width);
        const std::size_t zin = static_cast<std::size_t>(spec.l) * e + e;

        // Dense mixing spreads the raw class structure over every feature
        // channel; the 0.1 output scale keeps CAT logits and step sizes O(1).
        Rng rimg = make_rng(spec.seed, "toy-image");
        img_w_ = gaussian_matrix(rimg, d, d, 0.1 / std::sqrt(double(d)));
        img_b_ = gaussian_vector(rimg, d, 0.01);

        Rng rtok = make_rng(spec.seed, "toy-token");
        tok_proj_ = gaussian_matrix(rtok, e, d, 1.0 / std::sqrt(double(d)));

        // First-layer scales are split per input block. The token block is
        // wide enough to spread class operating points across the tanh's
        // curved region (that spread is the only channel through which a
        // shared prompt can move classes differentially), and the prompt
        // block is strong enough that the prompt learns at the same step
        // size the CAT head tolerates. The output layer stays gentle (small
        // w2, dominant bias) so per-entry logit sensitivities remain in the
        // regime where an h=1e-3 central difference resolves the sharp
        // 1/tau=100 softmax.
        const std::size_t np = static_cast<std::size_t>(spec.l) * e;
        Rng rtxt = make_rng(spec.seed, "toy-text");
        w1_ = Mat(h, zin);
        {
            std::normal_distribution<double> prompt_block(0.0, 2.0 / std::sqrt(double(np)));
            std::normal_distribution<double> token_block(0.0, 2.2 / std::sqrt(double(e)));
            for (std::size_t i = 0; i < h; ++i) {
                for (std::size_t j = 0; j < np; ++j) w1_(i, j) = prompt_block(rtxt);
                for (std::size_t j = np; j < zin; ++j) w1_(i, j) = token_block(rtxt);
            }
        }
        b1_ = gaussian_vector(rtxt, h, 0.2);
        w2_ = gaussian_matrix(rtxt, d, h, 0.10 / std::sqrt(double(h)));
        b2_ = gaussian_vector(rtxt, d, 0.01);
    }

    const ToyEncoderSpec& spec() const { return spec_; }
    int dim() const { return spec_.d; }
    double temperature() const { return temperature_; }

    FeatureVector encode_image(const Vec& raw) const {
        if (raw.size() != static_cast<std::size_t>(spec_.d))
            throw InvalidInputError("encode_image: raw example has wrong dimension");
        Vec f = matvec(img_w_, raw);
        axpy(f, img_b_, 1.0);
        return f;
    }

    // Forward pass state needed to backpropagate into the prompt.
    struct TextCache {
        Vec h;       // tanh activations
        Vec feature; // encoder output, length d
    };

    TextCache encode_text_cached(const PromptContext& prompt, const ClassToken& token) const {
        check_prompt(prompt);
        if (token.values.size() != static_cast<std::size_t>(spec_.d))
            throw InvalidInputError("encode_text: class token has wrong dimension");
        Vec z = stack_input(prompt, token);
        Vec u = matvec(w1_, z);
        axpy(u, b1_, 1.0);
        for (auto& x : u) x = std::tanh(x);
        Vec out = matvec(w2_, u);
        axpy(out, b2_, 1.0);
        return TextCache{std::move(u), std::move(out)};
    }

    FeatureVector encode_text(const PromptContext& prompt, const ClassToken& token) const {
        return encode_text_cached(prompt, token).feature;
    }

    // Accumulates dL/dprompt given dL/dfeature for one encoded class.
    void backprop_text(const TextCache& cache, const Vec& d_feature, Mat& d_prompt) const {
        Vec dh = tmatvec(w2_, d_feature);
        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= 1.0 - cache.h[i] * cache.h[i];
        const std::size_t np = d_prompt.a.size(); // l*e leading entries of z
        for (std::size_t i = 0; i < w1_.rows; ++i) {
            const double* row = &w1_.a[i * w1_.cols];
            const double g = dh[i];
            for (std::size_t j = 0; j < np; ++j) d_prompt.a[j] += g * row[j];
        }
    }

    // Analytic Jacobian d(feature)/d(prompt entry k), k indexing the
    // flattened l x e prompt row-major. Used to cross-check reverse mode
    // against finite differences.
    Vec prompt_jacobian_column(const PromptContext& prompt, const ClassToken& token,
                               std::size_t k) const {
        TextCache c = encode_text_cached(prompt, token);
        Vec du(w1_.rows);
        for (std::size_t i = 0; i < w1_.rows; ++i)
            du[i] = w1_(i, k) * (1.0 - c.h[i] * c.h[i]);
        return matvec(w2_, du);
    }

    std::uint64_t param_checksum() const {
        std::uint64_t h = 1469598103934665603ULL;
        h = hash_doubles(h, img_w_.a.data(), img_w_.a.size());
        h = hash_doubles(h, img_b_.data(), img_b_.size());
        h = hash_doubles(h, tok_proj_.a.data(), tok_proj_.a.size());
        h = hash_doubles(h, w1_.a.data(), w1_.a.size());
        h = hash_doubles(h, b1_.data(), b1_.size());
        h = hash_doubles(h, w2_.a.data(), w2_.a.size());
        h = hash_doubles(h, b2_.data(), b2_.size());
        h = hash_doubles(h, &temperature_, 1);
        return h;
    }

private:
    void check_prompt(const PromptContext& prompt) const {
        if (prompt.vectors.rows != static_cast<std::size_t>(spec_.l) ||
            prompt.vectors.cols != static_cast<std::size_t>(spec_.e))
            throw InvalidInputError("encode_text: prompt shape does not match encoder spec");
    }

    Vec stack_input(const PromptContext& prompt, const ClassToken& token) const {
        Vec emb = matvec(tok_proj_, token.values);
        Vec z;
        z.reserve(prompt.vectors.a.size() + emb.size());
        z.insert(z.end(), prompt.vectors.a.begin(), prompt.vectors.a.end());
        z.insert(z.end(), emb.begin(), emb.end());
        return z;
    }

    ToyEncoderSpec spec_;
    double temperature_ = 0.01; // 1/tau = 100, never updated
    Mat img_w_;
    Vec img_b_;
    Mat tok_proj_;
    Mat w1_;
    Vec b1_;
    Mat w2_;
    Vec b2_;
};

inline FrozenEncoderBundle build_toy_bundle(const ToyEncoderSpec& spec) {
    return FrozenEncoderBundle(spec);
}

inline PromptContext init_prompt(const ToyEncoderSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng = make_rng(seed, "prompt-init");
    PromptContext p;
    p.vectors = gaussian_matrix(rng, static_cast<std::size_t>(spec.l),
                                static_cast<std::size_t>(spec.e), 0.02);
    return p;
}

inline std::vector<FeatureVector> encode_class_set(const FrozenEncoderBundle& bundle,
                                                   const PromptContext& prompt,
                                                   const std::vector<ClassToken>& classes) {
    if (classes.empty()) throw InvalidInputError("encode_class_set: empty class list");
    std::vector<FeatureVector> out;
    out.reserve(classes.size());
    for (const auto& c : classes) out.push_back(bundle.encode_text(prompt, c));
    return out;
}

} // namespace dept
