#include <catch2/catch_amalgamated.hpp>

#include "dept/encoders.hpp"

using namespace dept;

namespace {

ClassToken random_token(Rng& rng, int d, const std::string& name) {
    return {name, gaussian_vector(rng, static_cast<std::size_t>(d), 1.0)};
}

} // namespace

TEST_CASE("toy bundle construction is deterministic") {
    ToyEncoderSpec spec;
    spec.seed = 42;
    FrozenEncoderBundle a = build_toy_bundle(spec);
    FrozenEncoderBundle b = build_toy_bundle(spec);
    REQUIRE(a.param_checksum() == b.param_checksum());

    Rng rng = make_rng(5, "inputs");
    PromptContext prompt = init_prompt(spec, 3);
    ClassToken tok = random_token(rng, spec.d, "c0");
    Vec raw = gaussian_vector(rng, static_cast<std::size_t>(spec.d), 1.0);

    REQUIRE(a.encode_image(raw) == b.encode_image(raw));
    REQUIRE(a.encode_text(prompt, tok) == b.encode_text(prompt, tok));

    ToyEncoderSpec other = spec;
    other.seed = 43;
    REQUIRE(build_toy_bundle(other).param_checksum() != a.param_checksum());
}

TEST_CASE("encoder output dimensions match the declared spec") {
    ToyEncoderSpec spec;
    spec.d = 32;
    spec.l = 4;
    spec.e = 16;
    FrozenEncoderBundle bundle = build_toy_bundle(spec);
    PromptContext prompt = init_prompt(spec, 1);

    Rng rng = make_rng(9, "tokens");
    std::vector<ClassToken> classes;
    for (int i = 0; i < 10; ++i) classes.push_back(random_token(rng, spec.d, "c"));
    auto feats = encode_class_set(bundle, prompt, classes);
    REQUIRE(feats.size() == 10);
    for (const auto& f : feats) REQUIRE(f.size() == 32);
}

TEST_CASE("invalid encoder specs are rejected") {
    ToyEncoderSpec spec;
    spec.d = 0;
    REQUIRE_THROWS_AS(build_toy_bundle(spec), InvalidSpecError);
    spec.d = 8;
    spec.l = -1;
    REQUIRE_THROWS_AS(build_toy_bundle(spec), InvalidSpecError);
}

TEST_CASE("encode_class_set is a pointwise map over classes") {
    ToyEncoderSpec spec;
    spec.d = 12;
    FrozenEncoderBundle bundle = build_toy_bundle(spec);
    PromptContext prompt = init_prompt(spec, 11);
    Rng rng = make_rng(21, "tokens");
    ClassToken a = random_token(rng, spec.d, "a");
    ClassToken b = random_token(rng, spec.d, "b");
    ClassToken c = random_token(rng, spec.d, "c");

    auto feats = encode_class_set(bundle, prompt, {a, b, a});
    REQUIRE(feats[0] == feats[2]); // identical tokens encode identically

    auto fwd = encode_class_set(bundle, prompt, {a, b, c});
    auto rev = encode_class_set(bundle, prompt, {c, a, b});
    REQUIRE(fwd[0] == rev[1]);
    REQUIRE(fwd[1] == rev[2]);
    REQUIRE(fwd[2] == rev[0]);

    REQUIRE_THROWS_AS(encode_class_set(bundle, prompt, {}), InvalidInputError);
}

TEST_CASE("prompt Jacobian matches central finite differences") {
    ToyEncoderSpec spec;
    spec.d = 10;
    spec.e = 6;
    spec.l = 3;
    spec.hidden_width = 14;
    FrozenEncoderBundle bundle = build_toy_bundle(spec);
    PromptContext prompt = init_prompt(spec, 2);
    Rng rng = make_rng(33, "tokens");
    ClassToken tok = random_token(rng, spec.d, "t");

    const double h = 1e-3;
    const std::size_t n_entries = prompt.vectors.a.size();
    for (std::size_t k = 0; k < n_entries; ++k) {
        const Vec col = bundle.prompt_jacobian_column(prompt, tok, k);

        PromptContext up = prompt, dn = prompt;
        up.vectors.a[k] += h;
        dn.vectors.a[k] -= h;
        const Vec fu = bundle.encode_text(up, tok);
        const Vec fd = bundle.encode_text(dn, tok);
        for (std::size_t r = 0; r < col.size(); ++r) {
            const double fdiff = (fu[r] - fd[r]) / (2.0 * h);
            const double denom = std::max({std::abs(col[r]), std::abs(fdiff), 1e-6});
            REQUIRE(std::abs(col[r] - fdiff) / denom < 1e-4);
        }
    }
}

TEST_CASE("backprop_text agrees with the analytic Jacobian") {
    ToyEncoderSpec spec;
    spec.d = 8;
    spec.e = 5;
    spec.l = 2;
    spec.hidden_width = 12;
    FrozenEncoderBundle bundle = build_toy_bundle(spec);
    PromptContext prompt = init_prompt(spec, 4);
    Rng rng = make_rng(17, "tokens");
    ClassToken tok = random_token(rng, spec.d, "t");
    const Vec d_feature = gaussian_vector(rng, static_cast<std::size_t>(spec.d), 1.0);

    auto cache = bundle.encode_text_cached(prompt, tok);
    Mat d_prompt(prompt.vectors.rows, prompt.vectors.cols);
    bundle.backprop_text(cache, d_feature, d_prompt);

    for (std::size_t k = 0; k < d_prompt.a.size(); ++k) {
        const Vec col = bundle.prompt_jacobian_column(prompt, tok, k);
        REQUIRE_THAT(d_prompt.a[k], Catch::Matchers::WithinAbs(dot(col, d_feature), 1e-12));
    }
}

TEST_CASE("param checksum is stable under encoding calls") {
    ToyEncoderSpec spec;
    FrozenEncoderBundle bundle = build_toy_bundle(spec);
    const auto before = bundle.param_checksum();
    PromptContext prompt = init_prompt(spec, 1);
    Rng rng = make_rng(2, "tokens");
    for (int i = 0; i < 5; ++i) {
        ClassToken tok = random_token(rng, spec.d, "t");
        (void)bundle.encode_text(prompt, tok);
        (void)bundle.encode_image(gaussian_vector(rng, static_cast<std::size_t>(spec.d), 1.0));
    }
    REQUIRE(bundle.param_checksum() == before);
}

TEST_CASE("prompt initialization is seeded and small-scale") {
    ToyEncoderSpec spec;
    PromptContext a = init_prompt(spec, 99);
    PromptContext b = init_prompt(spec, 99);
    REQUIRE(a.vectors.a == b.vectors.a);
    REQUIRE(a.vectors.rows == static_cast<std::size_t>(spec.l));
    REQUIRE(a.vectors.cols == static_cast<std::size_t>(spec.e));
    double maxabs = 0.0;
    for (double v : a.vectors.a) maxabs = std::max(maxabs, std::abs(v));
    REQUIRE(maxabs < 0.2); // sigma = 0.02 initialization
}
