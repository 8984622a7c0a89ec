#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dept/data.hpp"
#include "dept/encoders.hpp"
#include "dept/gradients.hpp"
#include "dept/heads.hpp"

namespace dept {

enum class Method { itm_only, dept, oracle };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::itm_only: return "itm_only";
        case Method::dept: return "dept";
        case Method::oracle: return "oracle";
    }
    throw InvalidInputError("unknown method");
}

inline Method parse_method(const std::string& s) {
    if (s == "itm_only") return Method::itm_only;
    if (s == "dept") return Method::dept;
    if (s == "oracle") return Method::oracle;
    throw InvalidConfigError("unknown method: " + s);
}

struct TrainConfig {
    Method method = Method::dept;
    HeadVariant variant = HeadVariant::full;
    double lambda = 0.7;
    double base_lr = 0.45;          // delta, the prompt learning rate
    double cat_lr_multiplier = 6.5; // CAT head trains at 6.5 * delta
    int epochs = 10;
    int shots = 16;
    int batch_size = 16;
    std::uint64_t seed = 1;
    bool apply_cwt_at_test = true;

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 1.0))
            throw InvalidConfigError("train config: lambda must lie in [0,1]");
        if (base_lr <= 0.0 || cat_lr_multiplier <= 0.0)
            throw InvalidConfigError("train config: learning rates must be positive");
        if (epochs < 1 || shots < 1 || batch_size < 1)
            throw InvalidConfigError("train config: epochs, shots and batch_size must be >= 1");
    }
};

struct TrainedState {
    PromptContext prompt;
    std::optional<CatHeadParams> cat_params;
    TrainConfig config;
    std::vector<double> loss_history; // one entry per optimization step
};

struct EvalReport {
    double base_acc = 0.0;
    double new_acc = 0.0;
    double harmonic = 0.0;
    std::map<std::string, double> per_class_acc;
    std::uint64_t seed = 0;
};

inline double harmonic_mean(double base, double neu) {
    if (base <= 0.0 || neu <= 0.0) return 0.0;
    return 2.0 * base * neu / (base + neu);
}

namespace detail {

// Lowest index wins ties, so reports are deterministic.
inline std::size_t argmax_lowest(const Vec& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

} // namespace detail

// Few-shot prompt tuning with plain SGD. itm_only and oracle train the
// prompt on the ITM loss alone; oracle additionally folds the new task's
// few-shot data (drawn from its test pool, which real prompt tuning could
// never touch) into one joint class set. dept trains the prompt on the
// lambda-combined objective while the CAT parameters follow their own loss
// at 6.5x the prompt rate; at lambda=0 the prompt trajectory therefore
// matches itm_only exactly even though the CAT head keeps drifting.
inline TrainedState train(const FrozenEncoderBundle& bundle, const TaskDataset& dataset,
                          const TrainConfig& config) {
    config.validate();
    if (dataset.base_train.empty() || dataset.base_classes.empty())
        throw MissingDataError("train: dataset has no base split");

    std::vector<ClassToken> classes = dataset.base_classes;
    Split pool = few_shot_sample(dataset, config.shots, config.seed);
    if (config.method == Method::oracle) {
        if (dataset.new_test.empty() || dataset.new_classes.empty())
            throw MissingDataError("train: oracle method requires the new-task split");
        Split extra = few_shot_from_split(dataset.new_test, dataset.new_classes.size(),
                                          config.shots, derive_seed(config.seed, "oracle-new"));
        const int offset = static_cast<int>(classes.size());
        for (std::size_t i = 0; i < extra.size(); ++i) {
            pool.xs.push_back(std::move(extra.xs[i]));
            pool.labels.push_back(extra.labels[i] + offset);
        }
        classes.insert(classes.end(), dataset.new_classes.begin(), dataset.new_classes.end());
    }

    std::vector<FeatureVector> feats(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) feats[i] = bundle.encode_image(pool.xs[i]);

    TrainedState state;
    state.config = config;
    state.prompt = init_prompt(bundle.spec(), derive_seed(config.seed, "prompt"));

    const bool use_cat = config.method == Method::dept;
    if (use_cat)
        state.cat_params = init_cat_head_params(dataset.base_classes.size(),
                                                static_cast<std::size_t>(bundle.dim()),
                                                derive_seed(config.seed, "cat-init"));
    const double lambda = use_cat ? config.lambda : 0.0;
    const double cat_lr = config.base_lr * config.cat_lr_multiplier;

    Rng shuffle_rng = make_rng(config.seed, "batch-order");
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<FeatureVector> bf;
            std::vector<int> by;
            bf.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                bf.push_back(feats[order[k]]);
                by.push_back(pool.labels[order[k]]);
            }
            CatHeadParams* cat = use_cat ? &*state.cat_params : nullptr;
            const BatchEval ev =
                evaluate_batch(bundle, state.prompt, classes, bf, by, cat, config.variant);

            axpy(state.prompt.vectors, ev.d_prompt_itm, -config.base_lr * (1.0 - lambda));
            axpy(state.prompt.vectors, ev.d_prompt_cat, -config.base_lr * lambda);
            if (use_cat) {
                axpy(cat->gamma_img, ev.d_gamma_img, -cat_lr);
                axpy(cat->beta_img, ev.d_beta_img, -cat_lr);
                axpy(cat->gamma_txt, ev.d_gamma_txt, -cat_lr);
                axpy(cat->beta_txt, ev.d_beta_txt, -cat_lr);
                axpy(cat->W, ev.d_W, -cat_lr);
            }
            state.loss_history.push_back(combined_loss(ev.loss_cat, ev.loss_itm, lambda));
        }
    }
    return state;
}

// Base accuracy uses fused CAT+ITM prediction for dept and the plain ITM
// path otherwise; new-task accuracy is always zero-shot ITM with the tuned
// prompt.
inline EvalReport evaluate_base_to_new(const TrainedState& state, const FrozenEncoderBundle& bundle,
                                       const TaskDataset& dataset) {
    if (dataset.base_test.empty() || dataset.new_test.empty())
        throw MissingDataError("evaluate_base_to_new: empty test split");

    const auto base_feats = encode_class_set(bundle, state.prompt, dataset.base_classes);
    const auto new_feats = encode_class_set(bundle, state.prompt, dataset.new_classes);
    const double tau = bundle.temperature();
    const bool fused = state.config.method == Method::dept && state.cat_params.has_value();

    EvalReport report;
    report.seed = state.config.seed;

    auto task_accuracy = [&](const Split& split, auto&& predict, const char* prefix,
                             std::size_t n_classes) {
        std::vector<int> hits(n_classes, 0), totals(n_classes, 0);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < split.size(); ++i) {
            const Vec f = bundle.encode_image(split.xs[i]);
            const std::size_t pred = detail::argmax_lowest(predict(f));
            const auto y = static_cast<std::size_t>(split.labels[i]);
            totals[y] += 1;
            if (pred == y) {
                hits[y] += 1;
                ++correct;
            }
        }
        for (std::size_t c = 0; c < n_classes; ++c)
            report.per_class_acc[std::string(prefix) + ":" + std::to_string(c)] =
                totals[c] == 0 ? 0.0 : 100.0 * double(hits[c]) / double(totals[c]);
        return 100.0 * double(correct) / double(split.size());
    };

    report.base_acc = task_accuracy(
        dataset.base_test,
        [&](const Vec& f) {
            if (fused)
                return predict_base(f, base_feats, *state.cat_params, tau, state.config.lambda,
                                    state.config.variant, state.config.apply_cwt_at_test);
            return itm_probabilities(f, base_feats, tau);
        },
        "base", dataset.base_classes.size());
    report.new_acc = task_accuracy(
        dataset.new_test, [&](const Vec& f) { return predict_new(f, new_feats, tau); }, "new",
        dataset.new_classes.size());
    report.harmonic = harmonic_mean(report.base_acc, report.new_acc);
    return report;
}

// ---------------------------------------------------------------------------
// Experiment suites
// ---------------------------------------------------------------------------

struct SuiteRun {
    SyntheticDatasetSpec dataset;
    ToyEncoderSpec encoder;
    TrainConfig train;
    std::string tag;
};

struct SuiteRecord {
    SuiteRun run;
    EvalReport report;
    bool ok = false;
    std::string error;
};

struct SuiteAggregate {
    std::string key; // method/variant/lambda/shots/epochs with seeds pooled
    int runs = 0;
    double mean_base = 0.0;
    double mean_new = 0.0;
    double mean_harmonic = 0.0;
};

struct SuiteResult {
    std::vector<SuiteRecord> records;
    std::vector<SuiteAggregate> aggregates;
};

namespace detail {

inline std::string aggregate_key(const TrainConfig& cfg) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s/%s/lambda=%.3f/shots=%d/epochs=%d",
                  to_string(cfg.method).c_str(), to_string(cfg.variant).c_str(), cfg.lambda,
                  cfg.shots, cfg.epochs);
    return buf;
}

} // namespace detail

inline SuiteRecord execute_suite_run(const SuiteRun& run) {
    SuiteRecord rec;
    rec.run = run;
    try {
        const FrozenEncoderBundle bundle = build_toy_bundle(run.encoder);
        const TaskDataset dataset = generate_synthetic(run.dataset);
        const TrainedState state = train(bundle, dataset, run.train);
        rec.report = evaluate_base_to_new(state, bundle, dataset);
        rec.ok = true;
    } catch (const std::exception& ex) {
        rec.error = ex.what();
    }
    return rec;
}

// Runs are independent; with jobs > 1 they execute on a small thread pool
// and are merged back in grid order, so results match a sequential pass.
inline SuiteResult run_experiment_suite(const std::vector<SuiteRun>& grid, int jobs = 1) {
    if (grid.empty()) throw InvalidInputError("run_experiment_suite: empty grid");
    SuiteResult result;
    result.records.resize(grid.size());

    if (jobs <= 1) {
        for (std::size_t i = 0; i < grid.size(); ++i)
            result.records[i] = execute_suite_run(grid[i]);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= grid.size()) return;
                result.records[i] = execute_suite_run(grid[i]);
            }
        };
        std::vector<std::thread> threads;
        const int n = std::min<int>(jobs, static_cast<int>(grid.size()));
        threads.reserve(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    std::vector<std::string> key_order;
    std::map<std::string, SuiteAggregate> agg;
    for (const auto& rec : result.records) {
        if (!rec.ok) continue;
        const std::string key = detail::aggregate_key(rec.run.train);
        auto it = agg.find(key);
        if (it == agg.end()) {
            key_order.push_back(key);
            it = agg.emplace(key, SuiteAggregate{key, 0, 0.0, 0.0, 0.0}).first;
        }
        auto& a = it->second;
        a.runs += 1;
        a.mean_base += rec.report.base_acc;
        a.mean_new += rec.report.new_acc;
        a.mean_harmonic += rec.report.harmonic;
    }
    for (const auto& key : key_order) {
        auto a = agg[key];
        a.mean_base /= a.runs;
        a.mean_new /= a.runs;
        a.mean_harmonic /= a.runs;
        result.aggregates.push_back(a);
    }
    return result;
}

} // namespace dept
