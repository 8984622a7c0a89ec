#pragma once

#include <string>
#include <vector>

#include "dept/linalg.hpp"

namespace dept {

// A d-dimensional embedding produced by either encoder.
using FeatureVector = Vec;

// Class-conditional probabilities over the task's M classes.
using ProbabilityVector = Vec;

// A class is identified by a name plus a fixed semantic vector; the toy text
// encoder embeds the vector, so no tokenizer is involved.
struct ClassToken {
    std::string name;
    Vec values;
};

// The l trainable context vectors prepended to every class token.
struct PromptContext {
    Mat vectors; // l x e
    bool trainable = true;

    std::size_t length() const { return vectors.rows; }
    std::size_t width() const { return vectors.cols; }
};

inline bool is_probability_vector(const Vec& p, double sum_tol = 1e-6) {
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) return false;
        s += v;
    }
    return std::abs(s - 1.0) <= sum_tol;
}

} // namespace dept
