#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

#include "dept/error.hpp"
#include "dept/rng.hpp"

namespace dept {

using Vec = std::vector<double>;

// Dense row-major matrix, sized for desk-scale problems (d <= a few hundred).
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(const Vec& x, const Vec& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double nrm2(const Vec& x) {
    return std::sqrt(dot(x, x));
}

// y = M x
inline Vec matvec(const Mat& m, const Vec& x) {
    if (x.size() != m.cols) throw InvalidInputError("matvec: dimension mismatch");
    Vec y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        const double* row = &m.a[i * m.cols];
        for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

// y = M^T x
inline Vec tmatvec(const Mat& m, const Vec& x) {
    if (x.size() != m.rows) throw InvalidInputError("tmatvec: dimension mismatch");
    Vec y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = &m.a[i * m.cols];
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += row[j] * x[i];
    }
    return y;
}

// M += s * u v^T
inline void outer_add(Mat& m, const Vec& u, const Vec& v, double s = 1.0) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* row = &m.a[i * m.cols];
        const double su = s * u[i];
        for (std::size_t j = 0; j < m.cols; ++j) row[j] += su * v[j];
    }
}

// y += s * x
inline void axpy(Vec& y, const Vec& x, double s) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

inline void axpy(Mat& y, const Mat& x, double s) {
    for (std::size_t i = 0; i < y.a.size(); ++i) y.a[i] += s * x.a[i];
}

inline bool all_finite(const Vec& x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

inline bool all_finite(const Mat& m) {
    for (double v : m.a)
        if (!std::isfinite(v)) return false;
    return true;
}

inline Vec gaussian_vector(Rng& rng, std::size_t n, double sd, double mean = 0.0) {
    std::normal_distribution<double> dist(mean, sd);
    Vec v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

inline Mat gaussian_matrix(Rng& rng, std::size_t r, std::size_t c, double sd, double mean = 0.0) {
    std::normal_distribution<double> dist(mean, sd);
    Mat m(r, c);
    for (auto& x : m.a) x = dist(rng);
    return m;
}

// Solves A X = B for symmetric positive-definite A via in-place Cholesky.
// A is n x n, B is n x m; returns X (n x m).
inline Mat cholesky_solve(Mat a, Mat b) {
    const std::size_t n = a.rows;
    if (a.cols != n || b.rows != n) throw InvalidInputError("cholesky_solve: shape mismatch");
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= a(j, k) * a(j, k);
        if (diag <= 0.0) throw InvalidInputError("cholesky_solve: matrix not positive definite");
        diag = std::sqrt(diag);
        a(j, j) = diag;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= a(i, k) * a(j, k);
            a(i, j) = v / diag;
        }
    }
    Mat x = b;
    for (std::size_t c = 0; c < x.cols; ++c) {
        for (std::size_t i = 0; i < n; ++i) { // L y = b
            double v = x(i, c);
            for (std::size_t k = 0; k < i; ++k) v -= a(i, k) * x(k, c);
            x(i, c) = v / a(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) { // L^T x = y
            double v = x(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k) v -= a(k, ii) * x(k, c);
            x(ii, c) = v / a(ii, ii);
        }
    }
    return x;
}

// FNV-1a over the raw bytes of a sequence of doubles; used for frozen-weight
// conservation checks.
inline std::uint64_t hash_doubles(std::uint64_t h, const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &p[i], sizeof(bits));
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

} // namespace dept
