#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hhfl/errors.hpp"

namespace hhfl {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }

inline double norm(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// y = M x for a row-major d x d matrix.
inline void matvec(std::span<const double> m, std::span<const double> x, std::span<double> y) {
    const std::size_t d = x.size();
    for (std::size_t r = 0; r < d; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += m[r * d + c] * x[c];
        y[r] = s;
    }
}

/// Solves A x = b in place via partial-pivot LU; A is row-major d x d and
/// gets destroyed. Small dense systems only.
inline Vec solve_dense(Vec a, Vec b) {
    const std::size_t d = b.size();
    std::vector<std::size_t> piv(d);
    for (std::size_t i = 0; i < d; ++i) piv[i] = i;
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t best = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::fabs(a[r * d + col]) > std::fabs(a[best * d + col])) best = r;
        if (a[best * d + col] == 0.0) throw NumericFailure("solve_dense: singular matrix", -1, -1);
        if (best != col) {
            for (std::size_t c = 0; c < d; ++c) std::swap(a[col * d + c], a[best * d + c]);
            std::swap(b[col], b[best]);
        }
        for (std::size_t r = col + 1; r < d; ++r) {
            const double f = a[r * d + col] / a[col * d + col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < d; ++c) a[r * d + c] -= f * a[col * d + c];
            b[r] -= f * b[col];
        }
    }
    Vec x(d);
    for (std::size_t ri = d; ri-- > 0;) {
        double s = b[ri];
        for (std::size_t c = ri + 1; c < d; ++c) s -= a[ri * d + c] * x[c];
        x[ri] = s / a[ri * d + ri];
    }
    return x;
}

}  // namespace hhfl
