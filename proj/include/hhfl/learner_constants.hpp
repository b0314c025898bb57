#pragma once

#include <vector>

#include "hhfl/errors.hpp"

namespace hhfl {

/// Smoothness / convexity / noise constants of a training problem, either
/// exact (closed-form synthetic objectives) or empirical estimates.
struct ProblemConstants {
    double smoothness_l = 0.0;        ///< L
    double strong_convexity_mu = 0.0; ///< mu; 0 = unknown or non-convex
    std::vector<double> sigma_sq;     ///< per-client gradient-noise variance
    double h_sq = 0.0;                ///< uniform bound on E||stochastic gradient||^2
    double gamma = 0.0;               ///< F* - sum_k p_k F_k*
    double f_star = 0.0;
    std::vector<double> f_k_star;
    bool exact = false;

    void require_complete() const {
        if (!(strong_convexity_mu > 0.0))
            throw IncompleteConstants("constants: mu not available (non-convex or estimated)");
        if (!(smoothness_l > 0.0)) throw IncompleteConstants("constants: L not available");
        if (sigma_sq.empty()) throw IncompleteConstants("constants: sigma_sq not available");
    }
};

}  // namespace hhfl
