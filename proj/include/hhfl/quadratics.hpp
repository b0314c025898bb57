#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hhfl/errors.hpp"
#include "hhfl/learner_constants.hpp"
#include "hhfl/rng.hpp"
#include "hhfl/topology.hpp"
#include "hhfl/vecmath.hpp"

namespace hhfl {

/// One client's objective F_i(w) = 1/2 (w-a)' A (w-a) + b with
/// A = Q diag(eigenvalues) Q'. Stochastic gradients add bounded noise drawn
/// uniformly from [-c, c]^d with c chosen so E||noise||^2 = sigma^2
/// (hence ||noise||^2 <= 3 sigma^2).
struct QuadraticClient {
    Vec eigenvalues;  ///< length d
    Vec rotation;     ///< d x d orthogonal Q, row-major
    Vec center;       ///< a_i
    double offset = 0.0;
    double noise_sigma = 0.0;

    int dim() const { return static_cast<int>(center.size()); }

    /// y = A x
    void hessian_apply(std::span<const double> x, std::span<double> y) const {
        const std::size_t d = center.size();
        Vec tmp(d);
        // Q' x
        for (std::size_t r = 0; r < d; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += rotation[c * d + r] * x[c];
            tmp[r] = s * eigenvalues[r];
        }
        matvec(rotation, tmp, y);
    }

    double value(std::span<const double> w) const {
        const std::size_t d = center.size();
        Vec diff(d);
        for (std::size_t j = 0; j < d; ++j) diff[j] = w[j] - center[j];
        Vec adiff(d);
        hessian_apply(diff, adiff);
        return 0.5 * dot(diff, adiff) + offset;
    }

    void gradient(std::span<const double> w, std::span<double> out) const {
        const std::size_t d = center.size();
        Vec diff(d);
        for (std::size_t j = 0; j < d; ++j) diff[j] = w[j] - center[j];
        hessian_apply(diff, out);
    }

    void stochastic_gradient(std::span<const double> w, RngStream& rng,
                             std::span<double> out) const {
        gradient(w, out);
        if (noise_sigma > 0.0) {
            const double c = noise_sigma * std::sqrt(3.0 / dim());
            for (std::size_t j = 0; j < center.size(); ++j)
                out[j] += c * (2.0 * rng.next_double() - 1.0);
        }
    }
};

/// A family of per-client quadratics with exact problem constants.
struct QuadraticFamily {
    std::vector<QuadraticClient> clients;
    std::vector<double> weights;  ///< p_i from the topology
    int dim = 0;
    Vec w_star;                   ///< argmin of sum_i p_i F_i
    ProblemConstants constants;

    double global_value(std::span<const double> w) const {
        double v = 0.0;
        for (std::size_t i = 0; i < clients.size(); ++i) v += weights[i] * clients[i].value(w);
        return v;
    }

    void global_gradient(std::span<const double> w, std::span<double> out) const {
        Vec g(dim);
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < clients.size(); ++i) {
            clients[i].gradient(w, g);
            axpy(weights[i], g, out);
        }
    }

    /// Valid bound on E||grad F_i(w, xi)||^2 for all w within `radius` of the
    /// origin: (L (radius + ||a_i||) + sigma_i sqrt(3))^2 maximized over i.
    double stoch_grad_sq_bound(double radius) const {
        double h_sq = 0.0;
        for (const auto& cl : clients) {
            const double reach = constants.smoothness_l * (radius + norm(cl.center)) +
                                 cl.noise_sigma * std::sqrt(3.0);
            h_sq = std::max(h_sq, reach * reach);
        }
        return h_sq;
    }
};

struct QuadraticOptions {
    double eig_min = 0.5;      ///< strong convexity mu
    double eig_max = 2.0;      ///< smoothness L
    double noise_sigma = 0.0;  ///< per-client gradient noise, uniform across clients
    double h_radius = 10.0;    ///< trajectory ball radius used for the H bound
};

namespace detail {
/// Random orthogonal matrix via Gram-Schmidt on a Gaussian matrix.
inline Vec random_rotation(int d, RngStream& rng) {
    Vec q(static_cast<std::size_t>(d) * d);
    for (double& v : q) v = rng.next_gaussian();
    for (int r = 0; r < d; ++r) {
        std::span<double> row(q.data() + static_cast<std::size_t>(r) * d,
                              static_cast<std::size_t>(d));
        for (int prev = 0; prev < r; ++prev) {
            std::span<const double> prow(q.data() + static_cast<std::size_t>(prev) * d,
                                         static_cast<std::size_t>(d));
            axpy(-dot(row, prow), prow, row);
        }
        double len = norm(row);
        if (len < 1e-8) {
            // Degenerate draw; fall back to a unit axis and re-orthogonalize.
            std::fill(row.begin(), row.end(), 0.0);
            row[r] = 1.0;
            for (int prev = 0; prev < r; ++prev) {
                std::span<const double> prow(q.data() + static_cast<std::size_t>(prev) * d,
                                             static_cast<std::size_t>(d));
                axpy(-dot(row, prow), prow, row);
            }
            len = norm(row);
        }
        for (double& v : row) v /= len;
    }
    return q;
}
}  // namespace detail

/// Builds per-client quadratic objectives over the topology's client set.
/// Eigenvalues lie in [eig_min, eig_max] with both endpoints attained, so the
/// returned L and mu are exact; per-client optima are spread with radius
/// proportional to `heterogeneity`; the global optimum, F*, per-client F_k*,
/// and Gamma are computed in closed form.
inline QuadraticFamily synth_quadratics(const Topology& topology, int dim, double heterogeneity,
                                        std::uint64_t rng_seed,
                                        const QuadraticOptions& opts = {}) {
    if (dim < 1) throw InvalidConfig("synth_quadratics: dim must be >= 1");
    if (heterogeneity < 0) throw InvalidConfig("synth_quadratics: heterogeneity must be >= 0");
    if (!(opts.eig_max >= opts.eig_min) || opts.eig_min <= 0.0)
        throw InvalidConfig("synth_quadratics: need 0 < eig_min <= eig_max");

    const int k = topology.num_clients();
    QuadraticFamily family;
    family.dim = dim;
    family.weights = topology.p;
    family.clients.resize(k);

    for (int i = 0; i < k; ++i) {
        RngStream rng = substream(rng_seed, 0x5144u /*"QD"*/, static_cast<std::uint64_t>(i));
        auto& cl = family.clients[i];
        cl.eigenvalues.resize(dim);
        for (int j = 0; j < dim; ++j)
            cl.eigenvalues[j] =
                opts.eig_min + (opts.eig_max - opts.eig_min) * rng.next_double();
        // Pin the extremes on client 0 so L and mu are exact family-wide.
        if (i == 0) {
            cl.eigenvalues[0] = opts.eig_max;
            cl.eigenvalues[dim - 1] = opts.eig_min;
        }
        cl.rotation = dim == 1 ? Vec{1.0} : detail::random_rotation(dim, rng);
        cl.center.resize(dim);
        if (heterogeneity > 0.0) {
            for (int j = 0; j < dim; ++j) cl.center[j] = rng.next_gaussian();
            const double len = norm(cl.center);
            const double radius = heterogeneity * (0.5 + 0.5 * rng.next_double());
            if (len > 0.0)
                for (double& v : cl.center) v *= radius / len;
        }
        cl.offset = 0.0;
        cl.noise_sigma = opts.noise_sigma;
    }

    // Global optimum: (sum p_i A_i) w = sum p_i A_i a_i.
    Vec lhs(static_cast<std::size_t>(dim) * dim, 0.0);
    Vec rhs(dim, 0.0);
    Vec col(dim), acol(dim);
    for (int i = 0; i < k; ++i) {
        const auto& cl = family.clients[i];
        for (int c = 0; c < dim; ++c) {
            std::fill(col.begin(), col.end(), 0.0);
            col[c] = 1.0;
            cl.hessian_apply(col, acol);
            for (int r = 0; r < dim; ++r) lhs[static_cast<std::size_t>(r) * dim + c] +=
                family.weights[i] * acol[r];
        }
        cl.hessian_apply(cl.center, acol);
        axpy(family.weights[i], acol, rhs);
    }
    family.w_star = solve_dense(lhs, rhs);

    auto& cst = family.constants;
    cst.smoothness_l = opts.eig_max;
    cst.strong_convexity_mu = opts.eig_min;
    cst.sigma_sq.assign(k, opts.noise_sigma * opts.noise_sigma);
    cst.f_star = family.global_value(family.w_star);
    cst.f_k_star.resize(k);
    cst.gamma = cst.f_star;
    for (int i = 0; i < k; ++i) {
        cst.f_k_star[i] = family.clients[i].offset;
        cst.gamma -= family.weights[i] * cst.f_k_star[i];
    }
    cst.h_sq = family.stoch_grad_sq_bound(opts.h_radius);
    cst.exact = true;
    return family;
}

}  // namespace hhfl
