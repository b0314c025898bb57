#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hhfl/dataset.hpp"
#include "hhfl/errors.hpp"
#include "hhfl/learner_constants.hpp"
#include "hhfl/partition.hpp"
#include "hhfl/quadratics.hpp"
#include "hhfl/rng.hpp"
#include "hhfl/vecmath.hpp"

namespace hhfl {

struct Metrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// A stateless differentiable model over a labeled dataset. Parameters are
/// flat vectors passed in and out; batches are index spans into the dataset.
class Learner {
public:
    virtual ~Learner() = default;
    virtual const char* kind() const = 0;
    virtual int dim() const = 0;
    virtual Vec init_params(std::uint64_t seed) const = 0;
    virtual double loss(std::span<const double> params, const LabeledDataset& data,
                        std::span<const int> batch) const = 0;
    virtual void gradient(std::span<const double> params, const LabeledDataset& data,
                          std::span<const int> batch, std::span<double> out) const = 0;

    virtual Metrics metrics(std::span<const double> params, const LabeledDataset& data,
                            std::span<const int> indices) const {
        Metrics m;
        m.loss = loss(params, data, indices);
        int correct = 0;
        for (int s : indices)
            if (predict(params, data.row(s)) == data.labels[s]) ++correct;
        m.accuracy = indices.empty() ? 0.0 : static_cast<double>(correct) / indices.size();
        return m;
    }

    virtual int predict(std::span<const double> params, std::span<const double> x) const = 0;
};

namespace detail {
inline void softmax_inplace(std::span<double> z) {
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

inline Vec gaussian_init(int count, int fan_in, std::uint64_t seed, std::uint64_t layer) {
    Vec w(count);
    RngStream rng = substream(seed, 0x1217u, layer);
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w) v = scale * rng.next_gaussian();
    return w;
}
}  // namespace detail

/// Multinomial logistic regression with bias, softmax cross-entropy loss.
class LogisticLearner : public Learner {
public:
    LogisticLearner(int feature_dim, int num_classes)
        : d_(feature_dim), c_(num_classes) {}

    const char* kind() const override { return "logistic"; }
    int dim() const override { return c_ * (d_ + 1); }

    Vec init_params(std::uint64_t seed) const override {
        return detail::gaussian_init(dim(), d_ + 1, seed, 0);
    }

    double loss(std::span<const double> params, const LabeledDataset& data,
                std::span<const int> batch) const override {
        if (batch.empty()) throw InvalidConfig("logistic: empty batch");
        Vec z(c_);
        double total = 0.0;
        for (int s : batch) {
            logits(params, data.row(s), z);
            detail::softmax_inplace(z);
            total -= std::log(std::max(z[data.labels[s]], 1e-300));
        }
        return total / static_cast<double>(batch.size());
    }

    void gradient(std::span<const double> params, const LabeledDataset& data,
                  std::span<const int> batch, std::span<double> out) const override {
        if (batch.empty()) throw InvalidConfig("logistic: empty batch");
        std::fill(out.begin(), out.end(), 0.0);
        Vec z(c_);
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        for (int s : batch) {
            const auto x = data.row(s);
            logits(params, x, z);
            detail::softmax_inplace(z);
            for (int c = 0; c < c_; ++c) {
                const double err = (z[c] - (c == data.labels[s] ? 1.0 : 0.0)) * inv_b;
                double* g = out.data() + static_cast<std::size_t>(c) * (d_ + 1);
                for (int j = 0; j < d_; ++j) g[j] += err * x[j];
                g[d_] += err;
            }
        }
    }

    int predict(std::span<const double> params, std::span<const double> x) const override {
        Vec z(c_);
        logits(params, x, z);
        return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }

private:
    void logits(std::span<const double> params, std::span<const double> x, Vec& z) const {
        for (int c = 0; c < c_; ++c) {
            const double* w = params.data() + static_cast<std::size_t>(c) * (d_ + 1);
            double s = w[d_];
            for (int j = 0; j < d_; ++j) s += w[j] * x[j];
            z[c] = s;
        }
    }

    int d_;
    int c_;
};

/// One-hidden-layer tanh network with softmax cross-entropy loss; the
/// non-convex model at desk scale.
class MlpLearner : public Learner {
public:
    MlpLearner(int feature_dim, int hidden, int num_classes)
        : d_(feature_dim), h_(hidden), c_(num_classes) {}

    const char* kind() const override { return "mlp"; }
    int dim() const override { return h_ * (d_ + 1) + c_ * (h_ + 1); }

    Vec init_params(std::uint64_t seed) const override {
        Vec w = detail::gaussian_init(h_ * (d_ + 1), d_ + 1, seed, 0);
        const Vec w2 = detail::gaussian_init(c_ * (h_ + 1), h_ + 1, seed, 1);
        w.insert(w.end(), w2.begin(), w2.end());
        return w;
    }

    double loss(std::span<const double> params, const LabeledDataset& data,
                std::span<const int> batch) const override {
        if (batch.empty()) throw InvalidConfig("mlp: empty batch");
        Vec hidden(h_), z(c_);
        double total = 0.0;
        for (int s : batch) {
            forward(params, data.row(s), hidden, z);
            detail::softmax_inplace(z);
            total -= std::log(std::max(z[data.labels[s]], 1e-300));
        }
        return total / static_cast<double>(batch.size());
    }

    void gradient(std::span<const double> params, const LabeledDataset& data,
                  std::span<const int> batch, std::span<double> out) const override {
        if (batch.empty()) throw InvalidConfig("mlp: empty batch");
        std::fill(out.begin(), out.end(), 0.0);
        const double* w1 = params.data();
        const double* w2 = params.data() + static_cast<std::size_t>(h_) * (d_ + 1);
        double* g1 = out.data();
        double* g2 = out.data() + static_cast<std::size_t>(h_) * (d_ + 1);
        Vec hidden(h_), z(c_), dhidden(h_);
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        for (int s : batch) {
            const auto x = data.row(s);
            forward(params, x, hidden, z);
            detail::softmax_inplace(z);
            std::fill(dhidden.begin(), dhidden.end(), 0.0);
            for (int c = 0; c < c_; ++c) {
                const double dz = (z[c] - (c == data.labels[s] ? 1.0 : 0.0)) * inv_b;
                const double* row = w2 + static_cast<std::size_t>(c) * (h_ + 1);
                double* grow = g2 + static_cast<std::size_t>(c) * (h_ + 1);
                for (int j = 0; j < h_; ++j) {
                    grow[j] += dz * hidden[j];
                    dhidden[j] += dz * row[j];
                }
                grow[h_] += dz;
            }
            for (int j = 0; j < h_; ++j) {
                const double dpre = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
                double* grow = g1 + static_cast<std::size_t>(j) * (d_ + 1);
                for (int f = 0; f < d_; ++f) grow[f] += dpre * x[f];
                grow[d_] += dpre;
            }
        }
        (void)w1;
    }

    int predict(std::span<const double> params, std::span<const double> x) const override {
        Vec hidden(h_), z(c_);
        forward(params, x, hidden, z);
        return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }

private:
    void forward(std::span<const double> params, std::span<const double> x, Vec& hidden,
                 Vec& z) const {
        const double* w1 = params.data();
        const double* w2 = params.data() + static_cast<std::size_t>(h_) * (d_ + 1);
        for (int j = 0; j < h_; ++j) {
            const double* row = w1 + static_cast<std::size_t>(j) * (d_ + 1);
            double s = row[d_];
            for (int f = 0; f < d_; ++f) s += row[f] * x[f];
            hidden[j] = std::tanh(s);
        }
        for (int c = 0; c < c_; ++c) {
            const double* row = w2 + static_cast<std::size_t>(c) * (h_ + 1);
            double s = row[h_];
            for (int j = 0; j < h_; ++j) s += row[j] * hidden[j];
            z[c] = s;
        }
    }

    int d_;
    int h_;
    int c_;
};

/// Nonincreasing learning-rate schedule over global steps.
class LrSchedule {
public:
    /// init * factor^floor(step / steps_per_epoch); factor in (0, 1].
    static LrSchedule exp_decay(double init, double factor_per_epoch, int steps_per_epoch) {
        if (!(init > 0.0) || !(factor_per_epoch > 0.0) || factor_per_epoch > 1.0 ||
            steps_per_epoch < 1)
            throw InvalidConfig("LrSchedule: exp_decay needs init > 0, factor in (0,1], "
                                "steps_per_epoch >= 1");
        LrSchedule s;
        s.kind_ = Kind::exp_decay;
        s.a_ = init;
        s.b_ = factor_per_epoch;
        s.steps_per_epoch_ = steps_per_epoch;
        return s;
    }

    /// beta / (step + alpha), the Theorem-style schedule.
    static LrSchedule inverse(double beta, double alpha) {
        if (!(beta > 0.0) || !(alpha > 0.0))
            throw InvalidConfig("LrSchedule: inverse needs beta > 0 and alpha > 0");
        LrSchedule s;
        s.kind_ = Kind::inverse;
        s.a_ = beta;
        s.b_ = alpha;
        return s;
    }

    double value(int step) const {
        if (kind_ == Kind::exp_decay) return a_ * std::pow(b_, step / steps_per_epoch_);
        return a_ / (static_cast<double>(step) + b_);
    }

private:
    enum class Kind { exp_decay, inverse };
    Kind kind_ = Kind::inverse;
    double a_ = 1.0;
    double b_ = 1.0;
    int steps_per_epoch_ = 1;
};

/// One mini-batch SGD step: params - lr * gradient. The input is untouched.
inline Vec sgd_step(const Learner& learner, std::span<const double> params,
                    const LabeledDataset& data, std::span<const int> batch, double lr) {
    if (!(lr > 0.0)) throw InvalidConfig("sgd_step: lr must be positive");
    Vec grad(params.size());
    learner.gradient(params, data, batch, grad);
    if (!all_finite(grad))
        throw NumericFailure("sgd_step: non-finite gradient (" + std::string(learner.kind()) +
                                 ")",
                             -1, -1);
    Vec next(params.begin(), params.end());
    axpy(-lr, grad, next);
    return next;
}

/// Componentwise max relative error between the analytic gradient and central
/// finite differences (h = 1e-5).
inline double grad_check(const Learner& learner, std::span<const double> params,
                         const LabeledDataset& data, std::span<const int> batch) {
    if (batch.empty()) throw InvalidConfig("grad_check: empty batch");
    Vec analytic(params.size());
    learner.gradient(params, data, batch, analytic);

    const double h = 1e-5;
    Vec probe(params.begin(), params.end());
    double worst = 0.0;
    for (std::size_t j = 0; j < probe.size(); ++j) {
        const double saved = probe[j];
        probe[j] = saved + h;
        const double up = learner.loss(probe, data, batch);
        probe[j] = saved - h;
        const double down = learner.loss(probe, data, batch);
        probe[j] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double scale = std::max({1.0, std::fabs(fd), std::fabs(analytic[j])});
        worst = std::max(worst, std::fabs(fd - analytic[j]) / scale);
    }
    return worst;
}

/// Exact constants for closed-form quadratic families.
inline ProblemConstants estimate_constants(const QuadraticFamily& family) {
    return family.constants;
}

/// Empirical constants for data-driven learners: H from the largest stochastic
/// gradient seen over the probes, sigma_i^2 from batch-vs-full gradient
/// variance, L from power iteration on finite-difference Hessian-vector
/// products. mu and F* are left unset (flagged via exact = false).
inline ProblemConstants estimate_constants(const Learner& learner, const LabeledDataset& data,
                                           const Assignment& assignment, int probes,
                                           std::uint64_t rng_seed, int batch_size = 20) {
    if (probes < 1) throw InvalidConfig("estimate_constants: probes must be >= 1");
    const int k = static_cast<int>(assignment.shards.size());
    ProblemConstants cst;
    cst.exact = false;
    cst.strong_convexity_mu = 0.0;
    cst.sigma_sq.assign(k, 0.0);

    const int dim = learner.dim();
    Vec grad(dim), full(dim), diff(dim);
    double h_sq = 0.0;
    double l_max = 0.0;

    for (int probe = 0; probe < probes; ++probe) {
        RngStream rng = substream(rng_seed, 0xC057u, static_cast<std::uint64_t>(probe));
        Vec w = learner.init_params(rng.next_u64());
        for (double& v : w) v += 0.1 * rng.next_gaussian();

        for (int i = 0; i < k; ++i) {
            const auto& shard = assignment.shards[i];
            if (shard.empty()) continue;
            learner.gradient(w, data, shard, full);
            std::vector<int> batch(std::min<std::size_t>(batch_size, shard.size()));
            for (auto& s : batch) s = shard[rng.next_below(shard.size())];
            learner.gradient(w, data, batch, grad);
            h_sq = std::max(h_sq, norm_sq(grad));
            for (int j = 0; j < dim; ++j) diff[j] = grad[j] - full[j];
            cst.sigma_sq[i] += norm_sq(diff) / probes;
        }

        // Power iteration for ||Hessian||_2 via central differences.
        Vec v(dim), hv(dim), shifted(dim);
        for (double& x : v) x = rng.next_gaussian();
        double lambda = 0.0;
        const double eps = 1e-4;
        std::vector<int> all(data.size());
        for (int s = 0; s < data.size(); ++s) all[s] = s;
        for (int it = 0; it < 12; ++it) {
            const double len = norm(v);
            if (len == 0.0) break;
            for (double& x : v) x /= len;
            for (int j = 0; j < dim; ++j) shifted[j] = w[j] + eps * v[j];
            learner.gradient(shifted, data, all, hv);
            for (int j = 0; j < dim; ++j) shifted[j] = w[j] - eps * v[j];
            learner.gradient(shifted, data, all, grad);
            for (int j = 0; j < dim; ++j) hv[j] = (hv[j] - grad[j]) / (2.0 * eps);
            lambda = norm(hv);
            v = hv;
        }
        l_max = std::max(l_max, lambda);
    }
    cst.h_sq = h_sq;
    cst.smoothness_l = l_max;
    return cst;
}

}  // namespace hhfl
