#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hhfl/engine.hpp"
#include "hhfl/errors.hpp"
#include "hhfl/learner_constants.hpp"
#include "hhfl/topology.hpp"
#include "hhfl/vecmath.hpp"

namespace hhfl {

/// Communication-time ratios relative to the local-compute unit (the time a
/// client needs for E local updates).
struct TimeModel {
    double ratio_ces = 10.0;  ///< T_CES / T_SGD
    double ratio_ecs = 10.0;  ///< T_CES / T_ECS

    void validate() const {
        if (!(ratio_ces > 0.0) || !(ratio_ecs > 0.0))
            throw InvalidConfig("time_model: ratios must be positive");
    }
};

/// Sliding-slope convergence rule: converged at the first evaluation point
/// where the windowed mean accuracy improvement drops below the threshold.
struct ConvergenceCriterion {
    double slope_threshold = 0.001;  ///< accuracy improvement per evaluation point
    int window = 10;                 ///< sliding-window length in evaluation points

    void validate() const {
        if (!(slope_threshold > 0.0)) throw InvalidConfig("criterion: threshold must be > 0");
        if (window < 2) throw InvalidConfig("criterion: window must be >= 2");
    }
};

/// Inputs of the convergence upper bound for lr schedule beta / (t + alpha).
struct BoundConfig {
    ProblemConstants constants;
    std::vector<double> weights_p;
    int local_steps_e = 1;
    int edge_rounds_g = 1;
    double beta = 0.0;
    double alpha = 0.0;
    double delta0 = 0.0;  ///< ||w^0 - w*||^2

    void validate() const {
        constants.require_complete();
        const double mu = constants.strong_convexity_mu;
        const double l = constants.smoothness_l;
        if (local_steps_e < 1 || edge_rounds_g < 1)
            throw InvalidBoundConfig("bound: E and G must be >= 1");
        if (!(beta > 1.0 / mu))
            throw InvalidBoundConfig("bound: requires beta > 1/mu");
        if (!(alpha >= local_steps_e))
            throw InvalidBoundConfig("bound: requires alpha >= E");
        const double eta0 = beta / alpha;
        if (!(eta0 <= 1.0 / mu))
            throw InvalidBoundConfig("bound: requires eta_0 <= 1/mu");
        if (!(eta0 <= 1.0 / (4.0 * l)))
            throw InvalidBoundConfig("bound: requires eta_0 <= 1/(4L)");
        if (delta0 < 0.0) throw InvalidBoundConfig("bound: delta0 must be >= 0");
    }
};

/// Drift bound on sum_i p_i ||wbar - w_i||^2 after one synchronization period:
/// eta^2 * 4^G * H^2 * (GE + G - 2) * [(GE - 1) + E^2 (G - 1)].
inline double drift_bound(int local_steps_e, int edge_rounds_g, double h_sq, double eta) {
    if (local_steps_e < 1 || edge_rounds_g < 1)
        throw InvalidConfig("drift_bound: E and G must be >= 1");
    const double e = local_steps_e, g = edge_rounds_g;
    return eta * eta * std::pow(4.0, g) * h_sq * (g * e + g - 2.0) *
           ((g * e - 1.0) + e * e * (g - 1.0));
}

/// The contraction constant X: sum p_i^2 sigma_i^2 + 6 L Gamma
/// + 2^(2G+1) H^2 (GE + G - 2) [(GE - 1) + E^2 (G - 1)].
inline double corollary2_x(const ProblemConstants& constants, std::span<const double> p,
                           int local_steps_e, int edge_rounds_g) {
    constants.require_complete();
    if (p.size() != constants.sigma_sq.size())
        throw IncompleteConstants("corollary2_x: weight/sigma length mismatch");
    double noise = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        noise += p[i] * p[i] * constants.sigma_sq[i];
    const double e = local_steps_e, g = edge_rounds_g;
    const double drift = std::pow(2.0, 2.0 * g + 1.0) * constants.h_sq * (g * e + g - 2.0) *
                         ((g * e - 1.0) + e * e * (g - 1.0));
    return noise + 6.0 * constants.smoothness_l * constants.gamma + drift;
}

/// Convergence upper bound on E[F(wbar^t)] - F*: (L/2) * Z / (t + alpha) with
/// Z = max{beta^2 X / (beta mu + 1), Delta_0 alpha}.
inline double theorem1_bound(const BoundConfig& cfg, int step) {
    cfg.validate();
    const double x =
        corollary2_x(cfg.constants, cfg.weights_p, cfg.local_steps_e, cfg.edge_rounds_g);
    const double mu = cfg.constants.strong_convexity_mu;
    const double z = std::max(cfg.beta * cfg.beta * x / (cfg.beta * mu + 1.0),
                              cfg.delta0 * cfg.alpha);
    return 0.5 * cfg.constants.smoothness_l * z / (static_cast<double>(step) + cfg.alpha);
}

/// First step whose windowed mean accuracy improvement falls below the
/// threshold; nullopt if the curve never flattens.
inline std::optional<int> detect_convergence(
    std::span<const std::pair<int, double>> accuracy_curve,
    const ConvergenceCriterion& criterion) {
    criterion.validate();
    const int w = criterion.window;
    if (static_cast<int>(accuracy_curve.size()) < w)
        throw InsufficientData("detect_convergence: curve shorter than window (" +
                               std::to_string(accuracy_curve.size()) + " < " +
                               std::to_string(w) + " points)");
    for (std::size_t k = w - 1; k < accuracy_curve.size(); ++k) {
        const double mean_slope =
            (accuracy_curve[k].second - accuracy_curve[k - (w - 1)].second) /
            static_cast<double>(w - 1);
        if (mean_slope < criterion.slope_threshold)
            return accuracy_curve[k].first;
    }
    return std::nullopt;
}

/// Accuracy curve sampled every `stride` steps (the edge-round granularity).
inline std::vector<std::pair<int, double>> accuracy_curve(const TrainingTrace& trace,
                                                          int stride) {
    if (stride < 1) throw InvalidConfig("accuracy_curve: stride must be >= 1");
    std::vector<std::pair<int, double>> curve;
    for (const auto& rec : trace.steps)
        if (rec.step % stride == 0) curve.push_back({rec.step, rec.accuracy});
    return curve;
}

inline int convergence_step(const TrainingTrace& trace, const ConvergenceCriterion& criterion) {
    const auto curve = accuracy_curve(trace, trace.schedule.local_steps_e);
    const auto step = detect_convergence(curve, criterion);
    if (!step)
        throw NoConvergence("trace '" + trace.arch + "' (seed " + std::to_string(trace.seed) +
                            ") never met the convergence criterion");
    return *step;
}

/// Steps-to-convergence ratio baseline / candidate (HFL over HHFL).
inline double efficiency_gain(const TrainingTrace& baseline, const TrainingTrace& candidate,
                              const ConvergenceCriterion& criterion) {
    const int steps_base = convergence_step(baseline, criterion);
    const int steps_cand = convergence_step(candidate, criterion);
    return static_cast<double>(steps_base) / static_cast<double>(steps_cand);
}

/// Overall wall-clock units to finish T local steps: T/E compute units plus
/// ceil(T/E) ES-client exchanges plus ceil(T/EG) CS-ES exchanges.
inline double overall_time(int total_steps, const Schedule& schedule, const TimeModel& tm) {
    if (total_steps < 1) throw InvalidConfig("overall_time: T must be >= 1");
    tm.validate();
    const int e = schedule.local_steps_e;
    const int eg = e * schedule.edge_rounds_g;
    const auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
    return static_cast<double>(total_steps) / e + ceil_div(total_steps, e) * tm.ratio_ces +
           ceil_div(total_steps, eg) * (tm.ratio_ces / tm.ratio_ecs);
}

struct ResourceReport {
    double links_per_round = 0;        ///< sum_i |S_i|
    double r_upper = 0;                ///< sum_i |S_i| / K, conservative bound on R
    double total_client_es_units = 0;  ///< links_per_round x edge rounds (unicast units)
    int edge_rounds = 0;
};

inline ResourceReport resource_report(const Topology& topology, const TrainingTrace& trace) {
    ResourceReport report;
    report.links_per_round = topology.total_links();
    report.r_upper = static_cast<double>(topology.total_links()) /
                     static_cast<double>(topology.num_clients());
    for (const auto& ev : trace.events)
        if (ev.kind == EventKind::edge_agg) ++report.edge_rounds;
    report.total_client_es_units = report.links_per_round * report.edge_rounds;
    return report;
}

/// Unicast-accounted client-ES model transfers accumulated up to `step`
/// (uplink units of every edge aggregation at or before it).
inline double unicast_units_until(const TrainingTrace& trace, int step) {
    double units = 0;
    for (const auto& ev : trace.events)
        if (ev.kind == EventKind::edge_agg && ev.step <= step) units += ev.unicast_units;
    return units;
}

/// Model disagreement D_t = sum_i p_i ||wbar - w_i||^2, the measured
/// counterpart of the drift bound.
inline double disagreement(std::span<const double> p, const std::vector<Vec>& client_params,
                           const Vec& virtual_model) {
    double d = 0.0;
    Vec diff(virtual_model.size());
    for (std::size_t i = 0; i < client_params.size(); ++i) {
        for (std::size_t j = 0; j < diff.size(); ++j)
            diff[j] = virtual_model[j] - client_params[i][j];
        d += p[i] * norm_sq(diff);
    }
    return d;
}

}  // namespace hhfl
