#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hhfl/analysis.hpp"
#include "hhfl/dataset.hpp"
#include "hhfl/engine.hpp"
#include "hhfl/learner.hpp"
#include "hhfl/quadratics.hpp"
#include "hhfl/rng.hpp"
#include "hhfl/topology.hpp"

namespace hhfl {

/// Learner adapter over a single quadratic objective; batches are ignored,
/// which makes the shared finite-difference checker applicable.
class QuadraticLearner : public Learner {
public:
    explicit QuadraticLearner(QuadraticClient client) : client_(std::move(client)) {}

    const char* kind() const override { return "quadratic"; }
    int dim() const override { return client_.dim(); }

    Vec init_params(std::uint64_t seed) const override {
        RngStream rng = substream(seed, 0x1217u, 0);
        Vec w(client_.dim());
        for (double& v : w) v = rng.next_gaussian();
        return w;
    }

    double loss(std::span<const double> params, const LabeledDataset&,
                std::span<const int>) const override {
        return client_.value(params);
    }

    void gradient(std::span<const double> params, const LabeledDataset&, std::span<const int>,
                  std::span<double> out) const override {
        client_.gradient(params, out);
    }

    int predict(std::span<const double>, std::span<const double>) const override { return 0; }

private:
    QuadraticClient client_;
};

/// Random small multi-connectivity layout; every ES ends up covering at least
/// one client.
inline TopologySpec random_topology_spec(RngStream& rng, int max_clients, int max_es) {
    TopologySpec spec;
    spec.num_es = 1 + static_cast<int>(rng.next_below(max_es));
    spec.num_clients =
        std::max(spec.num_es, 2 + static_cast<int>(rng.next_below(max_clients - 1)));
    spec.layout_tag = "random";
    spec.connectivity.resize(spec.num_clients);
    for (auto& conn : spec.connectivity) {
        const int deg = 1 + static_cast<int>(rng.next_below(spec.num_es));
        std::vector<int> all(spec.num_es);
        for (int n = 0; n < spec.num_es; ++n) all[n] = n;
        rng.shuffle(all);
        conn.assign(all.begin(), all.begin() + deg);
        std::sort(conn.begin(), conn.end());
    }
    // Patch uncovered ESs.
    std::vector<bool> covered(spec.num_es, false);
    for (const auto& conn : spec.connectivity)
        for (int n : conn) covered[n] = true;
    for (int n = 0; n < spec.num_es; ++n) {
        if (covered[n]) continue;
        auto& conn = spec.connectivity[rng.next_below(spec.num_clients)];
        conn.push_back(n);
        std::sort(conn.begin(), conn.end());
        conn.erase(std::unique(conn.begin(), conn.end()), conn.end());
    }
    if (rng.next_below(2) == 0) {
        spec.data_weights.resize(spec.num_clients);
        for (double& w : spec.data_weights) w = 0.5 + rng.next_double();
    }
    return spec;
}

inline std::string describe_topology(const TopologySpec& spec) {
    std::ostringstream out;
    out << "K=" << spec.num_clients << " N=" << spec.num_es << " S={";
    for (int i = 0; i < spec.num_clients; ++i) {
        if (i) out << ";";
        for (std::size_t j = 0; j < spec.connectivity[i].size(); ++j) {
            if (j) out << "+";
            out << spec.connectivity[i][j];
        }
    }
    out << "}";
    return out.str();
}

/// Lemma-2 conservation, cloud-round synchrony, and aggregation coefficient
/// probes over random topologies. Returns true when every instance passes.
inline bool verify_conservation(std::uint64_t seed, int trials, std::ostream& log,
                                double rel_tol = 1e-9, double coef_tol = 1e-12) {
    log << "[conservation] seed=" << seed << " trials=" << trials << "\n";
    for (int trial = 0; trial < trials; ++trial) {
        RngStream rng = substream(seed, 0xC04Eu, static_cast<std::uint64_t>(trial));
        const TopologySpec spec = random_topology_spec(rng, 20, 4);
        const Topology topo = build_topology(spec);

        Schedule sched;
        // Cycle through schedules so every branch of the step law is hit.
        sched.local_steps_e = 1 + trial % 3;
        sched.edge_rounds_g = 1 + (trial / 3) % 3;
        sched.total_steps_t = 2 * sched.local_steps_e * sched.edge_rounds_g;

        QuadraticOptions opts;
        opts.noise_sigma = 0.05;
        const QuadraticFamily family =
            synth_quadratics(topo, 3, 1.0, rng.next_u64(), opts);
        QuadraticProblem problem(family, rng.next_u64());
        const LrSchedule lr = LrSchedule::inverse(1.0, 20.0);

        bool ok = true;
        int bad_step = -1;
        double bad_value = 0.0;
        const auto probe = [&](const StepProbe& p) {
            if (p.step == 0 || !ok) return;
            Vec vbar(family.dim, 0.0);
            for (int i = 0; i < topo.num_clients(); ++i)
                axpy(topo.p[i], p.client_intermediate[i], vbar);
            Vec diff = vbar;
            axpy(-1.0, p.virtual_model, diff);
            const double rel = norm(diff) / std::max(1.0, norm(vbar));
            if (rel > rel_tol) {
                ok = false;
                bad_step = p.step;
                bad_value = rel;
                return;
            }
            if (p.step % (sched.local_steps_e * sched.edge_rounds_g) == 0) {
                for (int i = 1; i < topo.num_clients(); ++i) {
                    Vec d = p.client_params[i];
                    axpy(-1.0, p.client_params[0], d);
                    if (norm(d) > 1e-12 * std::max(1.0, norm(p.client_params[0]))) {
                        ok = false;
                        bad_step = p.step;
                        bad_value = norm(d);
                        return;
                    }
                }
            }
        };
        run_hhfl(topo, problem, sched, lr, rng.next_u64(), probe);
        if (!ok) {
            log << "[conservation] FAIL trial " << trial << " step " << bad_step
                << " rel_err=" << bad_value << " " << describe_topology(spec) << "\n";
            return false;
        }

        // One-hot probes: the nested edge-then-cloud form must weight client i
        // by exactly p_i, nonnegative and summing to one.
        double coef_sum = 0.0;
        for (int i = 0; i < topo.num_clients(); ++i) {
            std::vector<Vec> params(topo.num_clients(), Vec(1, 0.0));
            params[i][0] = 1.0;
            std::vector<Vec> es(topo.num_es());
            for (int n = 0; n < topo.num_es(); ++n) es[n] = edge_aggregate(topo, params, n);
            const double coef = cloud_aggregate(topo, es)[0];
            coef_sum += coef;
            if (coef < 0.0 || std::fabs(coef - topo.p[i]) > coef_tol) {
                log << "[conservation] FAIL trial " << trial << " coefficient of client " << i
                    << " = " << coef << " expected p=" << topo.p[i] << " "
                    << describe_topology(spec) << "\n";
                return false;
            }
        }
        if (std::fabs(coef_sum - 1.0) > coef_tol) {
            log << "[conservation] FAIL trial " << trial << " coefficients sum to " << coef_sum
                << " " << describe_topology(spec) << "\n";
            return false;
        }
    }
    log << "[conservation] OK\n";
    return true;
}

/// hhfl reduces to hier_fedavg when every client has single coverage.
inline bool verify_reduction(std::uint64_t seed, int trials, std::ostream& log,
                             double tol = 1e-12) {
    log << "[reduction] seed=" << seed << " trials=" << trials << "\n";
    for (int trial = 0; trial < trials; ++trial) {
        RngStream rng = substream(seed, 0x2EDCu, static_cast<std::uint64_t>(trial));
        TopologySpec spec = random_topology_spec(rng, 12, 4);
        // Collapse to single coverage: the first N clients pin one ES each,
        // the rest pick a random one.
        for (int i = 0; i < spec.num_clients; ++i)
            spec.connectivity[i] = {i < spec.num_es
                                        ? i
                                        : static_cast<int>(rng.next_below(spec.num_es))};
        const Topology topo = build_topology(spec);
        const SingleAssignment single = to_single_assignment(topo, rng.next_u64());

        Schedule sched;
        sched.local_steps_e = 1 + trial % 3;
        sched.edge_rounds_g = 1 + (trial / 2) % 3;
        sched.total_steps_t = 3 * sched.local_steps_e * sched.edge_rounds_g;

        QuadraticOptions opts;
        opts.noise_sigma = 0.05;
        const QuadraticFamily family = synth_quadratics(topo, 3, 1.0, rng.next_u64(), opts);
        const LrSchedule lr = LrSchedule::inverse(1.0, 20.0);
        const std::uint64_t run_seed = rng.next_u64();

        std::vector<std::vector<Vec>> hist_a, hist_b;
        {
            QuadraticProblem problem(family, run_seed);
            run_hhfl(topo, problem, sched, lr, run_seed,
                     [&](const StepProbe& p) { hist_a.push_back(p.client_params); });
        }
        {
            QuadraticProblem problem(family, run_seed);
            run_hier_fedavg(single, problem, sched, lr, run_seed,
                            [&](const StepProbe& p) { hist_b.push_back(p.client_params); });
        }
        for (std::size_t t = 0; t < hist_a.size(); ++t)
            for (std::size_t i = 0; i < hist_a[t].size(); ++i)
                for (std::size_t j = 0; j < hist_a[t][i].size(); ++j)
                    if (std::fabs(hist_a[t][i][j] - hist_b[t][i][j]) > tol) {
                        log << "[reduction] FAIL trial " << trial << " step " << t << " client "
                            << i << " delta="
                            << std::fabs(hist_a[t][i][j] - hist_b[t][i][j]) << " "
                            << describe_topology(spec) << "\n";
                        return false;
                    }
    }
    log << "[reduction] OK\n";
    return true;
}

/// Pointwise dominance of the convergence bound on exact quadratic instances.
inline bool verify_bounds(std::uint64_t seed, int instances, std::ostream& log,
                          int total_steps = 500) {
    log << "[bounds] seed=" << seed << " instances=" << instances << "\n";
    const std::pair<int, int> grids[] = {{1, 1}, {2, 1}, {1, 2}, {2, 2}, {5, 5}};
    for (int inst = 0; inst < instances; ++inst) {
        RngStream rng = substream(seed, 0xB0DDu, static_cast<std::uint64_t>(inst));
        const TopologySpec spec = random_topology_spec(rng, 8, 3);
        const Topology topo = build_topology(spec);

        QuadraticOptions opts;
        opts.eig_min = 0.5;
        opts.eig_max = 2.0;
        opts.noise_sigma = 0.02;
        opts.h_radius = 10.0;
        const QuadraticFamily family = synth_quadratics(topo, 2 + inst % 5, 1.0,
                                                        rng.next_u64(), opts);

        BoundConfig cfg;
        cfg.constants = family.constants;
        cfg.weights_p = family.weights;
        cfg.local_steps_e = grids[inst % 5].first;
        cfg.edge_rounds_g = grids[inst % 5].second;
        const double mu = cfg.constants.strong_convexity_mu;
        const double l = cfg.constants.smoothness_l;
        cfg.beta = 1.5 / mu;
        cfg.alpha = std::max(static_cast<double>(cfg.local_steps_e),
                             cfg.beta * std::max(mu, 4.0 * l));

        Schedule sched{cfg.local_steps_e, cfg.edge_rounds_g, total_steps};
        const LrSchedule lr = LrSchedule::inverse(cfg.beta, cfg.alpha);
        QuadraticProblem problem(family, rng.next_u64());

        bool ok = true;
        int bad_step = -1;
        double gap_at_fail = 0.0, bound_at_fail = 0.0;
        double max_radius = 0.0;
        const auto probe = [&](const StepProbe& p) {
            if (!ok) return;
            if (p.step == 0) {
                Vec d = p.virtual_model;
                axpy(-1.0, family.w_star, d);
                cfg.delta0 = norm_sq(d);
            }
            for (const auto& w : p.client_params)
                max_radius = std::max(max_radius, norm(w));
            const double gap = family.global_value(p.virtual_model) - family.constants.f_star;
            const double bound = theorem1_bound(cfg, p.step);
            if (gap > bound * (1.0 + 1e-12)) {
                ok = false;
                bad_step = p.step;
                gap_at_fail = gap;
                bound_at_fail = bound;
            }
        };
        run_hhfl(topo, problem, sched, lr, rng.next_u64(), probe);
        if (max_radius > opts.h_radius) {
            log << "[bounds] FAIL instance " << inst << ": trajectory radius " << max_radius
                << " exceeds the H ball (" << opts.h_radius << ")\n";
            return false;
        }
        if (!ok) {
            log << "[bounds] FAIL instance " << inst << " step " << bad_step << " gap "
                << gap_at_fail << " > bound " << bound_at_fail << " "
                << describe_topology(spec) << "\n";
            return false;
        }
    }
    log << "[bounds] OK\n";
    return true;
}

/// Finite-difference gradient checks for all three learner kinds.
inline bool verify_gradcheck(std::uint64_t seed, std::ostream& log, int probes = 20) {
    log << "[gradcheck] seed=" << seed << " probes=" << probes << "\n";
    const LabeledDataset data = synth_gaussian_classes(4, 6, 30, 3.0, seed);
    std::vector<int> batch;
    for (int s = 0; s < 24; ++s) batch.push_back(s);

    TopologySpec unit;
    unit.num_clients = 2;
    unit.num_es = 1;
    unit.connectivity = {{0}, {0}};
    const QuadraticFamily family =
        synth_quadratics(build_topology(unit), 5, 1.0, mix_key(seed, 1));

    struct Check {
        std::string name;
        double tol;
        std::shared_ptr<Learner> learner;
    };
    const std::vector<Check> checks = {
        {"quadratic", 1e-6, std::make_shared<QuadraticLearner>(family.clients[0])},
        {"logistic", 1e-4, std::make_shared<LogisticLearner>(data.feature_dim,
                                                             data.num_classes)},
        {"mlp", 1e-3, std::make_shared<MlpLearner>(data.feature_dim, 8, data.num_classes)},
    };
    for (const auto& check : checks) {
        double worst = 0.0;
        for (int probe = 0; probe < probes; ++probe) {
            RngStream rng = substream(seed, 0x66DCu, static_cast<std::uint64_t>(probe));
            Vec w = check.learner->init_params(rng.next_u64());
            for (double& v : w) v += 0.3 * rng.next_gaussian();
            worst = std::max(worst, grad_check(*check.learner, w, data, batch));
        }
        log << "[gradcheck] " << check.name << " max_rel_err=" << worst
            << " (tol " << check.tol << ")\n";
        if (worst > check.tol) {
            log << "[gradcheck] FAIL " << check.name << "\n";
            return false;
        }
    }
    log << "[gradcheck] OK\n";
    return true;
}

}  // namespace hhfl
