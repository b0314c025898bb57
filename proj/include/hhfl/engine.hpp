#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hhfl/dataset.hpp"
#include "hhfl/errors.hpp"
#include "hhfl/learner.hpp"
#include "hhfl/partition.hpp"
#include "hhfl/quadratics.hpp"
#include "hhfl/rng.hpp"
#include "hhfl/topology.hpp"
#include "hhfl/vecmath.hpp"

namespace hhfl {

enum class Arch { fedavg, hier_fedavg, hhfl };

inline const char* arch_name(Arch a) {
    switch (a) {
        case Arch::fedavg: return "fedavg";
        case Arch::hier_fedavg: return "hier_fedavg";
        case Arch::hhfl: return "hhfl";
    }
    return "?";
}

inline Arch arch_from_name(const std::string& name) {
    if (name == "fedavg") return Arch::fedavg;
    if (name == "hier_fedavg") return Arch::hier_fedavg;
    if (name == "hhfl") return Arch::hhfl;
    throw InvalidConfig("unknown architecture '" + name + "'");
}

/// E local steps per edge round, G edge rounds per cloud round, T total steps.
struct Schedule {
    int local_steps_e = 1;
    int edge_rounds_g = 1;
    int total_steps_t = 1;

    void validate() const {
        if (local_steps_e < 1) throw InvalidConfig("schedule.e: must be >= 1");
        if (edge_rounds_g < 1) throw InvalidConfig("schedule.g: must be >= 1");
        if (total_steps_t < 1) throw InvalidConfig("schedule.t: must be >= 1");
    }
};

enum class EventKind { edge_agg, cloud_agg, client_agg };

inline const char* event_name(EventKind e) {
    switch (e) {
        case EventKind::edge_agg: return "edge_agg";
        case EventKind::cloud_agg: return "cloud_agg";
        case EventKind::client_agg: return "client_agg";
    }
    return "?";
}

struct TraceStep {
    int step;
    double loss;
    double accuracy;
    double lr;
};

/// links_used counts active links; the unit counters measure model transfers
/// between clients and ESs (1 unit = one model payload over one link), under
/// per-link unicast accounting and under multi-point uplink reception.
struct TraceEvent {
    int step;
    EventKind kind;
    double links_used;
    double unicast_units;
    double multipoint_units;
};

struct TrainingTrace {
    std::string arch;
    Schedule schedule;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::vector<TraceStep> steps;    ///< one record per t in 0..T
    std::vector<TraceEvent> events;  ///< aggregation events in execution order
};

/// What the engine needs from a training problem: per-client stochastic
/// gradients (deterministic in (client, step)) and evaluation of a parameter
/// vector. Implementations bridge either a Learner+Assignment pair or a
/// synthetic quadratic family.
class Problem {
public:
    virtual ~Problem() = default;
    virtual int dim() const = 0;
    virtual int num_clients() const = 0;
    virtual Vec init_params(std::uint64_t seed) const = 0;
    virtual void local_gradient(int client, int step, std::span<const double> params,
                                std::span<double> out) = 0;
    virtual Metrics eval(std::span<const double> params) const = 0;
};

/// Mini-batch SGD over per-client shards. Batches follow without-replacement
/// epochs over the shard, reshuffled per epoch from a stream keyed by
/// (seed, client, epoch), so batch choice is a pure function of (client, step).
class SupervisedProblem : public Problem {
public:
    SupervisedProblem(const Learner& learner, const LabeledDataset& train,
                      const LabeledDataset& eval, const Assignment& assignment, int batch_size,
                      std::uint64_t data_seed)
        : learner_(learner),
          train_(train),
          eval_(eval),
          assignment_(assignment),
          batch_size_(batch_size),
          data_seed_(data_seed) {
        if (batch_size < 1) throw InvalidConfig("batch_size: must be >= 1");
        const int k = static_cast<int>(assignment.shards.size());
        perms_.resize(k);
        perm_epoch_.assign(k, -1);
        eval_indices_.resize(eval.size());
        for (int i = 0; i < eval.size(); ++i) eval_indices_[i] = i;
    }

    int dim() const override { return learner_.dim(); }
    int num_clients() const override { return static_cast<int>(assignment_.shards.size()); }

    Vec init_params(std::uint64_t seed) const override { return learner_.init_params(seed); }

    void local_gradient(int client, int step, std::span<const double> params,
                        std::span<double> out) override {
        const auto& shard = assignment_.shards[client];
        if (shard.empty())
            throw InvalidConfig("client " + std::to_string(client) + " has an empty shard");
        const int bpe = static_cast<int>((shard.size() + batch_size_ - 1) / batch_size_);
        const int epoch = step / bpe;
        const int slot = step % bpe;
        if (perm_epoch_[client] != epoch) {
            perms_[client] = shard;
            RngStream rng = substream(data_seed_, 0xBA7Cu, static_cast<std::uint64_t>(client),
                                      static_cast<std::uint64_t>(epoch));
            rng.shuffle(perms_[client]);
            perm_epoch_[client] = epoch;
        }
        const std::size_t begin = static_cast<std::size_t>(slot) * batch_size_;
        const std::size_t end = std::min(begin + batch_size_, shard.size());
        learner_.gradient(params, train_,
                          std::span<const int>(perms_[client].data() + begin, end - begin), out);
    }

    Metrics eval(std::span<const double> params) const override {
        return learner_.metrics(params, eval_, eval_indices_);
    }

private:
    const Learner& learner_;
    const LabeledDataset& train_;
    const LabeledDataset& eval_;
    const Assignment& assignment_;
    int batch_size_;
    std::uint64_t data_seed_;
    std::vector<std::vector<int>> perms_;
    std::vector<int> perm_epoch_;
    std::vector<int> eval_indices_;
};

/// Synthetic quadratic objectives; "loss" is the exact global objective and
/// accuracy has no meaning (reported as 0).
class QuadraticProblem : public Problem {
public:
    QuadraticProblem(const QuadraticFamily& family, std::uint64_t noise_seed,
                     double init_scale = 1.0)
        : family_(family), noise_seed_(noise_seed), init_scale_(init_scale) {}

    int dim() const override { return family_.dim; }
    int num_clients() const override { return static_cast<int>(family_.clients.size()); }

    Vec init_params(std::uint64_t seed) const override {
        RngStream rng = substream(seed, 0x1217u, 0);
        Vec w(family_.dim);
        const double scale = init_scale_ / std::sqrt(static_cast<double>(family_.dim));
        for (double& v : w) v = scale * rng.next_gaussian();
        return w;
    }

    void local_gradient(int client, int step, std::span<const double> params,
                        std::span<double> out) override {
        RngStream rng = substream(noise_seed_, 0x6E5Eu, static_cast<std::uint64_t>(client),
                                  static_cast<std::uint64_t>(step));
        family_.clients[client].stochastic_gradient(params, rng, out);
    }

    Metrics eval(std::span<const double> params) const override {
        return {family_.global_value(params), 0.0};
    }

private:
    const QuadraticFamily& family_;
    std::uint64_t noise_seed_;
    double init_scale_;
};

// ---------------------------------------------------------------------------
// Aggregation operators (Eqs. of the HHFL scheme). All are affine with
// nonnegative coefficients summing to one; sums run in ascending client/ES
// index so repeated runs are bit-identical.
// ---------------------------------------------------------------------------

/// Client aggregation: plain arithmetic mean of the client's connected ESs.
inline Vec client_aggregate(const Topology& topology, const std::vector<Vec>& es_params,
                            int client) {
    const auto& conn = topology.spec.connectivity[client];
    Vec out(es_params[conn[0]].size(), 0.0);
    const double inv = 1.0 / static_cast<double>(conn.size());
    for (int n : conn) axpy(inv, es_params[n], out);
    return out;
}

/// Edge aggregation at ES n: sum over C_n of (p_i / |S_i|) / lozenge_n * w_i.
inline Vec edge_aggregate(const Topology& topology, const std::vector<Vec>& client_params,
                          int es) {
    Vec out(client_params[topology.coverage[es][0]].size(), 0.0);
    for (int i : topology.coverage[es]) {
        const double coeff =
            topology.p[i] / static_cast<double>(topology.degree(i)) / topology.lozenge[es];
        axpy(coeff, client_params[i], out);
    }
    return out;
}

/// Cloud aggregation: sum over ESs of lozenge_n * w_(n).
inline Vec cloud_aggregate(const Topology& topology, const std::vector<Vec>& es_params) {
    Vec out(es_params[0].size(), 0.0);
    for (int n = 0; n < topology.num_es(); ++n) axpy(topology.lozenge[n], es_params[n], out);
    return out;
}

/// Virtual global model, flat form: sum_i p_i w_i. Must agree with the nested
/// edge-then-cloud form to floating-point accuracy.
inline Vec virtual_global(const Topology& topology, const std::vector<Vec>& client_params) {
    Vec out(client_params[0].size(), 0.0);
    for (int i = 0; i < topology.num_clients(); ++i) axpy(topology.p[i], client_params[i], out);
    return out;
}

/// Snapshot handed to an optional per-step observer. `step` is the state
/// index: intermediates are the v^step vectors, params the w^step vectors.
struct StepProbe {
    int step;
    const std::vector<Vec>& client_params;
    const std::vector<Vec>& client_intermediate;
    const std::vector<Vec>& es_params;
    const Vec& virtual_model;
};

using ProbeFn = std::function<void(const StepProbe&)>;

namespace detail {

inline int worker_count() {
    if (const char* env = std::getenv("HHFL_WORKERS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

inline void parallel_for(int count, int workers, const std::function<void(int)>& body) {
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < std::min(workers, count); ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
        });
    for (auto& t : pool) t.join();
}

/// Normalized aggregation weights per ES and per client for one architecture.
struct AggPlan {
    std::vector<std::vector<std::pair<int, double>>> edge;  // per ES: (client, weight)
    std::vector<double> cloud;                              // per ES
    std::vector<std::vector<std::pair<int, double>>> client_src;  // per client: (ES, weight)
    double links = 0;             // active client-ES links
    double uplink_unicast = 0;    // model transfers per edge round, unicast accounting
    double uplink_multipoint = 0; // same, with multi-point reception
    double downlink = 0;          // ES-to-client transfers per round
};

inline AggPlan plan_hhfl(const Topology& topo) {
    AggPlan plan;
    plan.edge.resize(topo.num_es());
    plan.cloud = topo.lozenge;
    plan.client_src.resize(topo.num_clients());
    for (int n = 0; n < topo.num_es(); ++n)
        for (int i : topo.coverage[n])
            plan.edge[n].push_back(
                {i, topo.p[i] / static_cast<double>(topo.degree(i)) / topo.lozenge[n]});
    for (int i = 0; i < topo.num_clients(); ++i) {
        const double inv = 1.0 / static_cast<double>(topo.degree(i));
        for (int n : topo.spec.connectivity[i]) plan.client_src[i].push_back({n, inv});
    }
    plan.links = topo.total_links();
    plan.uplink_unicast = topo.total_links();
    plan.uplink_multipoint = topo.num_clients();
    plan.downlink = topo.total_links();
    return plan;
}

inline AggPlan plan_hier(const SingleAssignment& single) {
    const Topology& topo = single.base;
    AggPlan plan;
    plan.edge.resize(topo.num_es());
    plan.cloud.assign(topo.num_es(), 0.0);
    plan.client_src.resize(topo.num_clients());
    double n_total = 0.0;
    std::vector<double> n_es(topo.num_es(), 0.0);
    auto weight_of = [&](int i) {
        return topo.spec.data_weights.empty() ? 1.0 : topo.spec.data_weights[i];
    };
    for (int i = 0; i < topo.num_clients(); ++i) {
        n_es[single.assigned_es[i]] += weight_of(i);
        n_total += weight_of(i);
    }
    for (int n = 0; n < topo.num_es(); ++n) {
        for (int i : single.coverage[n]) plan.edge[n].push_back({i, weight_of(i) / n_es[n]});
        plan.cloud[n] = n_es[n] / n_total;
    }
    for (int i = 0; i < topo.num_clients(); ++i)
        plan.client_src[i].push_back({single.assigned_es[i], 1.0});
    plan.links = topo.num_clients();
    plan.uplink_unicast = topo.num_clients();
    plan.uplink_multipoint = topo.num_clients();
    plan.downlink = topo.num_clients();
    return plan;
}

inline AggPlan plan_fedavg(const std::vector<double>& p) {
    AggPlan plan;
    plan.edge.resize(1);
    plan.cloud = {1.0};
    plan.client_src.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        plan.edge[0].push_back({static_cast<int>(i), p[i]});
        plan.client_src[i].push_back({0, 1.0});
    }
    plan.links = static_cast<double>(p.size());
    plan.uplink_unicast = plan.links;
    plan.uplink_multipoint = plan.links;
    plan.downlink = plan.links;
    return plan;
}

}  // namespace detail

/// Runs one architecture for exactly T local steps. The returned trace has a
/// step record for every t in 0..T and aggregation events in Algorithm order
/// (edge, then cloud + broadcast if due, then client aggregation).
///
/// `single` is required for hier_fedavg and ignored otherwise; hhfl reads the
/// multi-connectivity topology, fedavg only its weights. Bit-identical across
/// repeated calls with equal inputs, independent of HHFL_WORKERS.
inline TrainingTrace run(Arch arch, const Topology& topology, const SingleAssignment* single,
                         Problem& problem, const Schedule& schedule, const LrSchedule& lr,
                         std::uint64_t rng_seed, const ProbeFn& probe = {}) {
    schedule.validate();
    const int k = topology.num_clients();
    if (problem.num_clients() != k)
        throw InvalidConfig("run: problem has " + std::to_string(problem.num_clients()) +
                            " clients, topology has " + std::to_string(k));
    if (arch == Arch::hier_fedavg && single == nullptr)
        throw InvalidConfig("run: hier_fedavg requires a single assignment");

    detail::AggPlan plan;
    switch (arch) {
        case Arch::hhfl: plan = detail::plan_hhfl(topology); break;
        case Arch::hier_fedavg: plan = detail::plan_hier(*single); break;
        case Arch::fedavg: plan = detail::plan_fedavg(topology.p); break;
    }
    const int num_es = static_cast<int>(plan.edge.size());
    const int e_period = schedule.local_steps_e;
    const int cloud_period = arch == Arch::fedavg ? e_period
                                                  : e_period * schedule.edge_rounds_g;

    const int dim = problem.dim();
    const Vec w0 = problem.init_params(rng_seed);
    if (static_cast<int>(w0.size()) != dim)
        throw InvalidConfig("run: init params dimension mismatch");

    std::vector<Vec> w(k, w0), v(k, Vec(dim, 0.0)), es(num_es, w0);
    Vec global = w0;
    std::vector<Vec> scratch(k, Vec(dim, 0.0));

    TrainingTrace trace;
    trace.arch = arch_name(arch);
    trace.schedule = schedule;
    trace.seed = rng_seed;

    auto record_step = [&](int t) {
        const Vec bar = virtual_global(topology, w);
        const Metrics m = problem.eval(bar);
        trace.steps.push_back({t, m.loss, m.accuracy, lr.value(t)});
        if (probe) probe(StepProbe{t, w, v, es, bar});
    };
    record_step(0);

    const int workers = detail::worker_count();
    for (int t = 0; t < schedule.total_steps_t; ++t) {
        const double eta = lr.value(t);
        std::exception_ptr failure;
        std::mutex failure_mutex;
        detail::parallel_for(k, workers, [&](int i) {
            try {
                problem.local_gradient(i, t, w[i], scratch[i]);
                v[i] = w[i];
                axpy(-eta, scratch[i], v[i]);
                if (!all_finite(v[i]))
                    throw NumericFailure("run: non-finite update at step " + std::to_string(t) +
                                             " client " + std::to_string(i),
                                         t, i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
        if (failure) std::rethrow_exception(failure);

        const int next = t + 1;
        if (next % e_period != 0) {
            for (int i = 0; i < k; ++i) w[i] = v[i];
        } else {
            for (int n = 0; n < num_es; ++n) {
                Vec agg(dim, 0.0);
                for (const auto& [i, weight] : plan.edge[n]) axpy(weight, v[i], agg);
                es[n] = std::move(agg);
            }
            trace.events.push_back({next, EventKind::edge_agg, plan.links, plan.uplink_unicast,
                                    plan.uplink_multipoint});
            if (next % cloud_period == 0) {
                Vec agg(dim, 0.0);
                for (int n = 0; n < num_es; ++n) axpy(plan.cloud[n], es[n], agg);
                global = std::move(agg);
                for (int n = 0; n < num_es; ++n) es[n] = global;
                trace.events.push_back({next, EventKind::cloud_agg,
                                        static_cast<double>(num_es), 0.0, 0.0});
            }
            for (int i = 0; i < k; ++i) {
                Vec agg(dim, 0.0);
                for (const auto& [n, weight] : plan.client_src[i]) axpy(weight, es[n], agg);
                w[i] = std::move(agg);
            }
            trace.events.push_back(
                {next, EventKind::client_agg, plan.links, plan.downlink, plan.downlink});
        }
        record_step(next);
    }
    return trace;
}

/// Convenience wrappers matching each architecture's natural inputs.
inline TrainingTrace run_hhfl(const Topology& topology, Problem& problem,
                              const Schedule& schedule, const LrSchedule& lr,
                              std::uint64_t seed, const ProbeFn& probe = {}) {
    return run(Arch::hhfl, topology, nullptr, problem, schedule, lr, seed, probe);
}

inline TrainingTrace run_hier_fedavg(const SingleAssignment& single, Problem& problem,
                                     const Schedule& schedule, const LrSchedule& lr,
                                     std::uint64_t seed, const ProbeFn& probe = {}) {
    return run(Arch::hier_fedavg, single.base, &single, problem, schedule, lr, seed, probe);
}

inline TrainingTrace run_fedavg(const Topology& topology, Problem& problem,
                                const Schedule& schedule, const LrSchedule& lr,
                                std::uint64_t seed, const ProbeFn& probe = {}) {
    return run(Arch::fedavg, topology, nullptr, problem, schedule, lr, seed, probe);
}

}  // namespace hhfl
