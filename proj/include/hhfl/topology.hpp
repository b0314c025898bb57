#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "hhfl/errors.hpp"
#include "hhfl/rng.hpp"

namespace hhfl {

/// Declarative client/ES connectivity. Geometry is never modeled; the
/// connectivity sets are the whole physical layout.
struct TopologySpec {
    int num_clients = 0;                         ///< K
    int num_es = 0;                              ///< N
    std::vector<std::vector<int>> connectivity;  ///< S_i per client, 0-based ES indices
    std::vector<double> data_weights;            ///< N_i per client; empty = uniform
    std::string layout_tag;
};

/// Connectivity plus all derived aggregation weights.
struct Topology {
    TopologySpec spec;
    std::vector<std::vector<int>> coverage;  ///< C_n = {i : n in S_i}
    std::vector<double> p;                   ///< p_i = N_i / sum_j N_j
    std::vector<double> lozenge;             ///< per-ES weight, sum_{i in C_n} p_i/|S_i|

    int num_clients() const { return spec.num_clients; }
    int num_es() const { return spec.num_es; }
    int degree(int client) const { return static_cast<int>(spec.connectivity[client].size()); }

    /// Total client-ES links, sum_i |S_i|.
    int total_links() const {
        int links = 0;
        for (const auto& s : spec.connectivity) links += static_cast<int>(s.size());
        return links;
    }

    bool all_single_coverage() const {
        for (const auto& s : spec.connectivity)
            if (s.size() != 1) return false;
        return true;
    }
};

/// One ES per client, derived from a multi-connectivity topology.
struct SingleAssignment {
    Topology base;
    std::vector<int> assigned_es;            ///< assigned_es[i] in S_i
    std::vector<std::vector<int>> coverage;  ///< induced disjoint C_n
};

inline Topology build_topology(TopologySpec spec) {
    if (spec.num_clients <= 0 || spec.num_es <= 0)
        throw InvalidSpec("build_topology: num_clients and num_es must be positive");
    if (static_cast<int>(spec.connectivity.size()) != spec.num_clients)
        throw InvalidSpec("build_topology: connectivity must list one ES set per client");
    if (!spec.data_weights.empty() &&
        static_cast<int>(spec.data_weights.size()) != spec.num_clients)
        throw InvalidSpec("build_topology: data_weights size must equal num_clients");

    Topology topo;
    topo.coverage.assign(spec.num_es, {});
    for (int i = 0; i < spec.num_clients; ++i) {
        auto& conn = spec.connectivity[i];
        if (conn.empty())
            throw InvalidSpec("build_topology: client " + std::to_string(i) + " has empty ES set");
        std::sort(conn.begin(), conn.end());
        conn.erase(std::unique(conn.begin(), conn.end()), conn.end());
        for (int n : conn) {
            if (n < 0 || n >= spec.num_es)
                throw InvalidSpec("build_topology: client " + std::to_string(i) +
                                  " references ES " + std::to_string(n) + " out of range");
            topo.coverage[n].push_back(i);
        }
    }
    for (int n = 0; n < spec.num_es; ++n)
        if (topo.coverage[n].empty())
            throw InvalidSpec("build_topology: ES " + std::to_string(n) + " covers no client");

    topo.p.resize(spec.num_clients);
    double total = 0.0;
    for (int i = 0; i < spec.num_clients; ++i) {
        const double w = spec.data_weights.empty() ? 1.0 : spec.data_weights[i];
        if (!(w > 0.0))
            throw InvalidSpec("build_topology: client " + std::to_string(i) +
                              " has nonpositive data weight");
        topo.p[i] = w;
        total += w;
    }
    for (double& v : topo.p) v /= total;

    topo.lozenge.assign(spec.num_es, 0.0);
    for (int n = 0; n < spec.num_es; ++n)
        for (int i : topo.coverage[n])
            topo.lozenge[n] += topo.p[i] / static_cast<double>(spec.connectivity[i].size());

    topo.spec = std::move(spec);
    return topo;
}

/// The evaluation layout: 3 ESs at triangle vertices, 57 clients.
/// Per ES: 14 exclusive, 8 shared with one neighbor (4 per pair region),
/// 3 shared by all. Uniform sample counts.
///
/// Client order: [0,14) excl ES0, [14,28) excl ES1, [28,42) excl ES2,
/// [42,46) region {0,1}, [46,50) region {0,2}, [50,54) region {1,2},
/// [54,57) region {0,1,2}.
inline TopologySpec fig3_topology() {
    TopologySpec spec;
    spec.num_clients = 57;
    spec.num_es = 3;
    spec.layout_tag = "fig3-symmetric";
    spec.connectivity.reserve(57);
    for (int es = 0; es < 3; ++es)
        for (int j = 0; j < 14; ++j) spec.connectivity.push_back({es});
    const std::vector<std::vector<int>> pair_regions = {{0, 1}, {0, 2}, {1, 2}};
    for (const auto& region : pair_regions)
        for (int j = 0; j < 4; ++j) spec.connectivity.push_back(region);
    for (int j = 0; j < 3; ++j) spec.connectivity.push_back({0, 1, 2});
    return spec;
}

/// Randomly and evenly assigns every overlap client to one of its ESs.
/// Balance holds per overlap region (clients sharing the same S_i set):
/// induced counts per candidate ES differ by at most one.
inline SingleAssignment to_single_assignment(const Topology& topology, std::uint64_t rng_seed) {
    const int k = topology.num_clients();
    SingleAssignment assignment;
    assignment.base = topology;
    assignment.assigned_es.assign(k, -1);

    std::map<std::vector<int>, std::vector<int>> regions;  // S_i set -> clients
    for (int i = 0; i < k; ++i) {
        const auto& conn = topology.spec.connectivity[i];
        if (conn.size() == 1) {
            assignment.assigned_es[i] = conn[0];
        } else {
            regions[conn].push_back(i);
        }
    }

    std::uint64_t region_index = 0;
    for (auto& [candidates, clients] : regions) {
        RngStream rng = substream(rng_seed, 0x4153u /*"AS"*/, region_index++);
        // Balanced slot list: each candidate repeated floor(r/m) times, the
        // remainder spread over a shuffled candidate order.
        std::vector<int> slots;
        const int m = static_cast<int>(candidates.size());
        const int r = static_cast<int>(clients.size());
        for (int c : candidates)
            for (int rep = 0; rep < r / m; ++rep) slots.push_back(c);
        std::vector<int> extra = candidates;
        rng.shuffle(extra);
        for (int j = 0; j < r % m; ++j) slots.push_back(extra[j]);
        rng.shuffle(slots);
        for (int j = 0; j < r; ++j) assignment.assigned_es[clients[j]] = slots[j];
    }

    assignment.coverage.assign(topology.num_es(), {});
    for (int i = 0; i < k; ++i) assignment.coverage[assignment.assigned_es[i]].push_back(i);
    return assignment;
}

/// Builds a topology variant with a different number of overlap clients while
/// keeping the given single assignment valid, mirroring client mobility:
/// promoted singles gain a second ES but keep their assigned one; demoted
/// overlap clients shrink to exactly their assigned ES.
///
/// target_overlap_clients is the desired count of clients with |S_i| > 1.
inline TopologySpec vary_overlap(const Topology& base, const SingleAssignment& pinned,
                                 int target_overlap_clients) {
    TopologySpec spec = base.spec;
    const int k = spec.num_clients;
    const int n = spec.num_es;
    if (n < 2) throw InvalidSpec("vary_overlap: needs at least two ESs");

    int overlap = 0;
    for (const auto& s : spec.connectivity)
        if (s.size() > 1) ++overlap;
    if (target_overlap_clients < 0 || target_overlap_clients > k)
        throw InvalidSpec("vary_overlap: target out of range");

    if (target_overlap_clients > overlap) {
        // Promote singles round-robin over ESs; the added ES alternates among
        // the neighbors of the assigned one to keep pair regions balanced.
        std::vector<int> offset_of_es(n, 1);
        int needed = target_overlap_clients - overlap;
        bool progress = true;
        while (needed > 0 && progress) {
            progress = false;
            for (int es = 0; es < n && needed > 0; ++es) {
                for (int i = 0; i < k; ++i) {
                    if (spec.connectivity[i].size() != 1) continue;
                    if (pinned.assigned_es[i] != es) continue;
                    const int other = (es + offset_of_es[es]) % n;
                    offset_of_es[es] = offset_of_es[es] % (n - 1) + 1;
                    spec.connectivity[i].push_back(other);
                    std::sort(spec.connectivity[i].begin(), spec.connectivity[i].end());
                    --needed;
                    progress = true;
                    break;
                }
            }
        }
        if (needed > 0) throw InvalidSpec("vary_overlap: not enough single-coverage clients");
    } else if (target_overlap_clients < overlap) {
        // Demote overlap clients round-robin over their assigned ESs,
        // widest coverage last so triple-coverage bridges survive longest.
        int to_remove = overlap - target_overlap_clients;
        for (std::size_t width = 2; width <= static_cast<std::size_t>(n) && to_remove > 0;
             ++width) {
            bool progress = true;
            while (to_remove > 0 && progress) {
                progress = false;
                for (int es = 0; es < n && to_remove > 0; ++es) {
                    for (int i = 0; i < k; ++i) {
                        if (spec.connectivity[i].size() != width) continue;
                        if (pinned.assigned_es[i] != es) continue;
                        spec.connectivity[i] = {es};
                        --to_remove;
                        progress = true;
                        break;
                    }
                }
            }
        }
        if (to_remove > 0) throw InvalidSpec("vary_overlap: not enough overlap clients");
    }
    spec.layout_tag += "+overlap" + std::to_string(target_overlap_clients);
    return spec;
}

}  // namespace hhfl
