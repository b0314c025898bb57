#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hhfl/dataset.hpp"
#include "hhfl/errors.hpp"
#include "hhfl/rng.hpp"
#include "hhfl/topology.hpp"

namespace hhfl {

/// The six evaluation data-distribution cases, named (client level, ES level).
enum class CaseId {
    iid_iid,
    noniid1_iid,
    noniid2_iid,
    noniid_noniid1,
    noniid_noniid2,
    noniid_noniid2p,  ///< same distribution as noniid_noniid2, enlarged overlap
};

struct DistributionCase {
    CaseId id = CaseId::iid_iid;
    int classes_per_client = 0;     ///< 0 = all classes
    int missing_classes_per_es = 0;

    static DistributionCase from_id(CaseId id) {
        switch (id) {
            case CaseId::iid_iid: return {id, 0, 0};
            case CaseId::noniid1_iid: return {id, 6, 0};
            case CaseId::noniid2_iid: return {id, 2, 0};
            case CaseId::noniid_noniid1: return {id, 2, 3};
            case CaseId::noniid_noniid2: return {id, 2, 4};
            case CaseId::noniid_noniid2p: return {id, 2, 4};
        }
        throw InvalidConfig("DistributionCase: unknown case id");
    }

    void validate() const {
        const DistributionCase canon = from_id(id);
        if (classes_per_client != canon.classes_per_client ||
            missing_classes_per_es != canon.missing_classes_per_es)
            throw InvalidConfig("DistributionCase: parameters inconsistent with case id " +
                                name());
    }

    std::string name() const {
        switch (id) {
            case CaseId::iid_iid: return "iid_iid";
            case CaseId::noniid1_iid: return "noniid1_iid";
            case CaseId::noniid2_iid: return "noniid2_iid";
            case CaseId::noniid_noniid1: return "noniid_noniid1";
            case CaseId::noniid_noniid2: return "noniid_noniid2";
            case CaseId::noniid_noniid2p: return "noniid_noniid2p";
        }
        return "?";
    }

    static CaseId id_from_name(const std::string& name) {
        if (name == "iid_iid") return CaseId::iid_iid;
        if (name == "noniid1_iid") return CaseId::noniid1_iid;
        if (name == "noniid2_iid") return CaseId::noniid2_iid;
        if (name == "noniid_noniid1") return CaseId::noniid_noniid1;
        if (name == "noniid_noniid2") return CaseId::noniid_noniid2;
        if (name == "noniid_noniid2p") return CaseId::noniid_noniid2p;
        throw InvalidConfig("DistributionCase: unknown case name '" + name + "'");
    }
};

/// Classes *missing* from ES n, rotated deterministically: {n*m .. n*m+m-1} mod C.
inline std::vector<bool> es_missing_mask(int es, int missing, int num_classes) {
    std::vector<bool> mask(num_classes, false);
    for (int j = 0; j < missing; ++j) mask[(es * missing + j) % num_classes] = true;
    return mask;
}

/// Per-client dataset shards with class-composition metadata.
struct Assignment {
    std::vector<std::vector<int>> shards;             ///< dataset indices per client
    std::vector<std::vector<int>> class_histogram;    ///< per client, length num_classes
    std::vector<std::vector<int>> es_class_histogram; ///< per ES via coverage C_n
    int num_classes = 0;

    int shard_size(int client) const { return static_cast<int>(shards[client].size()); }
};

namespace detail {

struct SlotLedger {
    std::vector<std::vector<long long>> es;  // [N][C], sample-weighted counts
    std::vector<long long> global;           // [C]
};

// Lower tuple wins; used for both slot picks and +1 placement.
struct Score {
    int pollution;
    int exhaust;
    long long max_after;
    long long sum_after;
    long long global_count;
    int class_id;

    bool operator<(const Score& o) const {
        if (pollution != o.pollution) return pollution < o.pollution;
        if (exhaust != o.exhaust) return exhaust < o.exhaust;
        if (max_after != o.max_after) return max_after < o.max_after;
        if (sum_after != o.sum_after) return sum_after < o.sum_after;
        if (global_count != o.global_count) return global_count < o.global_count;
        return class_id < o.class_id;
    }
};

}  // namespace detail

/// Splits the dataset across clients under the given distribution case.
///
/// Every client receives exactly floor(n / K) samples over exactly
/// `classes_per_client` distinct classes (all classes for the IID case),
/// with per-class counts inside a client as equal as possible. Class choice
/// balances each ES's aggregate histogram; clients covered by several ESs
/// draw from the union of their ESs' allowed classes, preferring classes
/// allowed by all of them. Deterministic given the seed.
inline Assignment partition(const LabeledDataset& data, const Topology& topology,
                            const DistributionCase& dist_case, std::uint64_t rng_seed) {
    dist_case.validate();
    const int k = topology.num_clients();
    const int n_es = topology.num_es();
    const int n_classes = data.num_classes;
    const int cpc =
        dist_case.classes_per_client == 0 ? n_classes : dist_case.classes_per_client;
    if (cpc > n_classes)
        throw InvalidConfig("partition: classes_per_client exceeds dataset classes");
    if (data.size() / k < cpc)
        throw InvalidConfig("partition: dataset too small for one sample per required class");

    // Per-ES allowed classes. The masks bind at the baseline single-ES
    // grouping: every client, overlap ones included, draws from the mask of
    // the ES it is assigned to under the canonical balanced assignment, so
    // the baseline's per-ES data is missing exactly the masked classes. In
    // the multi-connectivity view overlap clients then carry their assigned
    // ES's classes into the neighboring aggregates.
    std::vector<std::vector<bool>> missing(n_es);
    for (int n = 0; n < n_es; ++n)
        missing[n] = es_missing_mask(n, dist_case.missing_classes_per_es, n_classes);
    const SingleAssignment canonical = to_single_assignment(topology, rng_seed);

    // pollution[i][c] = 0 when the assigned ES admits class c, 1 otherwise.
    std::vector<std::vector<int>> pollution(k, std::vector<int>(n_classes, 0));
    for (int i = 0; i < k; ++i) {
        int eligible = 0;
        for (int c = 0; c < n_classes; ++c) {
            if (missing[canonical.assigned_es[i]][c]) pollution[i][c] = 1;
            else ++eligible;
        }
        if (eligible < cpc)
            throw InfeasiblePartition(
                "partition: client " + std::to_string(i) + " has only " +
                    std::to_string(eligible) + " eligible classes, needs " + std::to_string(cpc),
                i, -1);
    }

    const std::vector<int> pool_sizes = data.class_counts();
    auto active = [&](int n, int c) { return !missing[n][c]; };

    std::vector<int> order(k);
    for (int i = 0; i < k; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return topology.degree(a) > topology.degree(b);
    });

    // Allocates class sets and per-class cell counts for a fixed per-client
    // quota; returns the cells plus the resulting global per-class demand.
    auto allocate = [&](int quota, std::vector<std::vector<int>>& cells,
                        std::vector<long long>& demand) {
        const int cell_ceil = (quota + cpc - 1) / cpc;

        // Phase 1: pick each client's class set, balancing ES slot counts
        // (multi-coverage clients first, mask-clean classes preferred).
        detail::SlotLedger slots;
        slots.es.assign(n_es, std::vector<long long>(n_classes, 0));
        slots.global.assign(n_classes, 0);
        std::vector<std::vector<int>> chosen(k);

        auto slot_score = [&](int client, int c) {
            long long mx = 0, sm = 0;
            for (int n : topology.spec.connectivity[client]) {
                mx = std::max(mx, slots.es[n][c] + 1);
                sm += slots.es[n][c];
            }
            const int exhaust =
                (slots.global[c] + 1) * static_cast<long long>(cell_ceil) > pool_sizes[c] ? 1
                                                                                          : 0;
            const bool eligible = pollution[client][c] == 0;
            return detail::Score{eligible ? 0 : std::numeric_limits<int>::max(), exhaust, mx,
                                 sm, slots.global[c], c};
        };

        for (int i : order) {
            std::vector<bool> taken(n_classes, false);
            for (int pick = 0; pick < cpc; ++pick) {
                detail::Score best{};
                int best_c = -1;
                for (int c = 0; c < n_classes; ++c) {
                    if (taken[c]) continue;
                    const detail::Score s = slot_score(i, c);
                    if (s.pollution == std::numeric_limits<int>::max()) continue;
                    if (best_c < 0 || s < best) {
                        best = s;
                        best_c = c;
                    }
                }
                taken[best_c] = true;
                chosen[i].push_back(best_c);
                slots.global[best_c] += 1;
                for (int n : topology.spec.connectivity[i]) slots.es[n][best_c] += 1;
            }
            std::sort(chosen[i].begin(), chosen[i].end());
        }

        // Phase 2: repair per-ES slot spread with single-coverage swaps.
        // Spread is measured over the classes an ES actually admits.
        for (int pass = 0; pass < 16 * n_classes; ++pass) {
            bool moved = false;
            for (int n = 0; n < n_es; ++n) {
                int hi = -1, lo = -1;
                for (int c = 0; c < n_classes; ++c) {
                    if (!active(n, c)) continue;
                    if (hi < 0 || slots.es[n][c] > slots.es[n][hi]) hi = c;
                    if (lo < 0 || slots.es[n][c] < slots.es[n][lo]) lo = c;
                }
                if (hi < 0 || slots.es[n][hi] - slots.es[n][lo] < 2) continue;
                if ((slots.global[lo] + 1) * static_cast<long long>(cell_ceil) > pool_sizes[lo])
                    continue;
                for (int i : topology.coverage[n]) {
                    if (topology.degree(i) != 1) continue;
                    auto& cls = chosen[i];
                    if (std::find(cls.begin(), cls.end(), hi) == cls.end()) continue;
                    if (std::find(cls.begin(), cls.end(), lo) != cls.end()) continue;
                    *std::find(cls.begin(), cls.end(), hi) = lo;
                    std::sort(cls.begin(), cls.end());
                    slots.es[n][hi] -= 1;
                    slots.es[n][lo] += 1;
                    slots.global[hi] -= 1;
                    slots.global[lo] += 1;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }

        // Phase 3: split each quota into per-class cells (base or base+1).
        const int base = quota / cpc;
        const int rem = quota % cpc;
        detail::SlotLedger samples;
        samples.es.assign(n_es, std::vector<long long>(n_classes, 0));
        samples.global.assign(n_classes, 0);
        cells.assign(k, std::vector<int>(n_classes, 0));

        for (int i = 0; i < k; ++i) {
            for (int c : chosen[i]) {
                cells[i][c] = base;
                samples.global[c] += base;
                for (int n : topology.spec.connectivity[i]) samples.es[n][c] += base;
            }
        }
        for (int i = 0; i < k; ++i) {
            for (int extra = 0; extra < rem; ++extra) {
                detail::Score best{};
                int best_c = -1;
                for (int c : chosen[i]) {
                    if (cells[i][c] > base) continue;
                    long long mx = 0, sm = 0;
                    for (int n : topology.spec.connectivity[i]) {
                        mx = std::max(mx, samples.es[n][c] + 1);
                        sm += samples.es[n][c];
                    }
                    const int exhaust = samples.global[c] + 1 > pool_sizes[c] ? 1 : 0;
                    const detail::Score s{0, exhaust, mx, sm, samples.global[c], c};
                    if (best_c < 0 || s < best) {
                        best = s;
                        best_c = c;
                    }
                }
                cells[i][best_c] += 1;
                samples.global[best_c] += 1;
                for (int n : topology.spec.connectivity[i]) samples.es[n][best_c] += 1;
            }
        }

        // Phase 4: repair per-ES sample spread by moving +1 cells.
        for (int pass = 0; pass < 16 * n_classes; ++pass) {
            bool moved = false;
            for (int n = 0; n < n_es; ++n) {
                int hi = -1, lo = -1;
                for (int c = 0; c < n_classes; ++c) {
                    if (!active(n, c)) continue;
                    if (hi < 0 || samples.es[n][c] > samples.es[n][hi]) hi = c;
                    if (lo < 0 || samples.es[n][c] < samples.es[n][lo]) lo = c;
                }
                if (hi < 0 || samples.es[n][hi] - samples.es[n][lo] < 2) continue;
                if (samples.global[lo] + 1 > pool_sizes[lo]) continue;
                for (int i : topology.coverage[n]) {
                    if (topology.degree(i) != 1) continue;
                    if (cells[i][hi] <= base || cells[i][lo] == 0 || cells[i][lo] > base)
                        continue;
                    cells[i][hi] -= 1;
                    cells[i][lo] += 1;
                    samples.es[n][hi] -= 1;
                    samples.es[n][lo] += 1;
                    samples.global[hi] -= 1;
                    samples.global[lo] += 1;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }
        demand = samples.global;
    };

    // Fit the per-client quota to the dataset: start at floor(n/K) and shrink
    // until every class pool covers its demand (case-dependent demand can be
    // skewed, e.g. classes admitted by several ES masks are consumed more).
    int quota = data.size() / k;
    std::vector<std::vector<int>> cells;
    std::vector<long long> demand;
    for (int attempt = 0;; ++attempt) {
        allocate(quota, cells, demand);
        double scale = 1.0;
        for (int c = 0; c < n_classes; ++c)
            if (demand[c] > pool_sizes[c])
                scale = std::min(scale, static_cast<double>(pool_sizes[c]) / demand[c]);
        if (scale == 1.0) break;
        const int next = std::min(quota - 1, static_cast<int>(quota * scale));
        if (attempt >= 8 || next < cpc) {
            int worst = 0;
            for (int c = 0; c < n_classes; ++c)
                if (demand[c] - pool_sizes[c] > demand[worst] - pool_sizes[worst]) worst = c;
            throw InfeasiblePartition("partition: class " + std::to_string(worst) +
                                          " cannot satisfy the requested case",
                                      -1, worst);
        }
        quota = next;
    }

    // --- Phase 5: draw concrete sample indices from shuffled class pools. ---
    std::vector<std::vector<int>> pools(n_classes);
    for (int s = 0; s < data.size(); ++s) pools[data.labels[s]].push_back(s);
    for (int c = 0; c < n_classes; ++c) {
        RngStream rng = substream(rng_seed, 0xDA7Au, static_cast<std::uint64_t>(c));
        rng.shuffle(pools[c]);
    }
    std::vector<std::size_t> cursor(n_classes, 0);

    Assignment out;
    out.num_classes = n_classes;
    out.shards.resize(k);
    out.class_histogram = cells;
    for (int i = 0; i < k; ++i) {
        out.shards[i].reserve(quota);
        for (int c = 0; c < n_classes; ++c) {
            if (cells[i][c] == 0) continue;
            if (cursor[c] + cells[i][c] > pools[c].size())
                throw InfeasiblePartition("partition: class " + std::to_string(c) +
                                              " exhausted while filling client " +
                                              std::to_string(i),
                                          i, c);
            for (int j = 0; j < cells[i][c]; ++j) out.shards[i].push_back(pools[c][cursor[c]++]);
        }
        std::sort(out.shards[i].begin(), out.shards[i].end());
    }

    out.es_class_histogram.assign(n_es, std::vector<int>(n_classes, 0));
    for (int n = 0; n < n_es; ++n)
        for (int i : topology.coverage[n])
            for (int c = 0; c < n_classes; ++c) out.es_class_histogram[n][c] += cells[i][c];
    return out;
}

}  // namespace hhfl
