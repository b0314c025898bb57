#pragma once
#include <limits>

#include <cstdint>
#include <span>
#include <vector>

#include "hhfl/errors.hpp"
#include "hhfl/rng.hpp"

namespace hhfl {

/// Dense labeled dataset, features row-major.
struct LabeledDataset {
    std::vector<double> features;
    std::vector<int> labels;
    int num_classes = 0;
    int feature_dim = 0;

    int size() const { return static_cast<int>(labels.size()); }

    std::span<const double> row(int i) const {
        return {features.data() + static_cast<std::size_t>(i) * feature_dim,
                static_cast<std::size_t>(feature_dim)};
    }

    /// Copies the given rows into a new dataset.
    LabeledDataset subset(std::span<const int> indices) const {
        LabeledDataset out;
        out.num_classes = num_classes;
        out.feature_dim = feature_dim;
        out.features.reserve(indices.size() * feature_dim);
        out.labels.reserve(indices.size());
        for (int i : indices) {
            const auto r = row(i);
            out.features.insert(out.features.end(), r.begin(), r.end());
            out.labels.push_back(labels[i]);
        }
        return out;
    }

    std::vector<int> class_counts() const {
        std::vector<int> counts(num_classes, 0);
        for (int y : labels) ++counts[y];
        return counts;
    }
};

/// Synthetic Gaussian-blob classification data, the desk-scale stand-in for
/// image corpora. Class means are random Gaussian directions rescaled so the
/// minimum pairwise distance equals `separation` (the binding pair sits at
/// exactly that distance, the rest farther), and noise is unit isotropic.
/// Random means keep classes entangled across shared feature directions the
/// way natural image classes are, which matters for heterogeneity studies.
inline LabeledDataset synth_gaussian_classes(int num_classes, int feature_dim,
                                             int samples_per_class, double separation,
                                             std::uint64_t rng_seed) {
    if (num_classes <= 0 || feature_dim <= 0 || samples_per_class <= 0 || separation <= 0.0)
        throw InvalidConfig("synth_gaussian_classes: all parameters must be positive");

    std::vector<double> means(static_cast<std::size_t>(num_classes) * feature_dim, 0.0);
    RngStream rng = substream(rng_seed, 0x4D45u /*"ME"*/, 0);
    double min_dist = 0.0;
    while (min_dist < 1e-6) {
        for (double& v : means) v = rng.next_gaussian();
        min_dist = std::numeric_limits<double>::infinity();
        for (int a = 0; a < num_classes; ++a)
            for (int b = a + 1; b < num_classes; ++b) {
                double d2 = 0.0;
                for (int j = 0; j < feature_dim; ++j) {
                    const double diff = means[static_cast<std::size_t>(a) * feature_dim + j] -
                                        means[static_cast<std::size_t>(b) * feature_dim + j];
                    d2 += diff * diff;
                }
                min_dist = std::min(min_dist, std::sqrt(d2));
            }
    }
    for (double& v : means) v *= separation / min_dist;

    LabeledDataset data;
    data.num_classes = num_classes;
    data.feature_dim = feature_dim;
    data.features.resize(static_cast<std::size_t>(num_classes) * samples_per_class * feature_dim);
    data.labels.resize(static_cast<std::size_t>(num_classes) * samples_per_class);

    // Sample index s holds class s % num_classes so labels interleave.
    const int total = num_classes * samples_per_class;
    for (int s = 0; s < total; ++s) {
        const int c = s % num_classes;
        RngStream rng = substream(rng_seed, 0x5359u /*"SY"*/, static_cast<std::uint64_t>(s));
        data.labels[s] = c;
        for (int d = 0; d < feature_dim; ++d)
            data.features[static_cast<std::size_t>(s) * feature_dim + d] =
                means[static_cast<std::size_t>(c) * feature_dim + d] + rng.next_gaussian();
    }
    return data;
}

/// Deterministic stratified train/test split; returns (train, test) indices.
inline std::pair<std::vector<int>, std::vector<int>> stratified_split(
    const LabeledDataset& data, double test_fraction, std::uint64_t rng_seed) {
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw InvalidConfig("stratified_split: test_fraction must be in [0, 1)");
    std::vector<std::vector<int>> pools(data.num_classes);
    for (int i = 0; i < data.size(); ++i) pools[data.labels[i]].push_back(i);

    std::vector<int> train, test;
    for (int c = 0; c < data.num_classes; ++c) {
        RngStream rng = substream(rng_seed, 0x5350u /*"SP"*/, static_cast<std::uint64_t>(c));
        rng.shuffle(pools[c]);
        const int n_test = static_cast<int>(pools[c].size() * test_fraction);
        for (std::size_t j = 0; j < pools[c].size(); ++j)
            (static_cast<int>(j) < n_test ? test : train).push_back(pools[c][j]);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

}  // namespace hhfl
